"""Ricci Flow Toolkit - Source Package"""
