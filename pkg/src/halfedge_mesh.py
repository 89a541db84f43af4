"""Halfedge triangle mesh with OBJ I/O and topology queries"""
import logging
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np


logger = logging.getLogger(__name__)


class MeshError(Exception):
    """Base exception for mesh construction and parsing"""
    pass


class ParseError(MeshError):
    """Malformed OBJ content"""
    pass


class NonManifold(MeshError):
    """Edge with more than two incident faces, or a pinched vertex"""
    pass


class NonTriangular(MeshError):
    """Face whose arity is not 3"""
    pass


class NonOrientable(MeshError):
    """Two faces traverse a shared edge in the same direction"""
    pass


@dataclass(frozen=True)
class TopologyReport:
    """Counts and topological invariants of a mesh"""
    num_vertices: int
    num_edges: int
    num_faces: int
    euler_characteristic: int
    genus: int
    num_boundary_loops: int

    def to_dict(self) -> dict:
        return asdict(self)


class Mesh:
    """
    Immutable manifold triangle mesh.

    Halfedges 3f, 3f+1, 3f+2 belong to face f and run v0->v1, v1->v2, v2->v0.
    Boundary halfedges are appended after the face halfedges, have face -1
    and are linked by `he_next` into closed loops. Per-edge data is indexed by
    `edges`, whose rows are sorted vertex pairs.
    """

    def __init__(self, positions: np.ndarray, faces: Sequence[Sequence[int]]):
        self.positions = np.array(positions, dtype=float).reshape(-1, 3)
        self.faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
        self.positions.setflags(write=False)
        self.faces.setflags(write=False)
        self._build()

    # Construction

    def _build(self):
        num_v = len(self.positions)
        num_f = len(self.faces)

        if num_f and (self.faces.min() < 0 or self.faces.max() >= num_v):
            raise MeshError("Face references a vertex index out of range")

        directed: Dict[Tuple[int, int], int] = {}
        undirected_count: Dict[Tuple[int, int], int] = {}
        origin = []
        for f, (a, b, c) in enumerate(self.faces.tolist()):
            if a == b or b == c or c == a:
                raise NonManifold(f"Face {f} repeats a vertex: {(a, b, c)}")
            for k, (p, q) in enumerate(((a, b), (b, c), (c, a))):
                key = (min(p, q), max(p, q))
                undirected_count[key] = undirected_count.get(key, 0) + 1
                if undirected_count[key] > 2:
                    raise NonManifold(f"Edge {key} has more than two incident faces")
                if (p, q) in directed:
                    raise NonOrientable(f"Edge {key} is traversed twice in direction {p}->{q}")
                directed[(p, q)] = 3 * f + k
                origin.append(p)

        num_face_he = 3 * num_f
        he_origin = list(origin)
        he_face = [h // 3 for h in range(num_face_he)]
        he_next = [3 * (h // 3) + (h % 3 + 1) % 3 for h in range(num_face_he)]
        he_twin = [-1] * num_face_he

        # Twins, creating boundary halfedges where a face halfedge is unmatched
        boundary_out: Dict[int, int] = {}
        for (p, q), h in directed.items():
            twin = directed.get((q, p))
            if twin is not None:
                he_twin[h] = twin
                continue
            b = len(he_origin)
            he_origin.append(q)
            he_face.append(-1)
            he_next.append(-1)
            he_twin.append(h)
            he_twin[h] = b
            if q in boundary_out:
                raise NonManifold(f"Vertex {q} has more than one boundary fan")
            boundary_out[q] = b

        # Boundary loop linkage: b runs q->p, the next boundary halfedge leaves p
        for b in range(num_face_he, len(he_origin)):
            dest = he_origin[he_twin[b]]
            he_next[b] = boundary_out[dest]

        self.he_origin = np.array(he_origin, dtype=np.int64)
        self.he_twin = np.array(he_twin, dtype=np.int64)
        self.he_next = np.array(he_next, dtype=np.int64)
        self.he_face = np.array(he_face, dtype=np.int64)
        self.he_prev = np.empty_like(self.he_next)
        self.he_prev[self.he_next] = np.arange(len(self.he_next))

        # Edges: one per unordered pair, ordered by first appearance
        edge_lookup: Dict[Tuple[int, int], int] = {}
        he_edge = np.empty(len(he_origin), dtype=np.int64)
        for h in range(len(he_origin)):
            p = he_origin[h]
            q = he_origin[he_twin[h]]
            key = (min(p, q), max(p, q))
            if key not in edge_lookup:
                edge_lookup[key] = len(edge_lookup)
            he_edge[h] = edge_lookup[key]
        self._edge_lookup = edge_lookup
        self.edges = np.array(sorted(edge_lookup, key=edge_lookup.get), dtype=np.int64).reshape(-1, 2)
        self.he_edge = he_edge

        # Edge opposite each local corner of each face
        self.face_edges = np.empty((num_f, 3), dtype=np.int64)
        for f in range(num_f):
            # halfedge 3f+k runs corner k -> corner k+1, opposite corner k+2
            for k in range(3):
                self.face_edges[f, (k + 2) % 3] = he_edge[3 * f + k]

        self.is_boundary_halfedge = self.he_face < 0
        self.is_boundary_edge = np.zeros(len(self.edges), dtype=bool)
        self.is_boundary_edge[he_edge[self.is_boundary_halfedge]] = True
        self.is_boundary_vertex = np.zeros(num_v, dtype=bool)
        self.is_boundary_vertex[self.he_origin[self.is_boundary_halfedge]] = True

        self._build_vertex_halfedges(boundary_out)

    def _build_vertex_halfedges(self, boundary_out: Dict[int, int]):
        num_v = len(self.positions)
        face_count = np.bincount(self.faces.ravel(), minlength=num_v)
        self.vertex_halfedge = np.full(num_v, -1, dtype=np.int64)
        for h in range(3 * len(self.faces)):
            v = self.he_origin[h]
            if self.vertex_halfedge[v] < 0:
                self.vertex_halfedge[v] = h
        for v, b in boundary_out.items():
            # first interior outgoing halfedge after the boundary one
            self.vertex_halfedge[v] = self.he_twin[self.he_prev[b]]

        for v in range(num_v):
            if face_count[v] == 0:
                logger.warning(f"Vertex {v} is not referenced by any face")
                continue
            if len(self.one_ring_faces(v)) != face_count[v]:
                raise NonManifold(f"Vertex {v} has a disconnected one-ring")

    # Sizes

    @property
    def num_vertices(self) -> int:
        return len(self.positions)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    # Queries

    def edge_index(self, i: int, j: int) -> int:
        """Index of the edge joining vertices i and j (KeyError if absent)"""
        return self._edge_lookup[(min(i, j), max(i, j))]

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self._edge_lookup

    def one_ring_faces(self, v: int) -> List[int]:
        """
        Faces around vertex v in rotational order.

        Boundary vertices yield an open fan that starts next to the boundary.
        """
        start = int(self.vertex_halfedge[v])
        if start < 0:
            return []
        faces = []
        h = start
        while True:
            face = int(self.he_face[h])
            if face < 0:
                break
            faces.append(face)
            h = int(self.he_twin[self.he_prev[h]])
            if h == start:
                break
        return faces

    def vertex_neighbors(self, v: int) -> List[int]:
        """Neighbour vertices of v, in the same rotational order as one_ring_faces"""
        start = int(self.vertex_halfedge[v])
        if start < 0:
            return []
        neighbors = []
        h = start
        while True:
            neighbors.append(int(self.he_origin[self.he_twin[h]]))
            if self.he_face[h] < 0:
                break
            h = int(self.he_twin[self.he_prev[h]])
            if h == start:
                break
        return neighbors

    def boundary_loops(self) -> List[List[int]]:
        """Boundary loops as vertex sequences"""
        seen = set()
        loops = []
        for b in np.flatnonzero(self.is_boundary_halfedge).tolist():
            if b in seen:
                continue
            loop = []
            h = b
            while h not in seen:
                seen.add(h)
                loop.append(int(self.he_origin[h]))
                h = int(self.he_next[h])
            loops.append(loop)
        return loops

    def embedded_edge_lengths(self) -> np.ndarray:
        """Euclidean edge lengths of the 3D embedding, indexed by edge"""
        diff = self.positions[self.edges[:, 0]] - self.positions[self.edges[:, 1]]
        return np.linalg.norm(diff, axis=1)

    def corner_angles_from_positions(self) -> np.ndarray:
        """Corner angles (F, 3) of the 3D embedding"""
        p = self.positions[self.faces]
        angles = np.empty((self.num_faces, 3))
        for a in range(3):
            e1 = p[:, (a + 1) % 3] - p[:, a]
            e2 = p[:, (a + 2) % 3] - p[:, a]
            cos = np.einsum('ij,ij->i', e1, e2) / (np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1))
            angles[:, a] = np.arccos(np.clip(cos, -1.0, 1.0))
        return angles

    def with_faces(self, faces: Sequence[Sequence[int]]) -> "Mesh":
        """New mesh sharing these positions with different connectivity"""
        return Mesh(self.positions, faces)


def topology(mesh: Mesh) -> TopologyReport:
    """Euler characteristic, genus and boundary count"""
    chi = mesh.num_vertices - mesh.num_edges + mesh.num_faces
    loops = len(mesh.boundary_loops())
    genus = (2 - chi - loops) // 2
    return TopologyReport(
        num_vertices=mesh.num_vertices,
        num_edges=mesh.num_edges,
        num_faces=mesh.num_faces,
        euler_characteristic=chi,
        genus=genus,
        num_boundary_loops=loops,
    )


def one_ring_faces(mesh: Mesh, v: int) -> List[int]:
    return mesh.one_ring_faces(v)


def load_obj(path: str) -> Mesh:
    """
    Load a triangle mesh from a Wavefront OBJ file.

    Only `v` and `f` records are read; texture and normal indices on faces
    are ignored, as are all other record types.

    Raises:
        ParseError: unreadable file or malformed record
        NonTriangular: a face with arity other than 3
        NonManifold / NonOrientable: invalid connectivity
    """
    obj_file = Path(path)
    try:
        lines = obj_file.read_text(encoding='utf-8').splitlines()
    except (IOError, UnicodeDecodeError) as e:
        raise ParseError(f"Error reading OBJ file {path}: {e}")

    positions: List[List[float]] = []
    faces: List[List[int]] = []
    for line_no, line in enumerate(lines, 1):
        tokens = line.split()
        if not tokens or tokens[0].startswith('#'):
            continue
        try:
            if tokens[0] == 'v':
                if len(tokens) < 4:
                    raise ParseError(f"line {line_no}: vertex needs 3 coordinates")
                positions.append([float(x) for x in tokens[1:4]])
            elif tokens[0] == 'f':
                if len(tokens) != 4:
                    raise NonTriangular(f"line {line_no}: face has {len(tokens) - 1} vertices")
                face = []
                for token in tokens[1:]:
                    index = int(token.split('/')[0])
                    if index == 0:
                        raise ParseError(f"line {line_no}: vertex index 0 is not valid in OBJ")
                    # OBJ is 1-based; negative indices count back from the last vertex
                    face.append(index - 1 if index > 0 else len(positions) + index)
                faces.append(face)
        except ValueError as e:
            raise ParseError(f"line {line_no}: {e}")

    if not faces:
        raise ParseError(f"No faces found in {path}")

    mesh = Mesh(np.array(positions), faces)
    logger.info(f"Loaded {path}: V={mesh.num_vertices} E={mesh.num_edges} F={mesh.num_faces}")
    return mesh


def save_obj(mesh: Mesh, path: str, uv: Optional[np.ndarray] = None):
    """Write the mesh as OBJ; `vt` records are added when uv is given"""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"v {repr(float(x))} {repr(float(y))} {repr(float(z))}" for x, y, z in mesh.positions]
    if uv is not None:
        lines.extend(f"vt {repr(float(s))} {repr(float(t))}" for s, t in uv)
        lines.extend(f"f {a + 1}/{a + 1} {b + 1}/{b + 1} {c + 1}/{c + 1}" for a, b, c in mesh.faces.tolist())
    else:
        lines.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist())
    with open(out, 'w', encoding='utf-8') as f:
        f.write("\n".join(lines) + "\n")
