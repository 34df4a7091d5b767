"""Conforming triangulations with uniform (red) and newest-vertex-bisection refinement.

A mesh stores flat index arrays: vertex coordinates, counterclockwise
triangles, the sorted edge list with triangle adjacency, boundary flags and
per-triangle bisection bookkeeping (refinement edge, generation).  Meshes are
immutable after construction; refinement returns a new mesh.

Edge conventions used throughout the package:

* local edge ``k`` of a triangle is the edge opposite local vertex ``k``;
* every edge has a fixed global frame: the unit normal ``n`` points from the
  ``plus`` triangle (the adjacent triangle with the smaller index) into the
  ``minus`` triangle, and outward on boundary edges; the tangent ``tau`` is
  ``n`` rotated by +90 degrees;
* jumps across an edge are ``plus`` trace minus ``minus`` trace, and equal the
  trace itself on boundary edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Mesh",
    "EdgeFrame",
    "build_mesh",
    "refine_uniform",
    "refine_nvb",
    "write_mesh",
    "read_mesh",
]


@dataclass(frozen=True)
class EdgeFrame:
    """Geometric frame of a single edge."""

    n: np.ndarray
    tau: np.ndarray
    h: float
    plus_tri: int
    minus_tri: int  # -1 on boundary edges


class Mesh:
    """Immutable conforming triangulation of a polygonal domain."""

    def __init__(self, vertices, triangles, edges, edge_tris, tri_edges,
                 vertex_on_boundary, edge_on_boundary, refinement_edge,
                 generation):
        self.vertices = vertices
        self.triangles = triangles
        self.edges = edges
        self.edge_tris = edge_tris
        self.tri_edges = tri_edges
        self.vertex_on_boundary = vertex_on_boundary
        self.edge_on_boundary = edge_on_boundary
        self.refinement_edge = refinement_edge
        self.generation = generation
        self._init_geometry()

    # -- construction helpers -------------------------------------------------

    def _init_geometry(self):
        p = self.vertices[self.triangles]  # (nt, 3, 2)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        self.areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        sides = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        self.side_lengths = np.linalg.norm(sides, axis=2)  # (nt, 3), side k opposite vertex k
        self.diameters = self.side_lengths.max(axis=1)
        self.centroids = p.mean(axis=1)

        ev = self.vertices[self.edges]  # (ne, 2, 2)
        d = ev[:, 1] - ev[:, 0]
        self.edge_lengths = np.linalg.norm(d, axis=1)
        self.edge_midpoints = ev.mean(axis=1)
        n = np.stack([d[:, 1], -d[:, 0]], axis=1) / self.edge_lengths[:, None]
        # orient n out of the plus triangle
        plus = self.edge_tris[:, 0]
        flip = np.einsum("ij,ij->i", n, self.edge_midpoints - self.centroids[plus]) < 0.0
        n[flip] *= -1.0
        self.edge_normals = n
        self.edge_tangents = np.stack([-n[:, 1], n[:, 0]], axis=1)

    # -- basic queries ---------------------------------------------------------

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def num_triangles(self):
        return len(self.triangles)

    def tri_coords(self, k):
        """Vertex coordinates of triangle ``k`` as a (3, 2) array."""
        return self.vertices[self.triangles[k]]

    def edge_frame(self, e):
        """Deterministic frame of edge ``e`` (normal, tangent, length, adjacency)."""
        return EdgeFrame(
            n=self.edge_normals[e],
            tau=self.edge_tangents[e],
            h=float(self.edge_lengths[e]),
            plus_tri=int(self.edge_tris[e, 0]),
            minus_tri=int(self.edge_tris[e, 1]),
        )

    def min_angle(self):
        """Smallest interior angle over all triangles, in radians."""
        p = self.vertices[self.triangles]
        angles = []
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            cosang = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
        return float(np.min(angles))


def _topology(vertices, triangles):
    """Edge list, adjacency, local-edge map and boundary flags for a triangle soup.

    Raises on edges shared by more than two triangles (non-conforming input).
    """
    nt = len(triangles)
    pairs = np.empty((3 * nt, 2), dtype=np.int64)
    for k in range(3):  # edge k opposite vertex k
        a = triangles[:, (k + 1) % 3]
        b = triangles[:, (k + 2) % 3]
        pairs[k * nt:(k + 1) * nt, 0] = np.minimum(a, b)
        pairs[k * nt:(k + 1) * nt, 1] = np.maximum(a, b)
    edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    if counts.max(initial=0) > 2:
        raise ValueError("non-conforming triangulation: an edge is shared by more than two triangles")

    tri_edges = inverse.reshape(3, nt).T.copy()
    ne = len(edges)
    edge_tris = np.full((ne, 2), -1, dtype=np.int64)
    order = np.argsort(inverse, kind="stable")
    tri_of_slot = order % nt
    slot_edges = inverse[order]
    start = 0
    for e, c in enumerate(counts):
        adj = np.sort(tri_of_slot[start:start + c])
        edge_tris[e, :c] = adj
        start += c
    assert np.all(slot_edges == np.repeat(np.arange(ne), counts))

    edge_on_boundary = counts == 1
    vertex_on_boundary = np.zeros(len(vertices), dtype=bool)
    vertex_on_boundary[edges[edge_on_boundary].ravel()] = True
    return edges, edge_tris, tri_edges, vertex_on_boundary, edge_on_boundary


def _assemble(vertices, triangles, refinement_edge=None, generation=None):
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise ValueError("vertices must be an (n, 2) array")
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise ValueError("triangles must be an (n, 3) array")
    if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
        raise ValueError("triangle references an unknown vertex")

    p = vertices[triangles]
    area2 = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    if np.any(area2 <= 0.0):
        bad = int(np.argmax(area2 <= 0.0))
        raise ValueError(f"triangle {bad} is degenerate or not counterclockwise")

    edges, edge_tris, tri_edges, vob, eob = _topology(vertices, triangles)

    if refinement_edge is None:
        sides = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        lengths = np.einsum("ikj,ikj->ik", sides, sides)
        # longest edge; ties resolved by the lowest local opposite-vertex index
        refinement_edge = np.argmax(lengths, axis=1).astype(np.int8)
    else:
        refinement_edge = np.asarray(refinement_edge, dtype=np.int8)
    if generation is None:
        generation = np.zeros(len(triangles), dtype=np.int64)
    else:
        generation = np.asarray(generation, dtype=np.int64)

    return Mesh(vertices, triangles, edges, edge_tris, tri_edges, vob, eob,
                refinement_edge, generation)


def build_mesh(vertices, triangles):
    """Build a mesh from raw vertex coordinates and counterclockwise triangles.

    The refinement edge of every triangle is initialised to its longest edge
    (ties broken by the lowest local opposite-vertex index) and the bisection
    generation to zero.
    """
    return _assemble(vertices, triangles)


def refine_uniform(mesh):
    """Red refinement: replace each triangle by four similar children."""
    nv = mesh.num_vertices
    new_vertices = np.vstack([mesh.vertices, mesh.edge_midpoints])
    t = mesh.triangles
    m = mesh.tri_edges + nv  # midpoint vertex of edge opposite local vertex k
    children = np.concatenate([
        np.stack([t[:, 0], m[:, 2], m[:, 1]], axis=1),
        np.stack([t[:, 1], m[:, 0], m[:, 2]], axis=1),
        np.stack([t[:, 2], m[:, 1], m[:, 0]], axis=1),
        np.stack([m[:, 0], m[:, 1], m[:, 2]], axis=1),
    ])
    generation = np.tile(mesh.generation, 4)
    return _assemble(new_vertices, children, generation=generation)


def refine_nvb(mesh, marked):
    """Newest-vertex bisection of the marked triangles plus conformity closure.

    Every marked triangle is bisected at least once.  Neighbours are bisected
    recursively until all bisected edges are refinement edges of both adjacent
    triangles, so the result is conforming.
    """
    marked = sorted(set(int(i) for i in marked))
    if not marked:
        return mesh
    if marked[0] < 0 or marked[-1] >= mesh.num_triangles:
        raise IndexError("marked triangle index out of range")

    # working triple list, rotated so the refinement edge is opposite slot 0
    tris = []
    for i in range(mesh.num_triangles):
        k = int(mesh.refinement_edge[i])
        t = mesh.triangles[i]
        tris.append((int(t[k]), int(t[(k + 1) % 3]), int(t[(k + 2) % 3])))
    gen = [int(g) for g in mesh.generation]
    verts = [tuple(v) for v in mesh.vertices]
    alive = [True] * len(tris)

    edge2tris = {}
    for i, (a, b, c) in enumerate(tris):
        for e in ((min(b, c), max(b, c)), (min(a, c), max(a, c)), (min(a, b), max(a, b))):
            edge2tris.setdefault(e, set()).add(i)

    midpoints = {}

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in midpoints:
            pa, pb = verts[a], verts[b]
            verts.append((0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])))
            midpoints[key] = len(verts) - 1
        return midpoints[key]

    def ref_edge(i):
        _, b, c = tris[i]
        return (min(b, c), max(b, c))

    def bisect(i):
        """Split triangle i at its refinement edge; children inherit NVB labels."""
        v0, v1, v2 = tris[i]
        m = midpoint(v1, v2)
        alive[i] = False
        for e in (ref_edge(i), (min(v0, v1), max(v0, v1)), (min(v0, v2), max(v0, v2))):
            edge2tris[e].discard(i)
        for child in ((m, v0, v1), (m, v2, v0)):
            tris.append(child)
            gen.append(gen[i] + 1)
            alive.append(True)
            j = len(tris) - 1
            a, b, c = child
            for e in ((min(b, c), max(b, c)), (min(a, c), max(a, c)), (min(a, b), max(a, b))):
                edge2tris.setdefault(e, set()).add(j)

    def refine_once(i):
        """Bisect triangle i, recursively pre-refining incompatible neighbours."""
        stack = [i]
        on_stack = {i}
        while stack:
            s = stack[-1]
            if not alive[s]:
                stack.pop()
                on_stack.discard(s)
                continue
            e = ref_edge(s)
            others = [j for j in edge2tris.get(e, ()) if j != s and alive[j]]
            nbr = others[0] if others else None
            if nbr is None or ref_edge(nbr) == e:
                bisect(s)
                if nbr is not None:
                    bisect(nbr)
                stack.pop()
                on_stack.discard(s)
            else:
                if nbr in on_stack:
                    raise RuntimeError("incompatible refinement-edge assignment (closure cycle)")
                stack.append(nbr)
                on_stack.add(nbr)

    for i in marked:
        if alive[i]:
            refine_once(i)
        # else: already bisected during an earlier closure chain

    keep = [i for i in range(len(tris)) if alive[i]]
    new_tris = np.array([tris[i] for i in keep], dtype=np.int64)
    new_gen = np.array([gen[i] for i in keep], dtype=np.int64)
    ref = np.zeros(len(keep), dtype=np.int8)  # rotated triples: refinement edge opposite slot 0
    return _assemble(np.array(verts, dtype=np.float64), new_tris,
                     refinement_edge=ref, generation=new_gen)


def write_mesh(mesh, path):
    """Write the plain-text mesh format: ``V E T`` header, vertex and triangle lines."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.num_vertices} {mesh.num_edges} {mesh.num_triangles}\n")
        for (x, y), b in zip(mesh.vertices, mesh.vertex_on_boundary):
            fh.write(f"{float(x)!r} {float(y)!r} {int(b)}\n")
        for t in mesh.triangles:
            fh.write(f"{t[0]} {t[1]} {t[2]}\n")


def read_mesh(path):
    """Read the plain-text mesh format written by :func:`write_mesh`.

    Topology is rebuilt from scratch; the stored edge count and boundary flags
    are validated against the recomputed ones.
    """
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError("malformed mesh header, expected 'V E T'")
        nv, ne, nt = (int(x) for x in header)
        vertices = np.empty((nv, 2))
        bflags = np.empty(nv, dtype=bool)
        for i in range(nv):
            x, y, b = fh.readline().split()
            vertices[i] = (float(x), float(y))
            bflags[i] = bool(int(b))
        triangles = np.empty((nt, 3), dtype=np.int64)
        for i in range(nt):
            triangles[i] = [int(x) for x in fh.readline().split()]
    mesh = build_mesh(vertices, triangles)
    if mesh.num_edges != ne:
        raise ValueError(f"stored edge count {ne} does not match recomputed {mesh.num_edges}")
    if not np.array_equal(mesh.vertex_on_boundary, bflags):
        raise ValueError("stored boundary flags do not match recomputed topology")
    return mesh
