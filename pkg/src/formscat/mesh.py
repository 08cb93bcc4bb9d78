"""Structured simplicial meshes of an interval (1D) and a rectangle (2D).

Meshes are deterministic: rectangle cells are always split along the
lower-left to upper-right diagonal and nodes are ordered lexicographically
with x varying fastest, so node selections and assembled matrices are
bit-reproducible across runs.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Mesh",
    "build_interval_mesh",
    "build_rectangle_mesh",
    "mesh_to_csv",
]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable simplicial mesh.

    Attributes
    ----------
    dim : 1 or 2
    nodes : (n_nodes, dim) float array of coordinates
    elements : (n_elems, dim+1) int array; positively oriented
        (CCW vertex order in 2D, left-to-right in 1D)
    boundary_facets : (n_facets, dim) int array; single nodes in 1D,
        edges in 2D ordered counter-clockwise around the domain so the
        outward normal is the tangent rotated by -90 degrees
    facet_tags : per-facet side label ("left"/"right" in 1D;
        "bottom"/"right"/"top"/"left" in 2D)
    bbox : (mins, maxs) of the declared domain
    """

    dim: int
    nodes: np.ndarray
    elements: np.ndarray
    boundary_facets: np.ndarray
    facet_tags: tuple[str, ...]
    bbox: tuple[tuple[float, ...], tuple[float, ...]]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def element_measures(self) -> np.ndarray:
        """Lengths (1D) or areas (2D, positive for CCW elements)."""
        if self.dim == 1:
            x = self.nodes[:, 0]
            return x[self.elements[:, 1]] - x[self.elements[:, 0]]
        p = self.nodes
        a, b, c = (p[self.elements[:, k]] for k in range(3))
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                      - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    def facet_measures(self) -> np.ndarray:
        """Facet measures: 1.0 per endpoint in 1D, edge lengths in 2D."""
        if self.dim == 1:
            return np.ones(len(self.boundary_facets))
        p = self.nodes
        d = p[self.boundary_facets[:, 1]] - p[self.boundary_facets[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def facet_normals(self) -> np.ndarray:
        """Outward unit normals, one per boundary facet."""
        if self.dim == 1:
            return np.array([[-1.0] if t == "left" else [1.0] for t in self.facet_tags])
        p = self.nodes
        d = p[self.boundary_facets[:, 1]] - p[self.boundary_facets[:, 0]]
        lengths = np.hypot(d[:, 0], d[:, 1])
        # boundary is traversed CCW, outward normal = (ty, -tx)
        return np.column_stack((d[:, 1], -d[:, 0])) / lengths[:, None]

    def boundary_nodes(self) -> np.ndarray:
        """Sorted unique indices of nodes on the topological boundary."""
        return np.unique(self.boundary_facets.ravel())


def build_interval_mesh(a: float, b: float, n_elems: int) -> Mesh:
    """Uniform mesh of the interval (a, b) with n_elems segments."""
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    if n_elems < 1:
        raise ValueError(f"need n_elems >= 1, got {n_elems}")
    nodes = np.linspace(a, b, n_elems + 1)[:, None]
    elements = np.column_stack((np.arange(n_elems), np.arange(1, n_elems + 1)))
    facets = np.array([[0], [n_elems]], dtype=np.int64)
    return Mesh(
        dim=1,
        nodes=nodes,
        elements=elements.astype(np.int64),
        boundary_facets=facets,
        facet_tags=("left", "right"),
        bbox=((a,), (b,)),
    )


def build_rectangle_mesh(lx: float, ly: float, nx: int, ny: int) -> Mesh:
    """Triangulated (0,lx) x (0,ly) rectangle on an nx-by-ny grid.

    Each grid cell is split along its lower-left to upper-right diagonal
    into two CCW triangles.  Node index = iy*(nx+1) + ix (x fastest).
    """
    if lx <= 0 or ly <= 0:
        raise ValueError(f"need positive side lengths, got lx={lx}, ly={ly}")
    if nx < 1 or ny < 1:
        raise ValueError(f"need nx, ny >= 1, got nx={nx}, ny={ny}")
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # row = iy, col = ix
    nodes = np.column_stack((X.ravel(), Y.ravel()))

    def idx(ix: int, iy: int) -> int:
        return iy * (nx + 1) + ix

    elements = []
    for iy in range(ny):
        for ix in range(nx):
            a = idx(ix, iy)
            b = idx(ix + 1, iy)
            c = idx(ix + 1, iy + 1)
            d = idx(ix, iy + 1)
            elements.append((a, b, c))
            elements.append((a, c, d))

    facets = []
    tags = []
    for ix in range(nx):  # bottom, left to right
        facets.append((idx(ix, 0), idx(ix + 1, 0)))
        tags.append("bottom")
    for iy in range(ny):  # right, bottom to top
        facets.append((idx(nx, iy), idx(nx, iy + 1)))
        tags.append("right")
    for ix in range(nx, 0, -1):  # top, right to left
        facets.append((idx(ix, ny), idx(ix - 1, ny)))
        tags.append("top")
    for iy in range(ny, 0, -1):  # left, top to bottom
        facets.append((idx(0, iy), idx(0, iy - 1)))
        tags.append("left")

    return Mesh(
        dim=2,
        nodes=nodes,
        elements=np.asarray(elements, dtype=np.int64),
        boundary_facets=np.asarray(facets, dtype=np.int64),
        facet_tags=tuple(tags),
        bbox=((0.0, 0.0), (lx, ly)),
    )


def mesh_to_csv(mesh: Mesh) -> tuple[str, str]:
    """Export (node_table, element_table) as CSV text for debugging.

    Node table: node,x[,y].  Element table: element,n0,n1[,n2].
    """
    nbuf = io.StringIO()
    if mesh.dim == 1:
        nbuf.write("node,x\n")
        for i, (x,) in enumerate(mesh.nodes):
            nbuf.write(f"{i},{float(x)!r}\n")
        ebuf = io.StringIO()
        ebuf.write("element,n0,n1\n")
        for e, (i, j) in enumerate(mesh.elements):
            ebuf.write(f"{e},{i},{j}\n")
    else:
        nbuf.write("node,x,y\n")
        for i, (x, y) in enumerate(mesh.nodes):
            nbuf.write(f"{i},{float(x)!r},{float(y)!r}\n")
        ebuf = io.StringIO()
        ebuf.write("element,n0,n1,n2\n")
        for e, (i, j, k) in enumerate(mesh.elements):
            ebuf.write(f"{e},{i},{j},{k}\n")
    return nbuf.getvalue(), ebuf.getvalue()
