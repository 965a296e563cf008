"""Structured meshes of the truncated reference domains.

All meshes are tensor grids: triangles (each grid cell split in two) for the
strip ``(x, z)`` and the meridian ``(x, r)``, boxes with trilinear elements
for the straight layer in cylindrical coordinates ``(x, r, phi)``.  Grids are
graded geometrically away from the bend (``z = 0``) or the vertex (``r = 0``).

Layer meshes keep every grid node, including the copies of the axis line for
each ``phi`` and, for a full turn, the duplicate plane ``phi = start + 2 pi``.
:meth:`Mesh.representatives` tells which nodes are the same physical point.
"""
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, MeshError
from .geometry import TWO_PI, LayerSpec

BOUNDARY_TAGS = ("dirichlet_wall", "dirichlet_truncation", "symmetry_plane", "axis")
WALL, TRUNCATION, SYMMETRY, AXIS = range(4)
DIRICHLET_TAGS = (WALL, TRUNCATION)

KINDS = ("strip", "meridian", "layer")
_DEFAULT_GRADING = 1.15


@dataclass(frozen=True)
class Mesh:
    """Conforming mesh with region and boundary tags.

    Attributes
    ----------
    nodes : (n, d) float array
        Reference coordinates ``(x, z)``, ``(x, r)`` or ``(x, r, phi)``.
    elements : (ne, 3) or (ne, 8) int array
        Triangles (counter-clockwise) or boxes with corner ``a + 2 b + 4 c``
        at grid offset ``(a, b, c)``.
    region : (ne,) int array
        Sign of ``z`` for the strip, 0 for the meridian, face index for layers.
    facets : (nf, 2) or (nf, 4) int array
    facet_tags : (nf,) int array
        Indices into :data:`BOUNDARY_TAGS`.
    h : float
        Nominal (smallest) element size.
    kind : str
        One of ``strip``, ``meridian``, ``layer``.
    periodic : bool
        Layer meshes covering a full turn in ``phi``.
    """

    nodes: np.ndarray
    elements: np.ndarray
    region: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    h: float
    kind: str
    periodic: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MeshError(f"unknown mesh kind {self.kind!r}")
        for name, dtype in (("nodes", float), ("elements", np.int64), ("region", np.int64),
                            ("facets", np.int64), ("facet_tags", np.int64)):
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self):
        return self.nodes.shape[1]

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    def element_measures(self):
        """Triangle areas or coordinate-box volumes."""
        p = self.nodes[self.elements]
        if self.dim == 2:
            d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
            return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return np.prod(p[:, 7] - p[:, 0], axis=1)

    def axes(self):
        """Grid lines along each coordinate."""
        return tuple(np.unique(self.nodes[:, k]) for k in range(self.dim))

    def representatives(self, collapse_axis=True):
        """Index of the canonical node for every node.

        Axis nodes of a layer mesh sharing ``x`` are one physical point; so are
        the two ends of a periodic ``phi`` range.
        """
        rep = np.arange(self.n_nodes)
        if self.kind != "layer":
            return rep
        xs, rs, ps = self.axes()
        nx, nr = xs.size, rs.size
        i = np.searchsorted(xs, self.nodes[:, 0])
        j = np.searchsorted(rs, self.nodes[:, 1])
        k = np.searchsorted(ps, self.nodes[:, 2])
        if self.periodic:
            k = np.where(k == ps.size - 1, 0, k)
        if collapse_axis:
            k = np.where(j == 0, 0, k)
        return i + nx * (j + nr * k)


# ---------------------------------------------------------------------------
# grid lines
# ---------------------------------------------------------------------------

def graded_steps(length, h, grading, core=0.0, max_ratio=None):
    """Cell sizes covering ``length``.

    Cells of size ``h`` fill the first ``core`` units; after that sizes grow by
    ``grading`` per cell, optionally capped at ``max_ratio * h``.  All sizes are
    finally scaled by a common factor ``<= 1`` so they sum to ``length``; with
    the defaults the steps form an exact geometric sequence.
    """
    if not length > 0 or not h > 0:
        raise DomainError("length and h must be positive")
    if grading < 1:
        raise DomainError(f"grading must be >= 1, got {grading!r}")
    if core < 0:
        raise DomainError(f"core must be >= 0, got {core!r}")
    if max_ratio is not None and max_ratio < 1:
        raise DomainError(f"max_ratio must be >= 1, got {max_ratio!r}")
    n_core = min(math.floor(core / h + 1e-12), math.ceil(length / h - 1e-12))
    rest = length - n_core * h
    if rest <= 1e-12 * length:
        n = max(1, math.ceil(length / h - 1e-12))
        return np.full(n, length / n)
    cap = np.inf if max_ratio is None else max_ratio * h
    steps = list(np.full(n_core, h))
    total, size = n_core * h, h
    while total < length * (1 - 1e-12):
        steps.append(size)
        total += size
        size = min(size * grading, cap)
    steps = np.asarray(steps)
    return steps * (length / steps.sum())


def _lines(steps, length):
    out = np.concatenate([[0.0], np.cumsum(steps)])
    # rounding in the cumulative sum must not move the truncation boundary
    out[-1] = length
    return out


def _uniform_x(h):
    n = max(2, math.ceil(1.0 / h - 1e-12))
    xs = np.linspace(0.0, 1.0, n + 1)
    return xs


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _build_tri(kind, xs, ys, cell_region, h):
    nx, ny = xs.size, ys.size
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = lambda i, j: i + nx * j
    I, J = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="xy")
    I, J = I.ravel(), J.ravel()
    n00, n10, n01, n11 = idx(I, J), idx(I + 1, J), idx(I, J + 1), idx(I + 1, J + 1)
    reg = np.asarray(cell_region)[J]
    upper = reg >= 0
    # diagonals run along x + |z| = const, the direction the bending maps shear
    # toward; the other orientation produces near-flat triangles at small angles
    t1 = np.where(upper[:, None], np.column_stack([n00, n10, n01]), np.column_stack([n00, n10, n11]))
    t2 = np.where(upper[:, None], np.column_stack([n10, n11, n01]), np.column_stack([n00, n11, n01]))
    elements = np.stack([t1, t2], axis=1).reshape(-1, 3)
    region = np.repeat(reg, 2)

    facets, tags = [], []
    ix = np.arange(nx - 1)
    jy = np.arange(ny - 1)
    for i_wall in (0, nx - 1):
        facets.append(np.column_stack([idx(i_wall, jy), idx(i_wall, jy + 1)]))
        tags.append(np.full(jy.size, WALL))
    bottom_tag = AXIS if kind == "meridian" else TRUNCATION
    facets.append(np.column_stack([idx(ix, 0), idx(ix + 1, 0)]))
    tags.append(np.full(ix.size, bottom_tag))
    facets.append(np.column_stack([idx(ix, ny - 1), idx(ix + 1, ny - 1)]))
    tags.append(np.full(ix.size, TRUNCATION))
    return Mesh(nodes, elements, region, np.vstack(facets), np.concatenate(tags), h, kind)


def _build_hex(xs, rs, ps, cell_region, h, periodic):
    nx, nr, npn = xs.size, rs.size, ps.size
    P, R, X = np.meshgrid(ps, rs, xs, indexing="ij")
    nodes = np.column_stack([X.ravel(), R.ravel(), P.ravel()])
    idx = lambda i, j, k: i + nx * (j + nr * k)
    K, J, I = np.meshgrid(np.arange(npn - 1), np.arange(nr - 1), np.arange(nx - 1), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    corners = [idx(I + a, J + b, K + c) for c in (0, 1) for b in (0, 1) for a in (0, 1)]
    elements = np.column_stack(corners)
    region = np.asarray(cell_region)[K]

    def quads(fixed_axis, value):
        ranges = [np.arange(nx - 1), np.arange(nr - 1), np.arange(npn - 1)]
        ranges[fixed_axis] = np.array([value])
        A, B, C = np.meshgrid(*ranges, indexing="ij")
        A, B, C = A.ravel(), B.ravel(), C.ravel()
        offs = [(0, 0), (1, 0), (1, 1), (0, 1)]
        cols = []
        for u, v in offs:
            d = [0, 0, 0]
            free = [ax for ax in range(3) if ax != fixed_axis]
            d[free[0]], d[free[1]] = u, v
            cols.append(idx(A + d[0], B + d[1], C + d[2]))
        return np.column_stack(cols)

    facets, tags = [], []
    for value in (0, nx - 1):
        f = quads(0, value)
        facets.append(f)
        tags.append(np.full(len(f), WALL))
    f = quads(1, 0)
    facets.append(f)
    tags.append(np.full(len(f), AXIS))
    f = quads(1, nr - 1)
    facets.append(f)
    tags.append(np.full(len(f), TRUNCATION))
    if not periodic:
        for value in (0, npn - 1):
            f = quads(2, value)
            facets.append(f)
            tags.append(np.full(len(f), SYMMETRY))
    return Mesh(nodes, elements, region, np.vstack(facets), np.concatenate(tags), h, "layer", periodic)


# ---------------------------------------------------------------------------
# public constructors
# ---------------------------------------------------------------------------

def mesh_strip(L, h, grading=_DEFAULT_GRADING, core=0.0, max_ratio=None):
    """Triangulate ``(0, 1) x (-L, L)`` with a node line at ``z = 0``.

    Cells grow by ``grading`` away from ``z = 0``; the mesh is mirror
    symmetric, element regions carry the sign of ``z``.
    """
    if not L > 0 or not h > 0:
        raise DomainError("L and h must be positive")
    if h >= 2 * L or h > L:
        raise MeshError(f"h={h!r} leaves fewer than two cells across (-L, L) with L={L!r}")
    up = _lines(graded_steps(L, h, grading, core, max_ratio), L)
    zs = np.concatenate([-up[:0:-1], up])
    n_half = up.size - 1
    cell_region = np.concatenate([-np.ones(n_half, int), np.ones(n_half, int)])
    return _build_tri("strip", _uniform_x(h), zs, cell_region, h)


def mesh_meridian(r_max, h, grading=_DEFAULT_GRADING, core=0.0, max_ratio=None):
    """Triangulate the meridian ``(0, 1) x (0, r_max)``, graded away from the axis."""
    if not r_max > 1:
        raise DomainError(f"r_max must exceed 1, got {r_max!r}")
    if not h > 0:
        raise DomainError("h must be positive")
    if h >= 2 * r_max or h > r_max:
        raise MeshError(f"h={h!r} too large for r_max={r_max!r}")
    rs = _lines(graded_steps(r_max, h, grading, core, max_ratio), r_max)
    return _build_tri("meridian", _uniform_x(h), rs, np.zeros(rs.size - 1, int), h)


def _clustered(lo, hi, n, ratio, toward_hi):
    """``n + 1`` lines on ``[lo, hi]`` whose spacing shrinks by ``ratio`` toward one end."""
    steps = ratio ** np.arange(n)[::-1] if toward_hi else ratio ** np.arange(n)
    lines = lo + (hi - lo) * np.concatenate([[0.0], np.cumsum(steps)]) / steps.sum()
    lines[-1] = hi
    return lines


def _layer_phi_lines(spec, phi_steps, phi_grading=1.0):
    # spacing shrinks toward the edges, where ground states concentrate
    if spec.symmetry_subspace:
        c0 = spec.face_azimuths[0]
        lines = _clustered(c0, c0 + 0.5 * spec.sector_angles[0], phi_steps, phi_grading, True)
        return lines, np.zeros(phi_steps, int)
    bounds = spec.sector_bounds
    pieces, regions = [], []
    for j, (lo, hi) in enumerate(bounds):
        c = spec.face_azimuths[j]
        left = _clustered(lo, c, phi_steps, phi_grading, False)[:-1]
        right = _clustered(c, hi, phi_steps, phi_grading, True)[:-1]
        pieces += [left, right]
        regions.append(np.full(2 * phi_steps, j))
    lines = np.concatenate(pieces + [[bounds[0, 0] + TWO_PI]])
    return lines, np.concatenate(regions)


def mesh_layer_sector(spec, h, grading=_DEFAULT_GRADING, phi_steps=6, core=0.0, max_ratio=None,
                      phi_grading=1.0):
    """Box mesh of the straight layer in ``(x, r, phi)``.

    With ``spec.symmetry_subspace`` only the half-sector between the first face
    normal and the adjacent edge is meshed, with symmetry planes at both ends.
    Otherwise the full turn is meshed: every sector is cut at its face-normal
    azimuth and each half gets ``phi_steps`` cells, so cell faces align with the
    sector interfaces.
    """
    if not isinstance(spec, LayerSpec):
        raise DomainError("mesh_layer_sector needs a LayerSpec")
    if spec.symmetry_subspace and not spec.is_regular:
        raise MeshError("symmetric-subspace mesh requested for a non-regular layer")
    if not h > 0:
        raise DomainError("h must be positive")
    if h > spec.r_max:
        raise MeshError(f"h={h!r} too large for r_max={spec.r_max!r}")
    phi_steps = int(phi_steps)
    if phi_steps < 1:
        raise DomainError("phi_steps must be positive")
    rs = _lines(graded_steps(spec.r_max, h, grading, core, max_ratio), spec.r_max)
    if phi_grading < 1:
        raise DomainError(f"phi_grading must be >= 1, got {phi_grading!r}")
    ps, cell_region = _layer_phi_lines(spec, phi_steps, phi_grading)
    return _build_hex(_uniform_x(h), rs, ps, cell_region, h, not spec.symmetry_subspace)


def _midpoints(lines):
    mids = 0.5 * (lines[:-1] + lines[1:])
    out = np.empty(2 * lines.size - 1)
    out[0::2], out[1::2] = lines, mids
    return out


def _cell_regions_along(mesh, axis):
    """Region of every grid cell along ``axis`` (regions depend on one index only)."""
    lines = mesh.axes()[axis]
    lo = mesh.nodes[mesh.elements].min(axis=1)[:, axis]
    k = np.searchsorted(lines, lo)
    out = np.zeros(lines.size - 1, int)
    out[k] = mesh.region
    return out


def refine(mesh):
    """Uniform refinement: every grid cell is split at its edge midpoints.

    Children inherit the region of their parent and the boundary tags of the
    facets they subdivide; ``h`` is halved.
    """
    axes = mesh.axes()
    fine = tuple(_midpoints(a) for a in axes)
    if mesh.kind in ("strip", "meridian"):
        cell_region = np.repeat(_cell_regions_along(mesh, 1), 2)
        return _build_tri(mesh.kind, fine[0], fine[1], cell_region, 0.5 * mesh.h)
    cell_region = np.repeat(_cell_regions_along(mesh, 2), 2)
    return _build_hex(fine[0], fine[1], fine[2], cell_region, 0.5 * mesh.h, mesh.periodic)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _element_facets(mesh):
    if mesh.dim == 2:
        local = [(0, 1), (1, 2), (2, 0)]
    else:
        local = [(0, 2, 6, 4), (1, 3, 7, 5), (0, 1, 5, 4), (2, 3, 7, 6), (0, 1, 3, 2), (4, 5, 7, 6)]
    return np.concatenate([mesh.elements[:, list(f)] for f in local])


def check_mesh(mesh):
    """Raise :class:`MeshError` unless measures, conformity and tags are consistent.

    Returns the number of interior facets.
    """
    if np.any(mesh.element_measures() <= 0):
        raise MeshError("element with non-positive measure")
    rep = mesh.representatives(collapse_axis=False)
    keys = np.sort(rep[_element_facets(mesh)], axis=1)
    uniq, counts = np.unique(keys, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("facet shared by more than two elements")
    boundary = uniq[counts == 1]
    tagged = np.sort(rep[mesh.facets], axis=1)
    t_uniq, t_counts = np.unique(tagged, axis=0, return_counts=True)
    if np.any(t_counts > 1):
        raise MeshError("boundary facet tagged more than once")
    if boundary.shape != t_uniq.shape or np.any(boundary != t_uniq):
        raise MeshError("boundary facets and tagged facets differ")
    walls = mesh.facets[mesh.facet_tags == WALL]
    if not np.all(np.isin(mesh.nodes[walls, 0], (0.0, 1.0))):
        raise MeshError("wall facet off x in {0, 1}")
    if mesh.kind == "strip":
        z = mesh.nodes[mesh.elements, 1]
        if np.any((z.min(axis=1) < 0) & (z.max(axis=1) > 0)):
            raise MeshError("element straddles z = 0")
    return int(np.sum(counts == 2))


# ---------------------------------------------------------------------------
# plain-text dump
# ---------------------------------------------------------------------------

def dump_mesh(mesh, fh=None):
    """Write ``mesh`` in the plain-text format; returns the text if ``fh`` is None.

    Format::

        # kind = <strip|meridian|layer>
        # h = <float>
        # periodic = <0|1>
        <dim> <n_nodes> <n_elements>
        <coord> ... (one line per node)
        <i> ... <region> (one line per element)
        <i> ... <tag name> (one line per boundary facet, up to end of file)
    """
    out = io.StringIO() if fh is None else fh
    out.write(f"# kind = {mesh.kind}\n# h = {float(mesh.h)!r}\n# periodic = {int(mesh.periodic)}\n")
    out.write(f"{mesh.dim} {mesh.n_nodes} {mesh.n_elements}\n")
    for p in mesh.nodes:
        out.write(" ".join(repr(float(v)) for v in p) + "\n")
    for e, reg in zip(mesh.elements, mesh.region):
        out.write(" ".join(str(int(v)) for v in e) + f" {int(reg)}\n")
    for f, tag in zip(mesh.facets, mesh.facet_tags):
        out.write(" ".join(str(int(v)) for v in f) + f" {BOUNDARY_TAGS[tag]}\n")
    if fh is None:
        return out.getvalue()
    return None


def load_mesh(source):
    """Read a mesh written by :func:`dump_mesh` (text or file object)."""
    text = source if isinstance(source, str) else source.read()
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line.split())
    try:
        dim, n_nodes, n_el = (int(v) for v in body[0])
        nodes = np.array([[float(v) for v in row] for row in body[1:1 + n_nodes]]).reshape(n_nodes, dim)
        el_rows = body[1 + n_nodes:1 + n_nodes + n_el]
        elements = np.array([[int(v) for v in row[:-1]] for row in el_rows])
        region = np.array([int(row[-1]) for row in el_rows])
        f_rows = body[1 + n_nodes + n_el:]
        facets = np.array([[int(v) for v in row[:-1]] for row in f_rows]).reshape(len(f_rows), -1)
        tags = np.array([BOUNDARY_TAGS.index(row[-1]) for row in f_rows], dtype=int)
        return Mesh(nodes, elements, region, facets, tags, float(meta["h"]), meta["kind"],
                    bool(int(meta.get("periodic", "0"))))
    except (KeyError, ValueError, IndexError) as exc:
        raise MeshError(f"malformed mesh dump: {exc}") from exc
