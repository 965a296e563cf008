"""Finite element forms on the reference domains.

For each family the Dirichlet form of the bent domain, pulled back to the
straight reference domain and multiplied by ``sin(theta)``, equals

    v^T (K0 + cos(theta) R) v,

with ``M`` the matching mass matrix.  ``K0`` is the plain Dirichlet form of the
reference domain and ``R`` collects the mixed derivative terms created by the
map: ``-2 sgn(z) v_x v_z`` (strip), ``-2 r v_x v_r`` (meridian) and
``-2 (cos(phi - c_j) r v_x v_r - sin(phi - c_j) v_x v_phi)`` (layer sector j).

Elements are linear triangles in 2D and trilinear boxes in ``(x, r, phi)``.
The ``physical_*`` functions assemble the plain Dirichlet form on the mapped
domain instead; they share no coefficient formula with the reference
assembly and serve as its oracle.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, MeshError
from .geometry import HALF_PI, LayerSpec, cone_map, layer_map, vguide_map
from .meshgen import AXIS, DIRICHLET_TAGS, Mesh

# Radon's 7-point rule, degree 5, all points interior (barycentric, weights sum to 1)
_A1, _A2 = (6 - np.sqrt(15)) / 21, (6 + np.sqrt(15)) / 21
_W1, _W2 = (155 - np.sqrt(15)) / 1200, (155 + np.sqrt(15)) / 1200
TRI_POINTS = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _A1, 1 - 2 * _A1], [_A1, 1 - 2 * _A1, _A1], [1 - 2 * _A1, _A1, _A1],
    [_A2, _A2, 1 - 2 * _A2], [_A2, 1 - 2 * _A2, _A2], [1 - 2 * _A2, _A2, _A2],
])
TRI_WEIGHTS = np.array([9 / 40, _W1, _W1, _W1, _W2, _W2, _W2])


@dataclass(frozen=True)
class FormSet:
    """Mass, reference stiffness and remainder on the constrained space.

    ``dof_map[i]`` is the degree of freedom carried by mesh node ``i`` or -1
    for nodes eliminated by a Dirichlet (or axis) constraint.
    """

    M: sp.csr_matrix
    K0: sp.csr_matrix
    R: sp.csr_matrix
    dof_map: np.ndarray
    family: str
    mode: int = None

    @property
    def n_dofs(self):
        return self.M.shape[0]

    def stiffness_at(self, theta):
        return stiffness_at(self, theta)

    def expand(self, v):
        """Nodal values of a constrained vector (zeros on eliminated nodes)."""
        v = np.asarray(v)
        out = np.zeros(self.dof_map.shape + v.shape[1:], dtype=v.dtype)
        mask = self.dof_map >= 0
        out[mask] = v[self.dof_map[mask]]
        return out

    def restrict(self, nodal):
        """Constrained vector from nodal values (representative nodes win)."""
        nodal = np.asarray(nodal)
        out = np.zeros((self.n_dofs,) + nodal.shape[1:], dtype=nodal.dtype)
        mask = self.dof_map >= 0
        out[self.dof_map[mask]] = nodal[mask]
        return out


def stiffness_at(forms, theta):
    """``K0 + cos(theta) R``, the pulled-back stiffness at opening ``theta``."""
    theta = float(theta)
    if not 0 < theta <= HALF_PI:
        raise DomainError(f"theta must lie in (0, pi/2], got {theta!r}")
    if theta == HALF_PI:
        return forms.K0.copy()
    return (forms.K0 + np.cos(theta) * forms.R).tocsr()


# ---------------------------------------------------------------------------
# degrees of freedom and scatter
# ---------------------------------------------------------------------------

def build_dof_map(mesh, constrain_axis=False):
    """Number the free nodes; Dirichlet nodes (and optionally axis nodes) get -1."""
    rep = mesh.representatives()
    fixed = np.zeros(mesh.n_nodes, bool)
    tags = list(DIRICHLET_TAGS) + ([AXIS] if constrain_axis else [])
    fixed[rep[mesh.facets[np.isin(mesh.facet_tags, tags)].ravel()]] = True
    fixed = fixed[rep]
    canonical = np.unique(rep[~fixed])
    numbering = -np.ones(mesh.n_nodes, dtype=np.int64)
    numbering[canonical] = np.arange(canonical.size)
    return numbering[rep]


def _scatter(local, conn, dof_map, n):
    """Sum element matrices ``local[e, a, b]`` into an ``n x n`` symmetric CSR matrix."""
    dofs = dof_map[conn]
    k = conn.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    vals = local.reshape(-1)
    keep = (rows >= 0) & (cols >= 0)
    A = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A = ((A + A.T) * 0.5).tocsr()
    A.sort_indices()
    return A


# ---------------------------------------------------------------------------
# linear triangles
# ---------------------------------------------------------------------------

def _tri_geometry(nodes, tris):
    p = nodes[tris]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    if np.any(det <= 0):
        raise MeshError("inverted or degenerate triangle")
    # gradients of the barycentric coordinates, shape (ne, 3, 2)
    g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
    grads = np.stack([-g1 - g2, g1, g2], axis=1)
    return 0.5 * det, grads, p


def p1_laplace(nodes, tris):
    """Element mass and stiffness of ``int u v`` and ``int grad u . grad v``."""
    area, G, _ = _tri_geometry(nodes, tris)
    K = area[:, None, None] * np.einsum("eak,ebk->eab", G, G)
    M = area[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
    return M, K, area, G


def p1_axisym(nodes, tris, mode):
    """Element matrices of the Fourier mode ``m`` form in meridian coordinates ``(x, r)``.

    ``int u v r`` and ``int (u_x v_x + u_r v_r + m^2 u v / r^2) r`` with the
    7-point rule (no point on ``r = 0``).
    """
    area, G, p = _tri_geometry(nodes, tris)
    r_q = np.einsum("qa,ea->eq", TRI_POINTS, p[:, :, 1])
    if mode and np.any(r_q <= 0):
        raise MeshError("quadrature point on the axis with a nonzero Fourier mode")
    w = area[:, None] * TRI_WEIGHTS[None, :]
    phiphi = np.einsum("qa,qb->qab", TRI_POINTS, TRI_POINTS)
    M = np.einsum("eq,qab->eab", w * r_q, phiphi)
    K = np.einsum("e,eak,ebk->eab", (w * r_q).sum(axis=1), G, G)
    if mode:
        K = K + mode ** 2 * np.einsum("eq,qab->eab", w / r_q, phiphi)
    return M, K, w, r_q, G


def assemble_strip(mesh):
    """Forms of the broken guide pulled back to the strip ``(0, 1) x (-L, L)``."""
    if mesh.kind != "strip":
        raise MeshError(f"assemble_strip needs a strip mesh, got {mesh.kind!r}")
    z = mesh.nodes[mesh.elements, 1]
    if np.any((z.min(axis=1) < 0) & (z.max(axis=1) > 0)):
        raise MeshError("strip mesh does not conform to z = 0")
    sign = np.where(z.mean(axis=1) > 0, 1.0, -1.0)
    dof_map = build_dof_map(mesh)
    n = int(dof_map.max()) + 1
    Me, Ke, area, G = p1_laplace(mesh.nodes, mesh.elements)
    gx, gz = G[:, :, 0], G[:, :, 1]
    Re = -(sign * area)[:, None, None] * (gx[:, :, None] * gz[:, None, :] + gz[:, :, None] * gx[:, None, :])
    conn = mesh.elements
    return FormSet(_scatter(Me, conn, dof_map, n), _scatter(Ke, conn, dof_map, n),
                   _scatter(Re, conn, dof_map, n), dof_map, "strip")


def assemble_meridian(mesh, mode=0):
    """Forms of the conical layer for the Fourier mode ``m`` on the meridian half-strip.

    Axis nodes are free for ``m = 0`` and constrained to zero otherwise.
    """
    if mesh.kind != "meridian":
        raise MeshError(f"assemble_meridian needs a meridian mesh, got {mesh.kind!r}")
    mode = int(mode)
    if mode < 0:
        raise DomainError("mode must be nonnegative")
    dof_map = build_dof_map(mesh, constrain_axis=mode > 0)
    n = int(dof_map.max()) + 1
    Me, Ke, w, r_q, G = p1_axisym(mesh.nodes, mesh.elements, mode)
    gx, gr = G[:, :, 0], G[:, :, 1]
    wr = (w * r_q).sum(axis=1)
    Re = -wr[:, None, None] * (gx[:, :, None] * gr[:, None, :] + gr[:, :, None] * gx[:, None, :])
    conn = mesh.elements
    return FormSet(_scatter(Me, conn, dof_map, n), _scatter(Ke, conn, dof_map, n),
                   _scatter(Re, conn, dof_map, n), dof_map, "meridian", mode)


# ---------------------------------------------------------------------------
# trilinear boxes in (x, r, phi)
# ---------------------------------------------------------------------------

_CORNERS = np.array([(a, b, c) for c in (0, 1) for b in (0, 1) for a in (0, 1)], dtype=float)


def _gauss(n):
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1), 0.5 * w


def _box_rule(n):
    t, w = _gauss(n)
    T = np.array(np.meshgrid(t, t, t, indexing="ij")).reshape(3, -1).T
    W = np.prod(np.array(np.meshgrid(w, w, w, indexing="ij")).reshape(3, -1).T, axis=1)
    return T, W


def _trilinear(t):
    """Values (8,) and reference gradients (8, 3) at a point of the unit cube."""
    s = np.where(_CORNERS == 1, t, 1 - t)
    vals = np.prod(s, axis=1)
    grads = np.empty((8, 3))
    sign = np.where(_CORNERS == 1, 1.0, -1.0)
    for k in range(3):
        others = [i for i in range(3) if i != k]
        grads[:, k] = sign[:, k] * s[:, others[0]] * s[:, others[1]]
    return vals, grads


def _box_points(mesh, n_gauss):
    """Yield ``(weight, point, values, grads)`` per quadrature point for all boxes."""
    lo = mesh.nodes[mesh.elements[:, 0]]
    size = mesh.nodes[mesh.elements[:, 7]] - lo
    vol = np.prod(size, axis=1)
    T, W = _box_rule(n_gauss)
    for t, wq in zip(T, W):
        vals, rgrads = _trilinear(t)
        point = lo + t * size
        grads = rgrads[None, :, :] / size[:, None, :]
        yield wq * vol, point, vals, grads


def _check_layer_mesh(mesh, spec):
    if mesh.kind != "layer":
        raise MeshError(f"assemble_layer needs a layer mesh, got {mesh.kind!r}")
    if not isinstance(spec, LayerSpec):
        raise DomainError("assemble_layer needs a LayerSpec")
    if np.any(mesh.region < 0) or np.any(mesh.region >= spec.n_faces):
        raise MeshError("mesh regions do not match the layer's faces")
    phi = mesh.nodes[mesh.elements, 2]
    mid = 0.5 * (phi.min(axis=1) + phi.max(axis=1))
    if np.any(spec.sector_of(mid) != mesh.region):
        raise MeshError("mesh sector tags disagree with the layer's sectors")
    bounds = spec.sector_bounds[mesh.region]
    shift = np.round((mid - 0.5 * (bounds[:, 0] + bounds[:, 1])) / (2 * np.pi)) * 2 * np.pi
    tol = 1e-12
    if np.any(phi.min(axis=1) - shift < bounds[:, 0] - tol) or np.any(phi.max(axis=1) - shift > bounds[:, 1] + tol):
        raise MeshError("an element straddles a sector interface")
    if spec.symmetry_subspace == mesh.periodic:
        raise MeshError("symmetric-subspace flag disagrees with the mesh")


def assemble_layer(mesh, spec, n_gauss=2):
    """Forms of the polyhedral layer pulled back to the straight layer.

    Weights: ``int u v r``, ``int (u_x v_x + u_r v_r) r + u_phi v_phi / r`` and
    ``R = -2 sum_j int (cos(phi - c_j) r u_x v_r - sin(phi - c_j) u_x v_phi)``
    (symmetrized), all over ``dx dr dphi`` with a Gauss rule that never samples
    ``r = 0``.  Axis nodes sharing ``x`` are merged into one free unknown.
    """
    _check_layer_mesh(mesh, spec)
    dof_map = build_dof_map(mesh)
    n = int(dof_map.max()) + 1
    ne = mesh.n_elements
    centers = np.asarray(spec.face_azimuths)[mesh.region]
    Me = np.zeros((ne, 8, 8))
    Ke = np.zeros((ne, 8, 8))
    Re = np.zeros((ne, 8, 8))
    for w, pt, vals, grads in _box_points(mesh, n_gauss):
        r = pt[:, 1]
        dphi = pt[:, 2] - centers
        gx, gr, gp = grads[:, :, 0], grads[:, :, 1], grads[:, :, 2]
        Me += (w * r)[:, None, None] * np.outer(vals, vals)[None]
        Ke += (w * r)[:, None, None] * (gx[:, :, None] * gx[:, None, :] + gr[:, :, None] * gr[:, None, :])
        Ke += (w / r)[:, None, None] * gp[:, :, None] * gp[:, None, :]
        cos_t = (w * r * np.cos(dphi))[:, None, None]
        sin_t = (w * np.sin(dphi))[:, None, None]
        Re -= cos_t * (gx[:, :, None] * gr[:, None, :] + gr[:, :, None] * gx[:, None, :])
        Re += sin_t * (gx[:, :, None] * gp[:, None, :] + gp[:, :, None] * gx[:, None, :])
    conn = mesh.elements
    return FormSet(_scatter(Me, conn, dof_map, n), _scatter(Ke, conn, dof_map, n),
                   _scatter(Re, conn, dof_map, n), dof_map, "layer")


# ---------------------------------------------------------------------------
# oracles: the plain Dirichlet form assembled on the mapped domain
# ---------------------------------------------------------------------------

def physical_strip_forms(mesh, theta):
    """``(M, K)`` of the broken guide on the mesh mapped through the guide map.

    The map is affine on each half-strip, so linear elements pull back exactly.
    """
    mapped = vguide_map(theta, mesh.nodes, "forward")
    dof_map = build_dof_map(mesh)
    n = int(dof_map.max()) + 1
    Me, Ke, _, _ = p1_laplace(mapped, mesh.elements)
    return _scatter(Me, mesh.elements, dof_map, n), _scatter(Ke, mesh.elements, dof_map, n)


def physical_meridian_forms(mesh, theta, mode=0):
    """``(M, K)`` of the conical layer's mode ``m`` on the mapped meridian mesh."""
    mapped = cone_map(theta, mesh.nodes, "forward")
    dof_map = build_dof_map(mesh, constrain_axis=mode > 0)
    n = int(dof_map.max()) + 1
    Me, Ke, _, _, _ = p1_axisym(mapped, mesh.elements, mode)
    return _scatter(Me, mesh.elements, dof_map, n), _scatter(Ke, mesh.elements, dof_map, n)


def _complex_step_jacobian(spec, point, sector, step=1e-30):
    """Jacobian ``d(X, r, phi) / d(x, r, phi)`` of the layer map, exact to rounding."""
    jac = np.empty(point.shape[:1] + (3, 3))
    for k in range(3):
        z = point.astype(complex)
        z[:, k] += 1j * step
        jac[:, :, k] = layer_map(spec, z, "forward", sector=sector, check=False).imag / step
    return jac


def physical_layer_forms(mesh, spec, n_gauss=2):
    """``(M, K)`` of the polyhedral layer, computed through the map's Jacobian.

    Every quadrature point of the reference box is sent through the layer map;
    physical gradients come from the (complex-step) Jacobian and the plain
    cylindrical form ``(u_X v_X + u_r v_r + u_phi v_phi / r^2) r`` is
    integrated against ``|det J|``.
    """
    _check_layer_mesh(mesh, spec)
    dof_map = build_dof_map(mesh)
    n = int(dof_map.max()) + 1
    ne = mesh.n_elements
    Me = np.zeros((ne, 8, 8))
    Ke = np.zeros((ne, 8, 8))
    for w, pt, vals, grads in _box_points(mesh, n_gauss):
        jac = _complex_step_jacobian(spec, pt, mesh.region)
        det = np.abs(np.linalg.det(jac))
        inv_t = np.transpose(np.linalg.inv(jac), (0, 2, 1))
        pg = np.einsum("eij,eaj->eai", inv_t, grads)
        r = pt[:, 1]
        metric = np.array([1.0, 1.0, 0.0])
        wr = w * r * det
        Ke += wr[:, None, None] * np.einsum("eak,ebk,k->eab", pg, pg, metric)
        Ke += (w * det / r)[:, None, None] * pg[:, :, 2, None] * pg[:, None, :, 2]
        Me += wr[:, None, None] * np.outer(vals, vals)[None]
    return _scatter(Me, mesh.elements, dof_map, n), _scatter(Ke, mesh.elements, dof_map, n)


# ---------------------------------------------------------------------------
# debugging dump
# ---------------------------------------------------------------------------

def dump_matrix(A, fh, dof_map=None):
    """Coordinate text dump: ``row col value`` with 17 significant digits."""
    A = sp.coo_matrix(A)
    fh.write(f"# shape {A.shape[0]} {A.shape[1]} nnz {A.nnz}\n")
    if dof_map is not None:
        fh.write("# dof_map " + " ".join(str(int(d)) for d in dof_map) + "\n")
    order = np.lexsort((A.col, A.row))
    for i, j, v in zip(A.row[order], A.col[order], A.data[order]):
        fh.write(f"{i} {j} {v:.17g}\n")
