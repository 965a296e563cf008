"""Domains, angle-parameterized coordinate maps and polyhedral-angle trigonometry.

Every family is reached from a straight reference domain of unit width:

* V-shaped guide: strip ``0 < x < 1`` in ``(x, z)``,
* conical layer: meridian half-strip ``0 < x < 1, r > 0`` in ``(x, r)``,
* polyhedral layer: straight layer ``0 < x < 1`` in cylindrical ``(x, r, phi)``.

The forward maps send the reference domain onto the bent one; they are affine
on each piece of a fixed partition, which is what lets one reference mesh serve
every opening angle.

A polyhedral angle admitting an inscribed ball is described by the common tilt
``theta`` between each face and the ball axis, and by the azimuths ``c_j`` of
the face normals around that axis.  Face ``j`` owns the angular sector bounded
by its two edges; edge ``j`` (between faces ``j`` and ``j+1``) sits at the mid
azimuth ``(c_j + c_{j+1}) / 2``.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, GeometryError, NumericalError

TWO_PI = 2.0 * np.pi
HALF_PI = 0.5 * np.pi
_POINT_TOL = 1e-12


def _check_theta(theta, name="theta"):
    theta = float(theta)
    if not (0.0 < theta <= HALF_PI):
        raise DomainError(f"{name} must lie in (0, pi/2], got {theta!r}")
    return theta


def _check_direction(direction):
    if direction not in ("forward", "inverse"):
        raise DomainError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    return direction


def _as_points(p, dim):
    p = np.asarray(p)
    if p.shape[-1] != dim:
        raise GeometryError(f"points must have {dim} coordinates, got shape {p.shape}")
    if not np.iscomplexobj(p):
        p = p.astype(float)
    return p


# ---------------------------------------------------------------------------
# domain descriptions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VGuideSpec:
    """Broken planar guide with half-opening ``theta`` truncated at ``|z| < half_length``."""

    theta: float
    half_length: float = 4.0

    def __post_init__(self):
        _check_theta(self.theta)
        if not self.half_length > 0:
            raise DomainError(f"half_length must be positive, got {self.half_length!r}")


@dataclass(frozen=True)
class ConeSpec:
    """Circular conical layer of half-angle ``theta`` truncated at ``r < r_max``."""

    theta: float
    r_max: float = 40.0
    modes: tuple = (0, 1, 2)

    def __post_init__(self):
        _check_theta(self.theta)
        if not self.r_max > 1:
            raise DomainError(f"r_max must exceed 1, got {self.r_max!r}")
        modes = tuple(int(m) for m in self.modes)
        if not modes or min(modes) < 0 or len(set(modes)) != len(modes):
            raise DomainError(f"modes must be distinct nonnegative integers, got {self.modes!r}")
        object.__setattr__(self, "modes", modes)


@dataclass(frozen=True)
class LayerSpec:
    """Polyhedral layer over a convex angle with an inscribed ball.

    Parameters
    ----------
    theta : float
        Angle between every face and the inscribed-ball axis.
    face_azimuths : sequence of float
        Azimuths ``c_j`` of the face normals, strictly increasing, ``c_0 = 0``.
    r_max : float
        Truncation radius in the reference layer.
    symmetry_subspace : bool
        Restrict to functions invariant under the full symmetry group of a
        regular layer (half of one sector with natural conditions).
    """

    theta: float
    face_azimuths: tuple
    r_max: float = 12.0
    symmetry_subspace: bool = False
    _gaps: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_theta(self.theta)
        c = np.asarray(self.face_azimuths, dtype=float)
        if c.ndim != 1 or c.size < 3:
            raise DomainError("a polyhedral layer needs at least three faces")
        if c[0] != 0.0:
            raise DomainError("the first face azimuth must be 0")
        gaps = np.diff(np.append(c, TWO_PI))
        if np.any(gaps <= 0) or np.any(gaps >= np.pi):
            raise GeometryError(
                "consecutive face azimuths must differ by an angle in (0, pi) "
                "(convex angle), got gaps %s" % np.array2string(gaps))
        if not self.r_max > 1:
            raise DomainError(f"r_max must exceed 1, got {self.r_max!r}")
        object.__setattr__(self, "face_azimuths", tuple(float(v) for v in c))
        object.__setattr__(self, "_gaps", gaps)
        if self.symmetry_subspace and not self.is_regular:
            raise GeometryError("symmetry_subspace requires a regular layer")

    @classmethod
    def regular(cls, n_faces, theta, r_max=12.0, symmetry_subspace=True):
        n_faces = int(n_faces)
        if n_faces < 3:
            raise DomainError("a regular layer needs N >= 3")
        c = TWO_PI * np.arange(n_faces) / n_faces
        return cls(theta, tuple(c), r_max, symmetry_subspace)

    @classmethod
    def from_gaps(cls, theta, gaps, r_max=12.0, symmetry_subspace=False):
        gaps = np.asarray(gaps, dtype=float)
        if abs(gaps.sum() - TWO_PI) > 1e-12:
            raise GeometryError(f"azimuth gaps must sum to 2*pi, got {gaps.sum()!r}")
        c = np.concatenate([[0.0], np.cumsum(gaps[:-1])])
        return cls(theta, tuple(c), r_max, symmetry_subspace)

    def with_theta(self, theta):
        """Same sector structure, different tilt (the sweep family)."""
        return LayerSpec(theta, self.face_azimuths, self.r_max, self.symmetry_subspace)

    @property
    def n_faces(self):
        return len(self.face_azimuths)

    @property
    def gaps(self):
        """Azimuth increments ``c_{j+1} - c_j`` (cyclic)."""
        return self._gaps.copy()

    @property
    def edge_azimuths(self):
        """Azimuth of edge ``j``, shared by faces ``j`` and ``j+1``."""
        return np.asarray(self.face_azimuths) + 0.5 * self._gaps

    @property
    def sector_bounds(self):
        """``(lo_j, hi_j)`` for the sector of face ``j``; sector 0 starts below zero."""
        e = self.edge_azimuths
        lo = np.concatenate([[e[-1] - TWO_PI], e[:-1]])
        return np.column_stack([lo, e])

    @property
    def sector_angles(self):
        return 0.5 * (self._gaps + np.roll(self._gaps, 1))

    @property
    def is_regular(self):
        return bool(np.allclose(self._gaps, self._gaps[0], rtol=0, atol=1e-12))

    @property
    def vertex_angles(self):
        """Planar angles of the faces at the apex."""
        half = np.arctan(np.sin(self.theta) * np.tan(0.5 * self._gaps))
        return np.roll(half, 1) + half

    @property
    def dihedral_angles(self):
        """Inner dihedral angle along edge ``j`` (between faces ``j`` and ``j+1``)."""
        s2 = np.sin(self.theta) ** 2
        c2 = np.cos(self.theta) ** 2
        return np.arccos(np.clip(-(s2 + c2 * np.cos(self._gaps)), -1.0, 1.0))

    def sector_of(self, phi):
        """Face index owning azimuth ``phi``; interfaces go to the lower index."""
        phi = np.real(np.asarray(phi, dtype=complex if np.iscomplexobj(phi) else float))
        start = self.sector_bounds[0, 0]
        t = np.mod(phi - start, TWO_PI)
        # rounding can push t = 2*pi - tiny back across the start interface
        t = np.where(TWO_PI - t < 1e-14, 0.0, t)
        cuts = self.edge_azimuths - start
        j = np.searchsorted(cuts, t, side="left")
        return np.minimum(j, self.n_faces - 1)


@dataclass(frozen=True)
class TrihedralAngles:
    """Vertex angles of a trihedral angle, with its dihedral angles derived."""

    alphas: tuple

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float)
        if a.shape != (3,):
            raise DomainError("a trihedral angle has exactly three vertex angles")
        if np.any(a <= 0) or np.any(a >= np.pi):
            raise DomainError(f"vertex angles must lie in (0, pi), got {a}")
        for k in range(3):
            if not a[k] < a[k - 1] + a[k - 2]:
                raise GeometryError(f"vertex angle {k} violates the spherical triangle inequality")
        if not a.sum() < TWO_PI:
            raise GeometryError("vertex angles must sum to less than 2*pi")
        object.__setattr__(self, "alphas", tuple(float(v) for v in a))

    @property
    def betas(self):
        return trihedral_dihedrals(self.alphas)


# ---------------------------------------------------------------------------
# coordinate maps
# ---------------------------------------------------------------------------

def vguide_map(theta, p, direction="forward", check=True):
    """Map between the straight strip and the broken guide of half-opening ``theta``.

    ``forward``: ``(x, z) -> (x csc(theta) + |z| cot(theta), z)``;
    ``inverse``: ``(x, z) -> (x sin(theta) - |z| cos(theta), z)``.
    Points are given as an array of shape ``(..., 2)``.
    """
    theta = _check_theta(theta)
    _check_direction(direction)
    p = _as_points(p, 2)
    x, z = p[..., 0], p[..., 1]
    absz = np.sqrt(z * z) if np.iscomplexobj(p) else np.abs(z)
    s, c = np.sin(theta), np.cos(theta)
    if direction == "forward":
        if check and (np.any(np.real(x) < -_POINT_TOL) or np.any(np.real(x) > 1 + _POINT_TOL)):
            raise GeometryError("forward map needs points of the reference strip 0 <= x <= 1")
        out_x = x / s + absz * c / s
    else:
        out_x = x * s - absz * c
        if check and (np.any(np.real(out_x) < -_POINT_TOL) or np.any(np.real(out_x) > 1 + _POINT_TOL)):
            raise GeometryError("inverse map needs points of the broken guide: "
                                "0 <= x sin(theta) - |z| cos(theta) <= 1 violated")
    return np.stack([out_x, z], axis=-1)


def cone_map(theta, p, direction="forward", check=True):
    """Meridian form of the conical map, ``(x, r) -> (x csc + r cot, r)`` and back."""
    theta = _check_theta(theta)
    _check_direction(direction)
    p = _as_points(p, 2)
    x, r = p[..., 0], p[..., 1]
    if check and np.any(np.real(r) < 0):
        raise GeometryError("cone map needs r >= 0")
    s, c = np.sin(theta), np.cos(theta)
    if direction == "forward":
        out_x = (x + r * c) / s
    else:
        out_x = x * s - r * c
    return np.stack([out_x, r], axis=-1)


def layer_map(spec, p, direction="forward", sector=None, check=True):
    """Sector-wise map of the straight layer onto the polyhedral layer.

    In the sector of face ``j`` the forward map is
    ``(x, r, phi) -> (x csc(theta) + r cot(theta) cos(phi - c_j), r, phi)``.
    ``sector`` overrides the azimuth lookup (needed for complex-step
    differentiation and for evaluating both sides of an interface).
    """
    _check_direction(direction)
    p = _as_points(p, 3)
    x, r, phi = p[..., 0], p[..., 1], p[..., 2]
    if check and np.any(np.real(r) < 0):
        raise GeometryError("layer map needs r >= 0")
    if sector is None:
        sector = spec.sector_of(np.real(phi))
    c_j = np.asarray(spec.face_azimuths)[np.asarray(sector)]
    s, c = np.sin(spec.theta), np.cos(spec.theta)
    bend = r * c * np.cos(phi - c_j)
    if direction == "forward":
        out_x = (x + bend) / s
    else:
        out_x = x * s - bend
    return np.stack([out_x, r, phi], axis=-1)


# ---------------------------------------------------------------------------
# polyhedral-angle trigonometry
# ---------------------------------------------------------------------------

def regular_tilt(alpha, n_faces):
    """Tilt of a regular ``N``-hedral angle with vertex angle ``alpha``.

    ``sin(theta) = tan(alpha/2) cot(pi/N)``.
    """
    n_faces = int(n_faces)
    if n_faces < 3:
        raise DomainError("N must be at least 3")
    if not 0 < alpha < np.pi:
        raise DomainError(f"alpha must lie in (0, pi), got {alpha!r}")
    s = np.tan(0.5 * alpha) / np.tan(np.pi / n_faces)
    if s > 1.0 + 1e-15:
        raise GeometryError(
            f"vertex angle {alpha!r} is too large for N={n_faces}: sin(theta) = {s!r} > 1")
    return float(np.arcsin(min(s, 1.0)))


def trihedral_dihedrals(alphas):
    """Dihedral angles of a trihedral angle from its vertex angles.

    ``beta_k`` is the dihedral angle at the edge opposite face ``k`` (the
    edge shared by the two other faces), from the spherical law of cosines.
    """
    a = np.asarray(TrihedralAngles(tuple(alphas)).alphas)
    ai, aj = np.roll(a, -1), np.roll(a, -2)
    denom = np.sin(ai) * np.sin(aj)
    if np.any(np.abs(denom) < 1e-15):
        raise GeometryError("degenerate trihedral angle")
    cos_b = (np.cos(a) - np.cos(ai) * np.cos(aj)) / denom
    return np.arccos(np.clip(cos_b, -1.0, 1.0))


def _half_vertex_angles(alphas):
    """Solve ``alpha_j = a_{j-1} + a_j`` for the edge half-angles ``a_j``."""
    n = alphas.size
    A = np.eye(n) + np.roll(np.eye(n), -1, axis=1)
    if n % 2:
        a = np.linalg.solve(A, alphas)
    else:
        a, *_ = np.linalg.lstsq(A, alphas, rcond=None)
    if np.max(np.abs(A @ a - alphas)) > 1e-9:
        raise GeometryError("no ball can be inscribed into a polyhedral angle with these vertex angles "
                            "(alternating sum of vertex angles must vanish for even n)")
    return a


def layer_axis(alphas, r_max=12.0, symmetry_subspace=False, max_iter=200):
    """Inscribed-ball geometry of a convex polyhedral angle from its vertex angles.

    Face ``j`` lies between edges ``j - 1`` and ``j``.  The vertex angle of
    each face splits at the tangency ray into halves ``a_{j-1}`` and ``a_j``
    shared with the neighbours; each half determines the azimuth gap through
    ``tan(a_j) = sin(theta) tan(g_j / 2)``.  The tilt is found by bisection on
    ``sum_j g_j(theta) = 2 pi`` (the sum is strictly decreasing in ``theta``).
    For even ``n`` the vertex angles do not fix the angle; the most symmetric
    (least-squares) split is used.
    """
    a = np.asarray(alphas, dtype=float)
    if a.ndim != 1 or a.size < 3:
        raise DomainError("need at least three vertex angles")
    if np.any(a <= 0) or np.any(a >= np.pi):
        raise DomainError("vertex angles must lie in (0, pi)")
    if not a.sum() < TWO_PI:
        raise GeometryError("vertex angles sum to 2*pi or more: flat or reflex angle")
    if a.size == 3:
        TrihedralAngles(tuple(a))

    if np.all(a == a[0]):
        theta = regular_tilt(a[0], a.size)
        gaps = np.full(a.size, TWO_PI / a.size)
        return LayerSpec.from_gaps(theta, gaps, r_max, symmetry_subspace)

    half = _half_vertex_angles(a)
    if np.any(half <= 0) or np.any(half >= HALF_PI):
        raise GeometryError(f"edge half-angles {half} outside (0, pi/2): not a convex angle")
    t = np.tan(half)

    def excess(theta):
        return 2.0 * np.arctan(t / np.sin(theta)).sum() - TWO_PI

    lo, hi = 0.0, HALF_PI
    if excess(hi) >= 0:
        raise GeometryError("vertex angles admit no convex polyhedral angle")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    else:
        raise NumericalError("tilt bisection did not converge")
    theta = hi if abs(excess(hi)) <= abs(excess(lo)) else lo
    gaps = 2.0 * np.arctan(t / np.sin(theta))
    gaps[-1] = TWO_PI - gaps[:-1].sum()
    spec = LayerSpec.from_gaps(theta, gaps, r_max, symmetry_subspace)
    if np.max(np.abs(spec.vertex_angles - a)) > 1e-9:
        raise GeometryError("inscribed-ball residual above 1e-9")
    return spec


def edge_rays(spec):
    """Unit vectors of the edges of the outer polyhedral angle.

    Cartesian frame ``(axis, y, z)`` with ``y + i z = r exp(i phi)``.
    """
    s, c = np.sin(spec.theta), np.cos(spec.theta)
    half = 0.5 * spec.gaps
    e = spec.edge_azimuths
    # on face j: x sin = r cos cos(phi - c_j); the edge is at angular offset g_j / 2
    axial = c * np.cos(half)
    rays = np.column_stack([axial, s * np.cos(e), s * np.sin(e)])
    return rays / np.linalg.norm(rays, axis=1)[:, None]
