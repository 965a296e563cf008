import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polylayer.errors import DomainError, GeometryError
from polylayer.geometry import (ConeSpec, LayerSpec, TrihedralAngles, VGuideSpec, cone_map,
                                edge_rays, layer_axis, layer_map, regular_tilt,
                                trihedral_dihedrals, vguide_map)

HALF_PI = 0.5 * math.pi


# ---------------------------------------------------------------------------
# independent vector oracles
# ---------------------------------------------------------------------------

def _angle(u, v):
    return math.atan2(np.linalg.norm(np.cross(u, v)), float(np.dot(u, v)))


def _dihedral_at(edge, a, b):
    """Angle between the half-planes spanned by ``edge`` and ``a`` / ``edge`` and ``b``."""
    e = edge / np.linalg.norm(edge)
    pa = a - np.dot(a, e) * e
    pb = b - np.dot(b, e) * e
    return _angle(pa, pb)


def _rays_from_vertex_angles(alphas):
    """Three unit rays whose pairwise angles are the face angles.

    Face ``k`` is spanned by the two rays other than ray ``k``.
    """
    a1, a2, a3 = alphas
    A = np.array([1.0, 0.0, 0.0])
    B = np.array([math.cos(a3), math.sin(a3), 0.0])
    y = (math.cos(a1) - math.cos(a2) * math.cos(a3)) / math.sin(a3)
    z = math.sqrt(max(1.0 - math.cos(a2) ** 2 - y ** 2, 0.0))
    C = np.array([math.cos(a2), y, z])
    return A, B, C


def _oracle_dihedrals(alphas):
    A, B, C = _rays_from_vertex_angles(alphas)
    return np.array([_dihedral_at(A, B, C), _dihedral_at(B, C, A), _dihedral_at(C, A, B)])


valid_triples = st.tuples(*(st.floats(0.15, 2.6) for _ in range(3))).filter(
    lambda a: all(a[k] < a[k - 1] + a[k - 2] - 0.05 for k in range(3)) and sum(a) < 2 * math.pi - 0.1)


# ---------------------------------------------------------------------------
# specs
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("theta", [0.0, -0.1, 1.6, math.nan])
def test_specs_reject_bad_angles(theta):
    with pytest.raises(DomainError):
        VGuideSpec(theta)
    with pytest.raises(DomainError):
        ConeSpec(theta)


def test_spec_ranges():
    with pytest.raises(DomainError):
        VGuideSpec(0.5, half_length=0.0)
    with pytest.raises(DomainError):
        ConeSpec(0.5, r_max=1.0)
    with pytest.raises(DomainError):
        ConeSpec(0.5, modes=())
    with pytest.raises(DomainError):
        ConeSpec(0.5, modes=(0, 0))


def test_layer_spec_regular_structure():
    spec = LayerSpec.regular(5, 0.7)
    assert spec.is_regular
    assert np.allclose(spec.sector_angles, 2 * math.pi / 5, atol=1e-15)
    assert abs(spec.sector_angles.sum() - 2 * math.pi) < 1e-12
    lo, hi = spec.sector_bounds.T
    assert np.allclose(hi - lo, spec.sector_angles)
    assert np.allclose(0.5 * (lo + hi), spec.face_azimuths)


def test_layer_spec_rejects_nonconvex_and_asymmetric():
    with pytest.raises(GeometryError):
        LayerSpec.from_gaps(0.5, [0.3, 0.3, 2 * math.pi - 0.6])
    with pytest.raises(GeometryError):
        LayerSpec.from_gaps(0.5, [2.0, 2.0, 2.0])
    with pytest.raises(GeometryError):
        LayerSpec.from_gaps(0.5, [2.0, 2.0, 2 * math.pi - 4.0], symmetry_subspace=True)
    with pytest.raises(DomainError):
        LayerSpec(0.5, (0.0, 2.0))


def test_sector_tie_break_goes_to_lower_index():
    spec = LayerSpec.regular(4, 0.5, symmetry_subspace=False)
    edges = spec.edge_azimuths
    assert list(spec.sector_of(edges[:-1])) == [0, 1, 2]
    # the last edge joins faces 3 and 0
    assert spec.sector_of(edges[-1]) == 0
    assert spec.sector_of(0.0) == 0
    assert spec.sector_of(-0.1) == 0
    assert spec.sector_of(2 * math.pi - 0.1) == 0


def test_trihedral_angles_validation():
    with pytest.raises(GeometryError):
        TrihedralAngles((0.3, 0.3, 1.0))
    with pytest.raises(GeometryError):
        TrihedralAngles((2.5, 2.5, 2.5))
    with pytest.raises(DomainError):
        TrihedralAngles((1.0, 1.0))
    assert np.allclose(TrihedralAngles((HALF_PI,) * 3).betas, HALF_PI)


# ---------------------------------------------------------------------------
# maps
# ---------------------------------------------------------------------------

def test_vguide_map_examples():
    assert np.allclose(vguide_map(HALF_PI, (0.5, 3.0)), (0.5, 3.0), atol=1e-15)
    assert np.allclose(vguide_map(math.pi / 4, (0.0, 1.0)), (1.0, 1.0), atol=1e-15)
    p = np.array([1.0, 1.0])
    back = vguide_map(math.pi / 4, vguide_map(math.pi / 4, p), "inverse")
    assert np.allclose(back, p, atol=1e-15)


def test_vguide_map_errors():
    with pytest.raises(DomainError):
        vguide_map(2.0, (0.5, 0.0))
    with pytest.raises(GeometryError, match="x"):
        vguide_map(0.5, (1.5, 0.0))
    with pytest.raises(DomainError):
        vguide_map(0.5, (0.5, 0.0), "sideways")


def test_cone_map_examples():
    assert np.allclose(cone_map(HALF_PI, (0.3, 5.0)), (0.3, 5.0), atol=1e-15)
    assert np.allclose(cone_map(math.pi / 6, (0.0, 1.0)), (math.sqrt(3), 1.0), atol=1e-14)
    with pytest.raises(GeometryError, match="r"):
        cone_map(0.5, (0.5, -1.0))


def test_layer_map_examples():
    spec = LayerSpec.regular(4, math.pi / 4, symmetry_subspace=False)
    assert np.allclose(layer_map(spec, (0.0, 1.0, 0.0)), (1.0, 1.0, 0.0), atol=1e-15)
    flat = LayerSpec.regular(4, HALF_PI, symmetry_subspace=False)
    p = np.array([[0.2, 3.0, 1.0], [0.9, 0.0, -2.0]])
    assert np.allclose(layer_map(flat, p), p, atol=1e-15)


def _random_points(rng, n, dim, extent):
    p = rng.uniform(size=(n, dim))
    p[:, 1:] = p[:, 1:] * extent
    return p


@pytest.mark.parametrize("theta", [0.2, 0.7, 1.2, HALF_PI])
def test_round_trips(rng, theta):
    strip = _random_points(rng, 1000, 2, 1.0)
    strip[:, 1] = 8.0 * strip[:, 1] - 4.0
    assert np.max(np.abs(vguide_map(theta, vguide_map(theta, strip), "inverse") - strip)) < 1e-13
    mer = _random_points(rng, 1000, 2, 40.0)
    assert np.max(np.abs(cone_map(theta, cone_map(theta, mer), "inverse") - mer)) < 1e-13
    spec = LayerSpec.from_gaps(theta, [1.7, 2.3, 2 * math.pi - 4.0])
    lay = _random_points(rng, 1000, 3, 1.0)
    lay[:, 1] *= 12.0
    lay[:, 2] = 2 * math.pi * lay[:, 2] - 1.0
    assert np.max(np.abs(layer_map(spec, layer_map(spec, lay), "inverse") - lay)) < 1e-13


def test_cone_round_trip_inverse_first(rng):
    # forward of inverse on physical points
    theta = 0.6
    ref = _random_points(rng, 100, 2, 20.0)
    phys = cone_map(theta, ref)
    assert np.max(np.abs(cone_map(theta, cone_map(theta, phys, "inverse")) - phys)) < 1e-14


def _jacobian_det(f, p, eps=1e-6):
    d = p.shape[-1]
    J = np.empty((d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = eps
        J[:, k] = (f(p + e) - f(p - e)) / (2 * eps)
    return np.linalg.det(J)


@pytest.mark.parametrize("theta", [0.3, 0.9, 1.4])
def test_jacobian_determinant_is_csc(rng, theta):
    csc = 1.0 / math.sin(theta)
    for _ in range(20):
        p = np.array([rng.uniform(0.1, 0.9), rng.choice([-1, 1]) * rng.uniform(0.1, 3.0)])
        assert abs(_jacobian_det(lambda q: vguide_map(theta, q, check=False), p) - csc) < 1e-7
        q = np.array([rng.uniform(0.1, 0.9), rng.uniform(0.1, 30.0)])
        assert abs(_jacobian_det(lambda q: cone_map(theta, q, check=False), q) - csc) < 1e-7
    spec = LayerSpec.from_gaps(theta, [1.7, 2.3, 2 * math.pi - 4.0])
    for _ in range(20):
        phi = rng.uniform(0, 2 * math.pi)
        j = int(spec.sector_of(phi))
        lo, hi = spec.sector_bounds[j]
        phi = (lo + hi) / 2 + 0.4 * (hi - lo) * rng.uniform(-1, 1)
        p = np.array([rng.uniform(0.1, 0.9), rng.uniform(0.5, 10.0), phi])
        f = lambda q: layer_map(spec, q, sector=j, check=False)  # noqa: E731
        assert abs(_jacobian_det(f, p) - csc) < 1e-6


@pytest.mark.parametrize("gaps", [None, (1.7, 2.3, 2 * math.pi - 4.0), (1.2, 1.9, 1.4, 2 * math.pi - 4.5)])
def test_layer_map_continuous_across_interfaces(rng, gaps):
    spec = (LayerSpec.regular(3, 0.5, symmetry_subspace=False) if gaps is None
            else LayerSpec.from_gaps(0.5, gaps))
    n = spec.n_faces
    for j in range(n):
        phi = spec.edge_azimuths[j]
        p = np.column_stack([rng.uniform(size=50), rng.uniform(0, 12, 50), np.full(50, phi)])
        a = layer_map(spec, p, sector=np.full(50, j), check=False)
        b = layer_map(spec, p, sector=np.full(50, (j + 1) % n), check=False)
        assert np.max(np.abs(a - b)) < 1e-13


# ---------------------------------------------------------------------------
# trigonometry
# ---------------------------------------------------------------------------

def test_regular_tilt_examples():
    assert regular_tilt(HALF_PI, 4) == pytest.approx(HALF_PI, abs=1e-7)
    octant = regular_tilt(HALF_PI, 3)
    assert math.sin(octant) == pytest.approx(1 / math.sqrt(3), abs=1e-15)
    assert octant == pytest.approx(0.61548, abs=1e-5)
    s = math.tan(0.2) / math.tan(math.pi / 3)
    assert s == pytest.approx(0.11704, abs=1e-5)
    assert regular_tilt(0.4, 3) == pytest.approx(math.asin(s), abs=1e-15)


def test_regular_tilt_octant_axis_oracle():
    # the inscribed axis of the octant is (1,1,1)/sqrt(3); every face makes the same angle with it
    axis = np.ones(3) / math.sqrt(3)
    normal = np.array([1.0, 0.0, 0.0])
    tilt = HALF_PI - math.acos(float(axis @ normal))
    assert regular_tilt(HALF_PI, 3) == pytest.approx(tilt, abs=1e-15)


def test_regular_tilt_cross_checked_by_rays():
    spec = layer_axis([0.4, 0.4, 0.4])
    assert spec.theta == pytest.approx(regular_tilt(0.4, 3), abs=1e-15)
    rays = edge_rays(spec)
    for j in range(3):
        assert _angle(rays[j - 1], rays[j]) == pytest.approx(0.4, abs=1e-12)


def test_regular_tilt_errors():
    with pytest.raises(GeometryError, match="too large"):
        regular_tilt(2.2, 3)
    with pytest.raises(DomainError):
        regular_tilt(1.0, 2)


def test_trihedral_dihedrals_examples():
    assert np.allclose(trihedral_dihedrals((HALF_PI,) * 3), HALF_PI, atol=1e-15)
    betas = trihedral_dihedrals((HALF_PI, HALF_PI, 0.3))
    # the dihedral at the edge opposite the small face equals the small angle
    assert betas[2] == pytest.approx(0.3, abs=1e-14)
    assert np.allclose(np.sort(betas), (0.3, HALF_PI, HALF_PI), atol=1e-14)


def test_trihedral_dihedrals_vector_oracle_100_triples(rng):
    n = 0
    while n < 100:
        a = rng.uniform(0.1, 2.8, 3)
        if not (all(a[k] < a[k - 1] + a[k - 2] for k in range(3)) and a.sum() < 2 * math.pi):
            continue
        assert np.max(np.abs(trihedral_dihedrals(a) - _oracle_dihedrals(a))) < 1e-12
        n += 1


@settings(max_examples=60, deadline=None)
@given(valid_triples)
def test_trihedral_dihedrals_property(a):
    betas = trihedral_dihedrals(a)
    assert np.all((betas > 0) & (betas < math.pi))
    assert np.max(np.abs(betas - _oracle_dihedrals(a))) < 1e-9


def test_trihedral_dihedrals_degenerate():
    with pytest.raises(GeometryError):
        trihedral_dihedrals((1.0, 1.0, 2.0))


def _ray_angles(spec):
    rays = edge_rays(spec)
    n = len(rays)
    vertex = np.array([_angle(rays[j - 1], rays[j]) for j in range(n)])
    dihedral = np.array([_dihedral_at(rays[j], rays[j - 1], rays[(j + 1) % n]) for j in range(n)])
    return vertex, dihedral


def test_layer_axis_octant():
    spec = layer_axis([HALF_PI] * 3)
    assert math.sin(spec.theta) == pytest.approx(1 / math.sqrt(3), abs=1e-15)
    assert np.allclose(spec.sector_angles, 2 * math.pi / 3, atol=1e-15)
    vertex, dihedral = _ray_angles(spec)
    assert np.allclose(vertex, HALF_PI, atol=1e-12)
    assert np.allclose(dihedral, HALF_PI, atol=1e-12)


@pytest.mark.parametrize("n, alpha", [(3, 0.4), (4, 1.2), (5, 1.0), (6, 0.9)])
def test_layer_axis_regular_reproduces_regular_tilt(n, alpha):
    spec = layer_axis([alpha] * n)
    assert spec.theta == regular_tilt(alpha, n)
    assert np.allclose(spec.gaps, 2 * math.pi / n, atol=1e-15)


@pytest.mark.parametrize("alphas", [(HALF_PI, HALF_PI, 0.3), (1.0, 1.3, 0.8), (0.9, 1.6, 1.4),
                                    (1.0, 1.2, 1.1, 0.9), (1.1, 0.7, 0.9, 1.0, 0.8)])
def test_layer_axis_defining_equations(alphas):
    spec = layer_axis(alphas)
    a = np.asarray(alphas)
    assert abs(spec.gaps.sum() - 2 * math.pi) < 1e-12
    # each face's vertex angle splits into halves a_j with tan a_j = sin(theta) tan(g_j / 2)
    assert np.max(np.abs(spec.vertex_angles - a)) < 1e-12
    vertex, dihedral = _ray_angles(spec)
    assert np.max(np.abs(vertex - a)) < 1e-12
    assert np.max(np.abs(dihedral - spec.dihedral_angles)) < 1e-12


def test_layer_axis_trihedral_dihedrals_agree():
    alphas = (1.0, 1.3, 0.8)
    spec = layer_axis(alphas)
    betas = trihedral_dihedrals(alphas)
    # edge j joins faces j and j+1, so it is opposite face j+2
    assert np.allclose(spec.dihedral_angles, np.roll(betas, -2), atol=1e-12)


def test_layer_axis_regular_formula_for_sector_angles():
    alpha, n = 1.1, 5
    spec = layer_axis([alpha] * n)
    psi = 2 * math.atan(math.tan(alpha / 2) / math.sin(spec.theta))
    assert psi == pytest.approx(2 * math.pi / n, abs=1e-12)


def test_layer_axis_errors():
    with pytest.raises(GeometryError, match="2\\*pi"):
        layer_axis([2.2, 2.2, 2.2])
    with pytest.raises(GeometryError):
        layer_axis([1.0, 0.5, 1.0, 1.4])  # alternating sum nonzero: no inscribed ball
    with pytest.raises(DomainError):
        layer_axis([1.0, 1.0])
    # an edge more than a right angle away from the axis has no sector description
    with pytest.raises(GeometryError, match="half-angles"):
        layer_axis([0.5, 2.0, 1.7])


def test_octant_axis_in_cartesian_frame():
    spec = layer_axis([HALF_PI] * 3)
    rays = edge_rays(spec)
    # mutually orthogonal edges, each at the same angle from the axis
    assert np.allclose(rays @ rays.T, np.eye(3), atol=1e-12)
    assert np.allclose(rays[:, 0], 1 / math.sqrt(3), atol=1e-12)
