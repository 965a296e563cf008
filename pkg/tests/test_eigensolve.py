import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from polylayer import spectra
from polylayer.eigensolve import (count_below, dense_count_below, dense_eigenvalues, inertia,
                                  smallest_eigenpairs)
from polylayer.errors import DomainError, NumericalError
from polylayer.femcore import assemble_layer, assemble_meridian, assemble_strip, stiffness_at
from polylayer.geometry import LayerSpec, layer_axis
from polylayer.meshgen import mesh_layer_sector, mesh_meridian, mesh_strip

PI2 = math.pi ** 2


def _small_pencils():
    """Assembled pencils with at most 300 unknowns, one per family."""
    out = []
    strip = assemble_strip(mesh_strip(1.5, 0.15, grading=1.2))
    out += [("strip", strip, t) for t in (0.4, 0.9)]
    mer = mesh_meridian(4.0, 0.25, grading=1.2)
    out += [(f"meridian{m}", assemble_meridian(mer, m), 0.6) for m in (0, 1)]
    spec = LayerSpec.regular(3, 0.6, r_max=2.0)
    layer = assemble_layer(mesh_layer_sector(spec, 0.25, phi_steps=4), spec)
    out.append(("layer", layer, 0.6))
    tri = layer_axis([math.pi / 2, math.pi / 2, 0.3], r_max=2.0)
    full = assemble_layer(mesh_layer_sector(tri, 0.5, phi_steps=2), tri)
    out.append(("trihedral", full, tri.theta))
    return out


SMALL = _small_pencils()


def test_small_pencils_are_small():
    for name, f, _ in SMALL:
        assert 20 <= f.n_dofs <= 300, name


def test_diagonal_examples():
    K = sp.diags([1.0, 2.0, 3.0]).tocsr()
    M = sp.identity(3, format="csr")
    res = smallest_eigenpairs(K, M, 2)
    assert np.allclose(res.eigenvalues, [1.0, 2.0], atol=1e-12)
    assert count_below(K, M, 2.5) == 2
    assert count_below(K, M, 0.5) == 0
    # exactly at an eigenvalue the level is nudged down
    assert count_below(K, M, 2.0) == 1
    assert inertia(K - 2.5 * M) == (2, 0, 1)


@pytest.mark.parametrize("name, forms, theta", SMALL, ids=[s[0] for s in SMALL])
def test_dense_oracle_agreement(name, forms, theta):
    K = stiffness_at(forms, theta)
    exact = dense_eigenvalues(K, forms.M)
    k = min(8, forms.n_dofs - 2)
    res = smallest_eigenpairs(K, forms.M, k)
    assert np.max(np.abs(res.eigenvalues - exact[:k]) / exact[:k]) <= 1e-9
    for level in np.concatenate([exact[:10], 0.5 * (exact[:9] + exact[1:10]), [PI2, 0.5 * PI2]]):
        level = float(level) * (1 + 1e-7)
        assert count_below(K, forms.M, level) == dense_count_below(K, forms.M, level)


@pytest.mark.parametrize("name, forms, theta", SMALL, ids=[s[0] for s in SMALL])
def test_eigenpair_invariants(name, forms, theta):
    K = stiffness_at(forms, theta)
    res = smallest_eigenpairs(K, forms.M, 5, tol=1e-8)
    V = res.eigenvectors
    assert np.all(np.diff(res.eigenvalues) >= 0)
    assert np.max(np.abs(V.T @ (forms.M @ V) - np.eye(5))) <= 1e-10
    assert np.all(res.residuals <= 1e-8)
    assert len(res) == 5


def test_count_monotone_in_level():
    _, forms, theta = SMALL[0]
    K = stiffness_at(forms, theta)
    levels = np.linspace(1.0, 400.0, 60)
    counts = [count_below(K, forms.M, s) for s in levels]
    assert all(a <= b for a, b in zip(counts, counts[1:]))


@settings(max_examples=30, deadline=None)
@given(st.integers(5, 40), st.integers(0, 2 ** 31 - 1))
def test_random_pencils_match_dense(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    K = A @ A.T + n * np.eye(n)
    B = rng.standard_normal((n, n))
    M = B @ B.T + n * np.eye(n)
    exact = dense_eigenvalues(K, M)
    res = smallest_eigenpairs(sp.csr_matrix(K), sp.csr_matrix(M), min(3, n - 1))
    assert np.allclose(res.eigenvalues, exact[:res.eigenvalues.size], rtol=1e-9, atol=0)
    level = float(np.median(exact))
    if np.min(np.abs(exact - level)) > 1e-9 * level:
        assert count_below(sp.csr_matrix(K), sp.csr_matrix(M), level) == int(np.sum(exact < level))


def test_consistency_count_vs_eigenpairs():
    forms, _ = spectra.vguide_forms(4.0, 0.05)
    K = stiffness_at(forms, math.pi / 4)
    res = smallest_eigenpairs(K, forms.M, 6)
    for level in (0.8 * PI2, PI2, 1.1 * PI2):
        assert count_below(K, forms.M, level) == int(np.sum(res.eigenvalues < level))


def test_vguide_right_angle_count_h005():
    forms, _ = spectra.vguide_forms(4.0, 0.05)
    K = stiffness_at(forms, math.pi / 4)
    assert count_below(K, forms.M, PI2) == 1


def test_straight_strip_separable_value():
    L = 4.0
    forms, _ = spectra.vguide_forms(L, 0.025)
    lam = smallest_eigenpairs(forms.K0, forms.M, 1).eigenvalues[0]
    exact = PI2 * (1 + (1 / (2 * L)) ** 2)
    assert abs(lam - exact) / exact < 0.02


def test_determinism_bitwise():
    _, forms, theta = SMALL[0]
    K = stiffness_at(forms, theta)
    a = smallest_eigenpairs(K, forms.M, 4)
    b = smallest_eigenpairs(K, forms.M, 4)
    assert a.eigenvalues.tobytes() == b.eigenvalues.tobytes()
    assert a.eigenvectors.tobytes() == b.eigenvectors.tobytes()


def test_sign_normalization():
    _, forms, theta = SMALL[0]
    V = smallest_eigenpairs(stiffness_at(forms, theta), forms.M, 3).eigenvectors
    idx = np.argmax(np.abs(V), axis=0)
    assert np.all(V[idx, np.arange(3)] > 0)


def test_explicit_shift():
    _, forms, theta = SMALL[0]
    K = stiffness_at(forms, theta)
    a = smallest_eigenpairs(K, forms.M, 3)
    b = smallest_eigenpairs(K, forms.M, 3, sigma=0.9 * a.eigenvalues[0])
    assert np.allclose(a.eigenvalues, b.eigenvalues, rtol=1e-10)


def test_argument_errors():
    K = sp.diags([1.0, 2.0, 3.0]).tocsr()
    M = sp.identity(3, format="csr")
    with pytest.raises(DomainError):
        smallest_eigenpairs(K, M, 3)
    with pytest.raises(DomainError):
        smallest_eigenpairs(K, M, 0)
    with pytest.raises(DomainError):
        smallest_eigenpairs(K, sp.identity(4, format="csr"), 1)


def test_unreachable_tolerance_raises_with_residuals():
    _, forms, theta = SMALL[0]
    with pytest.raises(NumericalError) as info:
        smallest_eigenpairs(stiffness_at(forms, theta), forms.M, 3, tol=1e-30)
    assert info.value.residuals is not None


def test_singular_pencil_raises():
    # K - s M is singular at every level: the retries cannot escape
    K = sp.csr_matrix(np.zeros((3, 3)))
    M = sp.csr_matrix(np.zeros((3, 3)))
    with pytest.raises(NumericalError):
        count_below(K, M, 1.0)
