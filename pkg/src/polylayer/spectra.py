"""Problem drivers: geometry, mesh, forms, pencil solve and certified counts.

Every driver returns a :class:`Spectrum` holding the eigenvalues found below
the essential-spectrum threshold and the exact number of pencil eigenvalues
below ``threshold * (1 - 1e-9)`` obtained from matrix inertia.
"""
import json
import math
import threading
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import eigensolve, femcore, meshgen
from .errors import DomainError
from .geometry import (HALF_PI, ConeSpec, LayerSpec, TrihedralAngles, VGuideSpec,
                       layer_axis, trihedral_dihedrals)

PI2 = math.pi ** 2
SCHEMA_VERSION = "1.0"
CERTIFY_FACTOR = 1.0 - 1e-9

# mesh options per family: a uniform core of cells of size h around the bend
# (or axis), geometric growth beyond it and a cap on the largest step
VGUIDE_MESH = dict(grading=1.15, core=0.5, max_ratio=8.0)
CONE_MESH = dict(grading=1.15, core=1.0, max_ratio=4.0)
LAYER_MESH = dict(grading=1.15, core=1.0, max_ratio=4.0, phi_steps=16, phi_grading=1.2)

# fine discretization of the planar guide that defines layer thresholds
THRESHOLD_H = 0.02
THRESHOLD_L = 6.0
THRESHOLD_LEVELS = 3
THRESHOLD_L_MAX = 30.0


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues below ``threshold`` and the certified count for one problem."""

    family: str
    problem: dict
    discretization: dict
    threshold: float
    eigenvalues: np.ndarray
    count: int
    residuals: np.ndarray
    computed: np.ndarray
    modes: tuple = None
    mode_counts: dict = None
    n_dofs: int = 0
    wall_clock: float = 0.0
    eigenvectors: np.ndarray = field(default=None, repr=False, compare=False)
    forms: object = field(default=None, repr=False, compare=False)

    @property
    def lambda1(self):
        return float(self.computed[0]) if len(self.computed) else math.nan

    def to_dict(self, timing=False):
        out = {
            "schema_version": SCHEMA_VERSION,
            "family": self.family,
            "problem": _plain(self.problem),
            "discretization": _plain(self.discretization),
            "threshold": float(self.threshold),
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "count": int(self.count),
            "residuals": [float(v) for v in self.residuals],
            "computed": [float(v) for v in self.computed],
            "n_dofs": int(self.n_dofs),
        }
        if self.modes is not None:
            out["modes"] = [int(m) for m in self.modes]
            out["mode_counts"] = {str(k): int(v) for k, v in sorted(self.mode_counts.items())}
        if timing:
            out["wall_clock"] = float(self.wall_clock)
        return out

    def to_json(self, timing=False):
        return json.dumps(self.to_dict(timing), sort_keys=True, indent=2)


@dataclass(frozen=True)
class ExtrapolationReport:
    """Level values, order-2 Richardson extrapolants and the observed order."""

    values: tuple
    extrapolants: tuple
    estimate: float
    order: float
    error: float
    warning: str = None

    def to_dict(self):
        return _plain({
            "values": list(self.values), "extrapolants": list(self.extrapolants),
            "estimate": self.estimate, "order": self.order, "error": self.error,
            "warning": self.warning,
        })


def _plain(obj):
    """JSON-ready copy: numpy scalars and arrays become Python numbers and lists."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


# ---------------------------------------------------------------------------
# pencil solve shared by all drivers
# ---------------------------------------------------------------------------

def solve_pencil(forms, theta, threshold, k=3, tol=eigensolve.DEFAULT_TOL,
                 seed=eigensolve.DEFAULT_SEED):
    """Solve ``(K(theta), M)`` and count eigenvalues below the certification level.

    At least ``k`` pairs are computed, and more if the inertia count exceeds
    ``k``, so every certified eigenvalue is also listed.

    Returns ``(EigenResult, count)``.
    """
    K = femcore.stiffness_at(forms, theta)
    count = eigensolve.count_below(K, forms.M, threshold * CERTIFY_FACTOR)
    n_max = forms.n_dofs - 1
    want = min(max(int(k), count), n_max)
    res = eigensolve.smallest_eigenpairs(K, forms.M, want, tol=tol, seed=seed)
    return res, count


def _spectrum(family, problem, disc, threshold, forms, res, count, t0, keep_vectors,
              modes=None, mode_counts=None):
    below = res.eigenvalues < threshold
    return Spectrum(
        family=family, problem=problem, discretization=disc, threshold=float(threshold),
        eigenvalues=res.eigenvalues[below], count=int(count), residuals=res.residuals,
        computed=res.eigenvalues, modes=modes, mode_counts=mode_counts,
        n_dofs=forms.n_dofs if forms is not None else 0,
        wall_clock=time.perf_counter() - t0,
        eigenvectors=res.eigenvectors if keep_vectors else None,
        forms=forms if keep_vectors else None,
    )


def _refined(mesh, refinements):
    for _ in range(int(refinements)):
        mesh = meshgen.refine(mesh)
    return mesh


def _options(defaults, overrides):
    opts = dict(defaults)
    for key, value in (overrides or {}).items():
        if key not in defaults:
            raise DomainError(f"unknown mesh option {key!r}")
        opts[key] = value
    return opts


def _check_open_theta(theta):
    theta = float(theta)
    if not 0 < theta <= HALF_PI:
        raise DomainError(f"theta must lie in (0, pi/2], got {theta!r}")
    return theta


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------

def vguide_forms(L=4.0, h=0.025, refinements=0, mesh_options=None):
    opts = _options(VGUIDE_MESH, mesh_options)
    mesh = _refined(meshgen.mesh_strip(L, h, **opts), refinements)
    return femcore.assemble_strip(mesh), opts


def solve_vguide(theta, L=4.0, h=0.025, k=3, refinements=0, mesh_options=None,
                 tol=eigensolve.DEFAULT_TOL, seed=eigensolve.DEFAULT_SEED, keep_vectors=False):
    """Broken guide of half-opening ``theta``; the threshold is ``pi^2``."""
    t0 = time.perf_counter()
    spec = VGuideSpec(_check_open_theta(theta), float(L))
    forms, opts = vguide_forms(spec.half_length, h, refinements, mesh_options)
    res, count = solve_pencil(forms, spec.theta, PI2, k, tol, seed)
    problem = {"theta": spec.theta, "L": spec.half_length}
    disc = dict(h=float(h), refinements=int(refinements), k=int(k), tol=tol, seed=int(seed), **opts)
    return _spectrum("vguide", problem, disc, PI2, forms, res, count, t0, keep_vectors)


def cone_forms(r_max=40.0, h=0.05, mode=0, refinements=0, mesh_options=None):
    opts = _options(CONE_MESH, mesh_options)
    mesh = _refined(meshgen.mesh_meridian(r_max, h, **opts), refinements)
    return femcore.assemble_meridian(mesh, mode), opts


def solve_cone(theta, r_max=40.0, h=0.05, modes=(0, 1, 2), k=3, refinements=0,
               mesh_options=None, tol=eigensolve.DEFAULT_TOL, seed=eigensolve.DEFAULT_SEED,
               keep_vectors=False):
    """Conical layer, one meridian problem per Fourier mode, merged.

    Modes ``m >= 1`` stand for the pair ``+-m``; their eigenvalues are listed
    once, but each counts twice in ``count``.
    """
    t0 = time.perf_counter()
    spec = ConeSpec(_check_open_theta(theta), float(r_max), tuple(int(m) for m in modes))
    values, labels, resid, computed = [], [], [], []
    mode_counts = {}
    forms0 = None
    for m in spec.modes:
        forms, opts = cone_forms(spec.r_max, h, m, refinements, mesh_options)
        res, count = solve_pencil(forms, spec.theta, PI2, k, tol, seed)
        if m == spec.modes[0]:
            forms0 = forms
        mode_counts[m] = count
        values.append(res.eigenvalues)
        labels.append(np.full(res.eigenvalues.size, m))
        resid.append(res.residuals)
    values = np.concatenate(values)
    labels = np.concatenate(labels)
    resid = np.concatenate(resid)
    order = np.lexsort((labels, values))
    values, labels, resid = values[order], labels[order], resid[order]
    below = values < PI2
    total = sum(c * (1 if m == 0 else 2) for m, c in mode_counts.items())
    problem = {"theta": spec.theta, "r_max": spec.r_max, "modes": list(spec.modes)}
    disc = dict(h=float(h), refinements=int(refinements), k=int(k), tol=tol, seed=int(seed),
                **_options(CONE_MESH, mesh_options))
    return Spectrum(
        family="cone", problem=problem, discretization=disc, threshold=PI2,
        eigenvalues=values[below], count=int(total), residuals=resid, computed=values,
        modes=tuple(int(m) for m in labels[below]), mode_counts=mode_counts,
        n_dofs=forms0.n_dofs, wall_clock=time.perf_counter() - t0,
        forms=forms0 if keep_vectors else None,
    )


def layer_forms(spec, h=0.1, refinements=0, mesh_options=None):
    opts = _options(LAYER_MESH, mesh_options)
    mesh = _refined(meshgen.mesh_layer_sector(spec, h, **opts), refinements)
    return femcore.assemble_layer(mesh, spec), opts


def _layer_problem(spec):
    return {
        "theta": spec.theta, "face_azimuths": list(spec.face_azimuths), "r_max": spec.r_max,
        "symmetry_subspace": spec.symmetry_subspace,
        "vertex_angles": list(spec.vertex_angles), "dihedral_angles": list(spec.dihedral_angles),
    }


def solve_layer(spec, h=0.1, k=3, refinements=0, mesh_options=None,
                tol=eigensolve.DEFAULT_TOL, seed=eigensolve.DEFAULT_SEED, keep_vectors=False):
    """Polyhedral layer; the threshold is that of the sharpest edge."""
    if not isinstance(spec, LayerSpec):
        raise DomainError("solve_layer needs a LayerSpec")
    t0 = time.perf_counter()
    lam = threshold(float(np.min(spec.dihedral_angles)))
    forms, opts = layer_forms(spec, h, refinements, mesh_options)
    res, count = solve_pencil(forms, spec.theta, lam, k, tol, seed)
    disc = dict(h=float(h), refinements=int(refinements), k=int(k), tol=tol, seed=int(seed), **opts)
    return _spectrum("layer", _layer_problem(spec), disc, lam, forms, res, count, t0, keep_vectors)


def solve_trihedral(alphas, h=0.1, k=3, r_max=12.0, refinements=0, mesh_options=None,
                    tol=eigensolve.DEFAULT_TOL, seed=eigensolve.DEFAULT_SEED, keep_vectors=False):
    """Layer around a trihedral angle with vertex angles ``alphas``.

    The full turn is meshed, so the count covers every symmetry class.
    """
    t0 = time.perf_counter()
    angles = TrihedralAngles(tuple(alphas))
    spec = layer_axis(angles.alphas, r_max=r_max)
    betas = trihedral_dihedrals(angles.alphas)
    lam = threshold(float(np.min(betas)))
    forms, opts = layer_forms(spec, h, refinements, mesh_options)
    res, count = solve_pencil(forms, spec.theta, lam, k, tol, seed)
    problem = _layer_problem(spec)
    problem.update(alphas=list(angles.alphas), betas=list(betas))
    disc = dict(h=float(h), refinements=int(refinements), k=int(k), tol=tol, seed=int(seed), **opts)
    return _spectrum("trihedral", problem, disc, lam, forms, res, count, t0, keep_vectors)


# ---------------------------------------------------------------------------
# thresholds
# ---------------------------------------------------------------------------

_threshold_cache = {}
_threshold_lock = threading.Lock()
_threshold_key_locks = {}


def _lambda1_vguide(theta, L, h, level):
    forms, _ = vguide_forms(L, h, refinements=level)
    K = femcore.stiffness_at(forms, theta)
    return float(eigensolve.smallest_eigenpairs(K, forms.M, 1).eigenvalues[0])


def threshold_report(beta, h=THRESHOLD_H, L=THRESHOLD_L, levels=THRESHOLD_LEVELS):
    """Refinement study of the broken guide with full opening ``beta``."""
    beta = float(beta)
    if not 0 < beta < math.pi:
        raise DomainError(f"beta must lie in (0, pi) for a refinement study, got {beta!r}")
    # obtuse openings bind weakly and decay slowly along the arms
    L_eff = min(L * max(1.0, math.tan(0.5 * beta)), THRESHOLD_L_MAX)
    return extrapolate(lambda lvl: _lambda1_vguide(0.5 * beta, L_eff, h, lvl), levels)


def threshold(beta):
    """Bottom of the essential spectrum for a layer whose sharpest edge has dihedral ``beta``.

    Equal to the ground state of the planar broken guide of full opening
    ``beta``, computed once per ``beta`` on a fine refinement sequence and
    extrapolated.  ``beta >= pi`` gives ``pi^2`` (straight strip).
    """
    beta = float(beta)
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta!r}")
    if beta >= math.pi:
        return PI2
    with _threshold_lock:
        if beta in _threshold_cache:
            return _threshold_cache[beta]
        key_lock = _threshold_key_locks.setdefault(beta, threading.Lock())
    with key_lock:
        with _threshold_lock:
            if beta in _threshold_cache:
                return _threshold_cache[beta]
        rep = threshold_report(beta)
        value = rep.estimate if rep.estimate is not None else rep.values[-1]
        value = min(float(value), PI2)
        with _threshold_lock:
            _threshold_cache[beta] = value
    return value


def clear_threshold_cache():
    with _threshold_lock:
        _threshold_cache.clear()
        _threshold_key_locks.clear()


# ---------------------------------------------------------------------------
# extrapolation
# ---------------------------------------------------------------------------

def richardson(values):
    """Order-2 Richardson extrapolants of consecutive levels (mesh size halved per level)."""
    v = np.asarray(values, dtype=float)
    return v[1:] + (v[1:] - v[:-1]) / 3.0


def extrapolate(problem, levels=3):
    """Evaluate ``problem(level)`` for ``level = 0 .. levels-1`` and extrapolate.

    The observed order uses the last three levels.  Values that do not move
    monotonically produce a warning and no extrapolant.
    """
    levels = int(levels)
    if levels < 3:
        raise DomainError("extrapolation needs at least three levels")
    values = np.array([float(problem(lvl)) for lvl in range(levels)])
    diffs = np.diff(values)
    v0, v1, v2 = values[-3:]
    num, den = v0 - v1, v1 - v2
    with np.errstate(divide="ignore", invalid="ignore"):
        order = float(np.log2(num / den)) if num * den > 0 else math.nan
    if np.any(diffs > 0) and np.any(diffs < 0):
        msg = "level values are not monotone; no extrapolant"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return ExtrapolationReport(tuple(values), (), None, order, math.nan, msg)
    ext = richardson(values)
    return ExtrapolationReport(tuple(values), tuple(ext), float(ext[-1]), order,
                               float(abs(ext[-1] - ext[-2])))


def spectrum_levels(solve, levels=3, **kwargs):
    """Run a driver at ``refinements = 0 .. levels-1``; returns the list of spectra."""
    return [solve(refinements=lvl, **kwargs) for lvl in range(int(levels))]
