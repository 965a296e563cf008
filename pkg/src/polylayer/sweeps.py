"""Angle sweeps and the checks built on the pencil ``K(theta) = K0 + cos(theta) R``.

One mesh and one set of forms serve the whole sweep.  On that fixed discrete
space monotonicity is exact: if ``v^T K(s) v < pi^2 v^T M v`` then, because
``lambda_min(K0, M) >= pi^2``, ``v^T R v < 0`` and ``K(theta)`` lies below
``K(s)`` on ``v`` for every ``theta < s``.  Max-min then orders eigenvalues
below ``pi^2``.
"""
import io
import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import eigensolve, femcore, spectra
from .errors import DomainError
from .geometry import HALF_PI, ConeSpec, LayerSpec, VGuideSpec, trihedral_dihedrals

PI2 = spectra.PI2
PASS, FAIL, NOT_CERTIFIED = "pass", "fail", "not-certified"


@dataclass(frozen=True)
class AnglePoint:
    """Pencil solve at one angle of a sweep."""

    theta: float
    eigenvalues: np.ndarray
    residuals: np.ndarray
    threshold: float
    count: int
    certified: int
    eigenvectors: np.ndarray = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class SweepResult:
    """Per-angle solves on one fixed mesh plus monotonicity verdicts.

    ``verdicts[j]`` compares ``lambda_j`` at consecutive angles: ``pass`` if it
    does not decrease beyond ``margin``, ``fail`` otherwise, ``not-certified``
    when either value is not certified below ``certify_level``.
    """

    family: str
    thetas: np.ndarray
    points: tuple
    verdicts: dict
    margin: float
    certify_level: float
    lambda_min_ref: float
    descriptor: dict

    @property
    def counts(self):
        return [p.count for p in self.points]

    @property
    def monotone(self):
        return all(v != FAIL for row in self.verdicts.values() for v in row)

    @property
    def counts_nonincreasing(self):
        c = self.counts
        return all(a >= b for a, b in zip(c, c[1:]))

    def lambda_j(self, j):
        return np.array([p.eigenvalues[j] if j < len(p.eigenvalues) else math.nan for p in self.points])

    def bound_table(self):
        """``(theta, lambda_1, (1 - cos) pi^2, (1 - cos) lambda_min(K0, M))`` per angle."""
        rows = []
        for p in self.points:
            one = 1.0 - math.cos(p.theta)
            rows.append((p.theta, float(p.eigenvalues[0]), one * PI2, one * self.lambda_min_ref))
        return rows

    def to_dict(self):
        return spectra._plain({
            "schema_version": spectra.SCHEMA_VERSION,
            "family": self.family,
            "descriptor": self.descriptor,
            "thetas": list(self.thetas),
            "margin": self.margin,
            "certify_level": self.certify_level,
            "lambda_min_ref": self.lambda_min_ref,
            "points": [{
                "theta": p.theta, "eigenvalues": list(p.eigenvalues), "threshold": p.threshold,
                "count": p.count, "certified": p.certified, "residuals": list(p.residuals),
            } for p in self.points],
            "verdicts": {str(j): list(v) for j, v in sorted(self.verdicts.items())},
            "monotone": self.monotone,
            "counts_nonincreasing": self.counts_nonincreasing,
            "bounds": [dict(zip(("theta", "lambda1", "continuum_bound", "discrete_bound"), r))
                       for r in self.bound_table()],
        })

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self):
        """One row per ``(theta, j)``; ``lower_bound`` is ``(1 - cos theta) lambda_min(K0, M)``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta", "j", "lambda", "certified", "threshold", "lower_bound"])
        for p in self.points:
            lb = (1.0 - math.cos(p.theta)) * self.lambda_min_ref
            for j, lam in enumerate(p.eigenvalues):
                w.writerow([repr(float(p.theta)), j + 1, repr(float(lam)), int(j < p.certified),
                            repr(float(p.threshold)), repr(float(lb))])
        return buf.getvalue()

    def to_svg(self, width=640, height=400):
        return sweep_svg(self, width, height)


# ---------------------------------------------------------------------------
# family templates
# ---------------------------------------------------------------------------

def _family_forms(template, disc):
    """Assemble the forms of a template once; returns ``(name, forms, threshold_fn, descriptor)``."""
    disc = dict(disc or {})
    refinements = disc.pop("refinements", 0)
    mesh_options = disc.pop("mesh_options", None)
    if isinstance(template, str):
        template = {"vguide": VGuideSpec(HALF_PI), "cone": ConeSpec(HALF_PI)}.get(template, template)
    if isinstance(template, VGuideSpec):
        h = disc.pop("h", 0.025)
        L = disc.pop("L", template.half_length)
        forms, opts = spectra.vguide_forms(L, h, refinements, mesh_options)
        desc = dict(L=L, h=h, refinements=refinements, **opts)
        name, thr = "vguide", (lambda theta: PI2)
    elif isinstance(template, ConeSpec):
        h = disc.pop("h", 0.05)
        r_max = disc.pop("r_max", template.r_max)
        mode = int(disc.pop("mode", 0))
        forms, opts = spectra.cone_forms(r_max, h, mode, refinements, mesh_options)
        desc = dict(r_max=r_max, h=h, mode=mode, refinements=refinements, **opts)
        name, thr = "cone", (lambda theta: PI2)
    elif isinstance(template, LayerSpec):
        h = disc.pop("h", 0.1)
        forms, opts = spectra.layer_forms(template, h, refinements, mesh_options)
        desc = dict(face_azimuths=list(template.face_azimuths), r_max=template.r_max,
                    symmetry_subspace=template.symmetry_subspace, h=h,
                    refinements=refinements, **opts)
        name = "layer"

        def thr(theta):
            return spectra.threshold(float(np.min(template.with_theta(theta).dihedral_angles)))
    else:
        raise DomainError(f"unknown sweep family {template!r}")
    if disc:
        raise DomainError(f"unknown discretization keys {sorted(disc)}")
    return name, forms, thr, desc


def lambda_min_reference(forms, tol=eigensolve.DEFAULT_TOL, seed=eigensolve.DEFAULT_SEED):
    """Smallest eigenvalue of ``(K0, M)``: the discrete straight-domain floor."""
    return float(eigensolve.smallest_eigenpairs(forms.K0, forms.M, 1, tol=tol, seed=seed).eigenvalues[0])


def _solve_point(forms, theta, lam_thr, k, tol, seed, certify_level, keep_vectors):
    K = femcore.stiffness_at(forms, theta)
    count = eigensolve.count_below(K, forms.M, lam_thr * spectra.CERTIFY_FACTOR)
    certified = eigensolve.count_below(K, forms.M, certify_level * spectra.CERTIFY_FACTOR)
    want = min(max(int(k), count, certified), forms.n_dofs - 1)
    res = eigensolve.smallest_eigenpairs(K, forms.M, want, tol=tol, seed=seed)
    return AnglePoint(float(theta), res.eigenvalues, res.residuals, float(lam_thr), count, certified,
                      res.eigenvectors if keep_vectors else None)


def _check_grid(thetas, upper=HALF_PI, closed=True):
    t = np.asarray(thetas, dtype=float).ravel()
    if t.size == 0:
        raise DomainError("empty angle grid")
    if np.any(np.diff(t) <= 0):
        raise DomainError("angle grid must be strictly increasing")
    if np.any(t <= 0) or np.any(t > upper if closed else t >= upper):
        raise DomainError(f"angles must lie in (0, pi/2], got {t}")
    return t


def monotonicity_verdicts(points, margin):
    verdicts = {}
    n_j = max((len(p.eigenvalues) for p in points), default=0)
    for j in range(n_j):
        row = []
        for a, b in zip(points, points[1:]):
            if j < a.certified and j < b.certified:
                row.append(PASS if a.eigenvalues[j] <= b.eigenvalues[j] + margin else FAIL)
            else:
                row.append(NOT_CERTIFIED)
        verdicts[j + 1] = row
    return verdicts


def sweep_angle(family, thetas, discretization=None, k=3, tol=eigensolve.DEFAULT_TOL,
                seed=eigensolve.DEFAULT_SEED, workers=1, certify_level=PI2, keep_vectors=False):
    """Solve the pencil of one fixed mesh over an angle grid and judge monotonicity.

    ``family`` is ``"vguide"``, ``"cone"`` or a :class:`VGuideSpec`,
    :class:`ConeSpec` or :class:`LayerSpec` whose angle is ignored.  Counts use
    the family threshold; verdicts use ``certify_level`` (default ``pi^2``,
    the level at which the discrete monotonicity argument holds).  The
    verdict margin is ``2 * tol``.
    """
    thetas = _check_grid(thetas)
    name, forms, thr, desc = _family_forms(family, discretization)
    lam_thr = {float(t): thr(float(t)) for t in thetas}

    def run(theta):
        return _solve_point(forms, theta, lam_thr[float(theta)], k, tol, seed, certify_level, keep_vectors)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            done = dict(zip(thetas.tolist(), pool.map(run, thetas.tolist())))
    else:
        done = {t: run(t) for t in thetas.tolist()}
    points = tuple(done[t] for t in thetas.tolist())
    margin = 2.0 * tol
    lam_ref = lambda_min_reference(forms, tol, seed)
    return SweepResult(name, thetas, points, monotonicity_verdicts(points, margin), margin,
                       float(certify_level), lam_ref, desc)


# ---------------------------------------------------------------------------
# transported trial functions
# ---------------------------------------------------------------------------

def transported_form_check(forms, v, sigma, thetas, level=PI2):
    """Follow one trial vector through the family and check the sign mechanism.

    ``q(theta) = v^T (K0 + cos(theta) R) v``.  When ``q(sigma) < level`` the
    remainder ``v^T R v`` must be negative and ``q`` strictly increasing on
    ``thetas`` followed by ``sigma``.
    """
    v = np.asarray(v, dtype=float)
    norm = float(v @ (forms.M @ v))
    if abs(norm - 1.0) > 1e-10:
        raise DomainError(f"trial vector must satisfy v^T M v = 1, got {norm!r}")
    sigma = float(sigma)
    thetas = _check_grid(thetas)
    if np.any(thetas >= sigma):
        raise DomainError("all grid angles must lie below sigma")
    k0 = float(v @ (forms.K0 @ v))
    rv = float(v @ (forms.R @ v))
    grid = np.append(thetas, sigma)
    q = k0 + np.cos(grid) * rv
    below = bool(q[-1] < level)
    sign_ok = rv < 0 if below else None
    increasing = bool(np.all(np.diff(q) > 0))
    # affinity in cos(theta): compare directly assembled values with the line through the ends
    direct = np.array([float(v @ (femcore.stiffness_at(forms, t) @ v)) for t in grid])
    c = np.cos(grid)
    line = direct[0] + (c - c[0]) * (direct[-1] - direct[0]) / (c[-1] - c[0]) if grid.size > 1 else direct
    collinearity = float(np.max(np.abs(direct - line)) / max(abs(direct).max(), 1e-300))
    passed = (not below) or (sign_ok and increasing)
    return {
        "rows": [(float(t), float(val)) for t, val in zip(grid, direct)],
        "vRv": rv, "vK0v": k0, "q_sigma": float(q[-1]), "level": float(level),
        "below": below, "sign_ok": sign_ok, "increasing": increasing,
        "collinearity": collinearity, "passed": bool(passed),
    }


# ---------------------------------------------------------------------------
# flat limit
# ---------------------------------------------------------------------------

def flat_limit_check(family="vguide", thetas=(1.2, 1.35, 1.5), discretization=None,
                     tol=eigensolve.DEFAULT_TOL, seed=eigensolve.DEFAULT_SEED):
    """Ground state as the domain flattens: bounds per angle and shrinking gap to ``pi^2``.

    The lower bound checked is the discrete one,
    ``lambda_1(theta) >= (1 - cos theta) lambda_min(K0, M)``.
    """
    thetas = _check_grid(thetas)
    if np.any(thetas <= 1.0):
        raise DomainError("flat-limit angles must lie in (1, pi/2]")
    sweep = sweep_angle(family, thetas, discretization, k=1, tol=tol, seed=seed)
    rows = []
    for p in sweep.points:
        lam = float(p.eigenvalues[0])
        bound = (1.0 - math.cos(p.theta)) * sweep.lambda_min_ref
        rows.append({
            "theta": p.theta, "lambda1": lam, "gap": PI2 - lam,
            "discrete_bound": bound, "continuum_bound": (1.0 - math.cos(p.theta)) * PI2,
            "bound_ok": lam >= bound, "below_threshold": lam < PI2, "count": p.count,
        })
    gaps = [r["gap"] for r in rows]
    return {
        "rows": rows, "lambda_min_ref": sweep.lambda_min_ref,
        "gap_decreasing": all(a > b for a, b in zip(gaps, gaps[1:])),
        "bounds_ok": all(r["bound_ok"] for r in rows),
    }


# ---------------------------------------------------------------------------
# non-monotone unfolding
# ---------------------------------------------------------------------------

def nonmonotone_demo(eps=0.3, h=0.1, r_max=12.0, refinements=0, k=3,
                     tol=eigensolve.DEFAULT_TOL, seed=eigensolve.DEFAULT_SEED, mesh_options=None):
    """Trihedral layers ``(pi/2, pi/2, eps)`` and ``(pi/2, pi/2, pi/2)`` on matched meshes.

    The second angle dominates the first in every vertex and dihedral angle,
    yet only the second is expected to carry an eigenvalue below its threshold.
    """
    eps = float(eps)
    if not 0 < eps <= HALF_PI:
        raise DomainError(f"eps must lie in (0, pi/2], got {eps!r}")
    small = (HALF_PI, HALF_PI, eps)
    right = (HALF_PI, HALF_PI, HALF_PI)
    kw = dict(h=h, k=k, r_max=r_max, refinements=refinements, mesh_options=mesh_options,
              tol=tol, seed=seed)
    s_small = spectra.solve_trihedral(small, **kw)
    s_right = spectra.solve_trihedral(right, **kw)
    b_small = np.sort(trihedral_dihedrals(small))
    b_right = np.sort(trihedral_dihedrals(right))
    a_small, a_right = np.sort(small), np.sort(right)
    return {
        "eps": eps,
        "alphas": [list(small), list(right)],
        "betas": [list(b_small), list(b_right)],
        "vertex_dominance": bool(np.all(a_small <= a_right)),
        "dihedral_dominance": bool(np.all(b_small <= b_right + 1e-12)),
        "thresholds": [s_small.threshold, s_right.threshold],
        "counts": [s_small.count, s_right.count],
        "lambda1": [s_small.lambda1, s_right.lambda1],
        "expected": s_small.count == 0 and s_right.count >= 1,
        "spectra": [s_small, s_right],
    }


# ---------------------------------------------------------------------------
# plot
# ---------------------------------------------------------------------------

def sweep_svg(result, width=640, height=400):
    """Minimal SVG: ``lambda_j(theta) / pi^2`` polylines with the threshold as a dashed line."""
    pad = 50
    thetas = np.asarray(result.thetas)
    series = [result.lambda_j(j) / PI2 for j in range(max(len(p.eigenvalues) for p in result.points))]
    thr = np.array([p.threshold for p in result.points]) / PI2
    ys = np.concatenate([np.concatenate(series), thr])
    ys = ys[np.isfinite(ys)]
    y0, y1 = float(ys.min()), float(ys.max())
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 0.5, y1 + 0.5
    x0, x1 = float(thetas.min()), float(thetas.max())
    if x1 - x0 < 1e-12:
        x0, x1 = x0 - 0.1, x1 + 0.1

    def px(t):
        return pad + (t - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>']
    for t in np.linspace(x0, x1, 5):
        out.append(f'<text x="{px(t):.1f}" y="{height - pad + 18}" font-size="11" '
                   f'text-anchor="middle">{t:.3g}</text>')
    for y in np.linspace(y0, y1, 5):
        out.append(f'<text x="{pad - 6}" y="{py(y) + 4:.1f}" font-size="11" text-anchor="end">{y:.4g}</text>')
    out.append(f'<text x="{width / 2}" y="{height - 10}" font-size="12" text-anchor="middle">theta</text>')
    out.append(f'<text x="14" y="{height / 2}" font-size="12" transform="rotate(-90 14 {height / 2})" '
               f'text-anchor="middle">lambda / pi^2</text>')
    pts = " ".join(f"{px(t):.1f},{py(y):.1f}" for t, y in zip(thetas, thr))
    out.append(f'<polyline points="{pts}" fill="none" stroke="gray" stroke-dasharray="6,4"/>')
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    for j, ser in enumerate(series):
        ok = np.isfinite(ser)
        pts = " ".join(f"{px(t):.1f},{py(y):.1f}" for t, y in zip(thetas[ok], ser[ok]))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{colors[j % len(colors)]}" stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
