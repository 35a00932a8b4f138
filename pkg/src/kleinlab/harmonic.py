"""Hyperbolic Poisson extension, Green's functions, flux and measure identities.

The Poisson kernel is k(x, y) = (1 - |x|^2)/|x - y|^2; k^n against normalized
surface measure is the harmonic measure of the ball seen from x, which is also
the pushforward of the uniform measure under any ball isometry sending 0 to x.
That pushforward gives an exact importance sampler, so indicator extensions
are unbiased sample means with kernel-free weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Callable

import numpy as np

from .caps import SphericalCap
from .geom import BallPoint, ball_gauge, uniform_sphere
from .group import GroupPresentation
from .limitset import LimitSetCloud
from .mobius import poincare_extend


class GreenPole(ValueError):
    """Green's function evaluated on the diagonal (or an orbit collision)."""


class CloudTooCoarse(RuntimeError):
    """Indeterminate boundary fraction too large for a meaningful estimate."""


# ---------------------------------------------------------------------------
# boundary indicators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryIndicator:
    """Pointwise-decidable membership test on S^n.

    membership maps unit rows to booleans; indeterminate (possibly None)
    flags rows whose membership the indicator cannot certify, e.g. points
    inside the resolution band of a sampled limit set.
    """

    kind: str
    membership: Callable[[np.ndarray], np.ndarray]
    indeterminate: Callable[[np.ndarray], np.ndarray] | None = None


def full_sphere() -> BoundaryIndicator:
    return BoundaryIndicator(
        kind="full-sphere",
        membership=lambda U: np.ones(np.atleast_2d(U).shape[0], dtype=bool),
    )


def hemisphere(axis: np.ndarray) -> BoundaryIndicator:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return BoundaryIndicator(
        kind="hemisphere",
        membership=lambda U: np.atleast_2d(U) @ axis >= 0.0,
    )


def cap_union(caps: list[SphericalCap]) -> BoundaryIndicator:
    def member(U):
        U = np.atleast_2d(U)
        out = np.zeros(U.shape[0], dtype=bool)
        for cap in caps:
            out |= cap.contains(U)
        return out

    return BoundaryIndicator(kind="cap-union", membership=member)


def cloud_complement(L: LimitSetCloud) -> BoundaryIndicator:
    """Indicator of the domain of discontinuity, up to the resolution band."""
    band = (L.resolution or 0.0)

    def member(U):
        return L.nearest(np.atleast_2d(U)) > band

    def indet(U):
        return L.nearest(np.atleast_2d(U)) <= band

    return BoundaryIndicator(
        kind="complement-of-cloud", membership=member, indeterminate=indet
    )


# ---------------------------------------------------------------------------
# Poisson kernel and harmonic extension
# ---------------------------------------------------------------------------

def poisson_kernel(x: BallPoint, y) -> float:
    """k(x, y) = (1 - |x|^2) / |x - y|^2 for y on the boundary sphere."""
    yv = np.asarray(y.vec if hasattr(y, "vec") else y, dtype=float)
    num = 1.0 - float(x.vec @ x.vec)
    den = float(np.sum((x.vec - yv) ** 2))
    return num / den


def poisson_kernel_rows(x: BallPoint, Y: np.ndarray) -> np.ndarray:
    Y = np.atleast_2d(Y)
    num = 1.0 - float(x.vec @ x.vec)
    den = np.einsum("ij,ij->i", Y - x.vec, Y - x.vec)
    return num / den


def boundary_shift_rows(x: BallPoint, Z: np.ndarray) -> np.ndarray:
    """Boundary action of the ball isometry sending 0 to x, on unit rows.

    Restriction of the Mobius gyro-translation to |z| = 1; pushes the uniform
    measure forward to the harmonic measure seen from x.
    """
    Z = np.atleast_2d(Z)
    xv = x.vec
    x2 = float(xv @ xv)
    dots = Z @ xv
    denom = 1.0 + 2.0 * dots + x2
    out = ((2.0 + 2.0 * dots)[:, None] * xv + (1.0 - x2) * Z) / denom[:, None]
    return out / np.linalg.norm(out, axis=1, keepdims=True)


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    samples: int
    indeterminate_fraction: float = 0.0


def harmonic_extension(chi: BoundaryIndicator, x: BallPoint, n_samples: int,
                       seed: int = 0) -> MCEstimate:
    """u(x): harmonic measure of the indicator set, by exact importance sampling.

    Uniform sphere samples pushed through the ball isometry 0 -> x land with
    the harmonic measure of x, so the estimator is the plain mean of the
    indicator; indeterminate rows count toward the reported fraction and are
    scored as outside.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    n = x.vec.size - 1
    Z = uniform_sphere(rng, n, n_samples)
    Y = boundary_shift_rows(x, Z)
    vals = chi.membership(Y).astype(float)
    indet = 0.0
    if chi.indeterminate is not None:
        indet = float(chi.indeterminate(Y).mean())
    value = float(vals.mean())
    stderr = float(vals.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    return MCEstimate(value=value, stderr=stderr, samples=n_samples,
                      indeterminate_fraction=indet)


# ---------------------------------------------------------------------------
# Green's function on the ball and on quotients
# ---------------------------------------------------------------------------

def _green_antiderivative(n: int, t: np.ndarray) -> np.ndarray:
    """Antiderivative of (1 - t^2)^{n-1} / t^n via the binomial expansion."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for k in range(n):
        c = comb(n - 1, k) * (-1.0) ** k
        p = 2 * k - n
        if p == -1:
            out = out + c * np.log(t)
        else:
            out = out + c * t ** (p + 1) / (p + 1)
    return out


def green_gauge(n: int, s) -> np.ndarray:
    """g as a function of the gauge s = tanh(rho/2), for the ball over S^n."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0.0):
        raise GreenPole("gauge reached zero: coincident points")
    return _green_antiderivative(n, np.ones_like(s)) - _green_antiderivative(n, s)


def green_ball(x: BallPoint, y: BallPoint) -> float:
    """Green's function of the hyperbolic ball at (x, y), symmetric in x, y."""
    s = ball_gauge(x, y)
    if s <= 0.0:
        raise GreenPole("green_ball evaluated on the diagonal")
    return float(green_gauge(x.vec.size - 1, s))


@dataclass(frozen=True)
class GreenPartial:
    value: float
    by_depth: list[float]
    terms: int


def green_quotient(x: BallPoint, y: BallPoint, G: GroupPresentation,
                   max_len: int) -> GreenPartial:
    """Partial sum over enumerated gamma of g(x, gamma y), with a depth trend."""
    from .group import enumerate_elements

    n = G.n
    words = enumerate_elements(G, max_len)
    per_depth = np.zeros(max_len + 1)
    for w in words:
        ext = poincare_extend(w.map)
        gy = BallPoint(ext.apply_ball_rows(y.vec[None, :])[0])
        s = ball_gauge(x, gy)
        if s <= 1e-14:
            raise GreenPole(f"orbit point of y collides with x at word {w.letters}")
        per_depth[len(w)] += float(green_gauge(n, s))
    partials = np.cumsum(per_depth)
    return GreenPartial(value=float(partials[-1]), by_depth=partials.tolist(),
                        terms=len(words))


# ---------------------------------------------------------------------------
# flux density and the measure identity
# ---------------------------------------------------------------------------

def flux_density_check(n: int, radii=(0.3, 0.5, 0.7), probes: int = 100,
                       seed: int = 0, fd_step: float = 1e-6) -> dict:
    """Radial flux density of g(0, .) against the two readings of the measure.

    The hyperbolic normal derivative of g at |y| = r is (1-r^2)^n / (2 r^n)
    inward; multiplied by the hyperbolic area element it gives the constant
    density 2^{n-1} per unit of Euclidean boundary-sphere measure, while the
    unit-sphere reading leaves a residual r^n. The constant-in-r reading is
    reported as selected.
    """
    rng = np.random.default_rng(seed)
    report: dict = {"n": n, "radii": list(radii)}
    ratios_unit = []
    ratios_bdry = []
    fd_errs = []
    iso_vars = []
    for r in radii:
        minus_dgdn = (1.0 - r * r) ** n / (2.0 * r**n)
        hyp_area_scale = (2.0 / (1.0 - r * r)) ** n * r**n  # d sigma / d omega_unit
        measured = minus_dgdn * hyp_area_scale  # = 2^{n-1}, per unit sphere
        ratios_unit.append(measured / (2.0 ** (n - 1) / r**n))
        ratios_bdry.append(measured / (2.0 ** (n - 1) / r**n * r**n))
        # isotropy + finite-difference cross-check over probe directions
        dirs = uniform_sphere(rng, n, probes)
        vals = []
        for u in dirs:
            gp = green_gauge(n, r + fd_step)
            gm = green_gauge(n, r - fd_step)
            radial = (gp - gm) / (2 * fd_step)
            vals.append(-(1.0 - r * r) / 2.0 * radial)
        vals = np.array(vals)
        iso_vars.append(float(vals.var()))
        fd_errs.append(float(abs(vals.mean() - minus_dgdn) / minus_dgdn))
    report["ratio_unit_sphere_measure"] = ratios_unit
    report["ratio_boundary_sphere_measure"] = ratios_bdry
    report["isotropy_variance"] = iso_vars
    report["fd_relative_error"] = fd_errs
    spread_unit = max(ratios_unit) - min(ratios_unit)
    spread_bdry = max(ratios_bdry) - min(ratios_bdry)
    report["selected_convention"] = (
        "boundary-sphere-measure" if spread_bdry < spread_unit else
        "unit-sphere-measure"
    )
    report["constant_density"] = 2.0 ** (n - 1)
    return report


def harmonic_measure_identity(G: GroupPresentation, L: LimitSetCloud,
                              n_samples: int, seed: int = 0) -> dict:
    """u(0) for the domain indicator against the direct area fraction.

    Two Monte-Carlo estimates of the same quantity (the visual measure of the
    domain of discontinuity from the ball center); they must agree within
    combined uncertainty plus the indeterminate fraction.
    """
    chi = cloud_complement(L)
    origin = BallPoint(np.zeros(L.points.shape[1]))
    u0 = harmonic_extension(chi, origin, n_samples, seed=seed)
    rng = np.random.default_rng(seed + 1)
    U = uniform_sphere(rng, L.n, n_samples)
    inside = chi.membership(U).astype(float)
    indet = float(chi.indeterminate(U).mean()) if chi.indeterminate else 0.0
    area = MCEstimate(
        value=float(inside.mean()),
        stderr=float(inside.std(ddof=1) / np.sqrt(n_samples)),
        samples=n_samples,
        indeterminate_fraction=indet,
    )
    worst_indet = max(u0.indeterminate_fraction, area.indeterminate_fraction)
    if worst_indet > 0.10:
        raise CloudTooCoarse(
            f"indeterminate fraction {worst_indet:.3f} exceeds 10%"
        )
    gap = abs(u0.value - area.value)
    budget = 3.0 * (u0.stderr + area.stderr) + worst_indet
    return {
        "u_origin": u0,
        "area_fraction": area,
        "gap": gap,
        "budget": budget,
        "agree": bool(gap <= budget),
    }
