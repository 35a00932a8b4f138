"""Limit-set sampling, distance queries, box-counting dimension, spectral bottom.

The limit set is represented by a finite point cloud on S^n. For schottky
presentations the sampling is certified: every sample is the image of a
defining-cap center under a full-length reduced word and lies in the
corresponding nested cap, so every true limit point is within the largest
nested-cap diameter (the resolution) of some sample. Distance queries return
a (lower, upper) interval that downstream bounds propagate worst-case.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import mobius
from .caps import cap_image
from .geom import ExtPoint, SpherePoint, embed_ext
from .group import FitResult, GroupPresentation, TAG_CYCLIC, TAG_SCHOTTKY, _alphabet, _slope_fit
from .mobius import compose, sphere_action_rows


class UncertifiedDistance(RuntimeError):
    """Query point sits inside the resolution band of the cloud."""


class EmptyScaleWindow(RuntimeError):
    """No valid scales between the resolution and the cloud diameter."""


@dataclass(frozen=True)
class LimitSetCloud:
    """Finite sample of a limit set with a spatial index.

    resolution is the certified covering radius (None when the sampling
    carries no certificate); warnings records degeneracies such as elementary
    groups with fewer than three limit points.
    """

    n: int
    points: np.ndarray
    depth: int
    resolution: float | None
    warnings: tuple[str, ...] = ()
    tree: cKDTree = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if pts.shape[0] == 0:
            object.__setattr__(self, "tree", None)
        else:
            object.__setattr__(self, "tree", cKDTree(pts))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def certified(self) -> bool:
        return self.resolution is not None

    def diameter(self) -> float:
        if self.size < 2:
            return 0.0
        # exact for modest clouds; the hull extremes dominate anyway
        sub = self.points
        if self.size > 4000:
            sub = self.points[:: self.size // 4000 + 1]
        d2 = np.max(
            np.sum((sub[:, None, :] - sub[None, :, :]) ** 2, axis=-1)
        )
        return float(np.sqrt(d2))

    def nearest(self, U: np.ndarray) -> np.ndarray:
        """Chordal distance from unit rows to the nearest sample."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        d, _ = self.tree.query(U)
        return d


@dataclass(frozen=True)
class DistInterval:
    lower: float
    upper: float
    certified: bool


def dist_to_limit_set(x, L: LimitSetCloud) -> DistInterval:
    """Chordal distance interval from x to the true limit set.

    upper is the distance to the nearest sample; lower subtracts the
    certified resolution (0 with an uncertified flag otherwise).
    """
    if L.size == 0:
        raise ValueError("empty cloud")
    if isinstance(x, ExtPoint):
        v = embed_ext(x)
    elif isinstance(x, SpherePoint):
        v = x.vec
    else:
        v = np.asarray(x, dtype=float)
    upper = float(L.nearest(v[None, :])[0])
    if L.certified:
        return DistInterval(max(0.0, upper - L.resolution), upper, True)
    return DistInterval(0.0, upper, False)


def dist_rows(U: np.ndarray, L: LimitSetCloud) -> tuple[np.ndarray, np.ndarray]:
    """(lower, upper) distance arrays for unit rows."""
    upper = L.nearest(U)
    if L.certified:
        return np.maximum(0.0, upper - L.resolution), upper
    return np.zeros_like(upper), upper


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_limit_set(G: GroupPresentation, depth: int,
                     seeds: tuple[ExtPoint, ...] = ()) -> LimitSetCloud:
    """Point cloud approximating the limit set at the given word depth."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if G.tag == TAG_SCHOTTKY:
        return _sample_schottky(G, depth)
    if G.tag == TAG_CYCLIC:
        return _sample_cyclic(G, depth)
    if not seeds:
        raise ValueError("custom groups need at least one seed point")
    return _sample_custom(G, depth, seeds)


def _sample_schottky(G: GroupPresentation, depth: int) -> LimitSetCloud:
    alphabet = _alphabet(G.rank)
    frontier: list[tuple[int, mobius.MobiusMap]] = [(0, mobius.identity(G.n))]
    for _ in range(depth - 1):
        frontier = [
            (s, compose(m, G.letter(s)))
            for last, m in frontier
            for s in alphabet
            if s != -last
        ]
    pts = []
    max_diam = 0.0
    for last, prefix in frontier:
        for s in alphabet:
            if s == -last:
                continue
            target = G.letter_target_cap(s)
            nested = cap_image(prefix, target)
            pts.append(sphere_action_rows(prefix, target.center[None, :])[0])
            max_diam = max(max_diam, nested.chordal_diameter)
    return LimitSetCloud(
        n=G.n, points=np.array(pts), depth=depth, resolution=max_diam
    )


def _fixed_points_on_sphere(g: mobius.MobiusMap) -> list[np.ndarray]:
    kind = mobius.classify(g)
    if kind == "identity":
        return []
    north = np.zeros(g.n + 1)
    north[-1] = 1.0
    if g.eps == 0:
        if abs(g.r - 1.0) > 1e-12:
            x = np.linalg.solve(np.eye(g.n) - g.r * g.A, g.b)
            return [embed_ext(ExtPoint.finite(x)), north]
        if kind == "parabolic":
            return [north]
        return []  # elliptic isometries of R^n have no sphere limit points
    if kind == "elliptic":
        return []
    pts = []
    for h in (g, mobius.inverse(g)):
        u = np.eye(g.n + 1)[:1]
        for _ in range(2000):
            nxt = sphere_action_rows(h, u)
            if np.linalg.norm(nxt - u) < 1e-15:
                u = nxt
                break
            u = nxt
        pts.append(u[0])
    if kind == "parabolic" or np.linalg.norm(pts[0] - pts[1]) < 1e-9:
        return [pts[0]]
    return pts


def _sample_cyclic(G: GroupPresentation, depth: int) -> LimitSetCloud:
    pts = _fixed_points_on_sphere(G.generators[0])
    warnings = ()
    if len(pts) < 3:
        warnings = (f"elementary group with {len(pts)} limit points",)
    return LimitSetCloud(
        n=G.n,
        points=np.array(pts).reshape(len(pts), G.n + 1),
        depth=depth,
        resolution=0.0 if pts else None,
        warnings=warnings,
    )


def _sample_custom(G: GroupPresentation, depth: int,
                   seeds: tuple[ExtPoint, ...]) -> LimitSetCloud:
    alphabet = _alphabet(G.rank)
    frontier: list[tuple[int, mobius.MobiusMap]] = [(0, mobius.identity(G.n))]
    for _ in range(depth):
        frontier = [
            (s, compose(m, G.letter(s)))
            for last, m in frontier
            for s in alphabet
            if s != -last
        ]
    seed_rows = np.array([embed_ext(p) for p in seeds])
    pts = np.vstack([
        sphere_action_rows(m, seed_rows) for _, m in frontier
    ])
    pts = _dedup_rows(pts, 1e-12)
    return LimitSetCloud(n=G.n, points=pts, depth=depth, resolution=None)


def _dedup_rows(pts: np.ndarray, tol: float) -> np.ndarray:
    tree = cKDTree(pts)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    drop = set(pairs[:, 1].tolist()) if len(pairs) else set()
    keep = [i for i in range(pts.shape[0]) if i not in drop]
    return pts[keep]


# ---------------------------------------------------------------------------
# box-counting dimension
# ---------------------------------------------------------------------------

def greedy_net_count(L: LimitSetCloud, scale: float) -> int:
    """Size of the greedy chordal net at the given scale (deterministic)."""
    covered = np.zeros(L.size, dtype=bool)
    count = 0
    for i in range(L.size):
        if covered[i]:
            continue
        count += 1
        covered[L.tree.query_ball_point(L.points[i], scale)] = True
        covered[i] = True
    return count


def default_scale_grid(L: LimitSetCloud, levels: int = 24) -> np.ndarray:
    hi = L.diameter() / 4.0
    if hi <= 0:
        raise EmptyScaleWindow("cloud has no extent")
    if L.certified and L.resolution > 0:
        lo = 4.0 * L.resolution
    elif L.certified:
        lo = hi * 1e-3  # exact point cloud; counts saturate immediately
    else:
        gaps, _ = L.tree.query(L.points, k=2)
        lo = 4.0 * float(np.quantile(gaps[:, 1], 0.95))
    if lo >= hi:
        raise EmptyScaleWindow(f"no scales between {lo} and {hi}")
    return np.geomspace(hi, lo, levels)


def box_dimension(L: LimitSetCloud, scale_grid: np.ndarray | None = None
                  ) -> FitResult:
    """Box-counting estimate: slope of log(net count) against log(1/scale)."""
    if L.size < 2:
        raise ValueError("need at least two distinct points")
    if scale_grid is None:
        scales = default_scale_grid(L)
    else:
        scales = np.asarray(scale_grid, dtype=float)
        if scales.size == 0:
            raise EmptyScaleWindow("empty scale grid")
    counts = np.array([greedy_net_count(L, s) for s in scales], dtype=float)
    slope, se = _slope_fit(np.log(1.0 / scales), np.log(counts))
    return FitResult(
        estimate=slope,
        stderr=se,
        diagnostics={
            "scales": scales.tolist(),
            "counts": counts.tolist(),
            "certified": L.certified,
            "resolution": L.resolution,
        },
    )


# ---------------------------------------------------------------------------
# spectral bottom and distortion
# ---------------------------------------------------------------------------

def sullivan_lambda0(delta: float, n: int) -> float:
    """Bottom of the spectrum from the exponent: (n/2)^2 below n/2, else delta(n-delta)."""
    if not 0.0 <= delta <= n:
        raise ValueError(f"exponent {delta} outside [0, {n}]")
    if delta <= n / 2.0:
        return (n / 2.0) ** 2
    return delta * (n - delta)


def distortion_ratio(G: GroupPresentation, x: ExtPoint, g: mobius.MobiusMap,
                     L: LimitSetCloud) -> float:
    """|g'(x)|_s dist(x, L) / dist(g x, L), with sample-cloud distances."""
    band = L.resolution if L.certified else 0.0
    d_x = dist_to_limit_set(x, L)
    if d_x.upper <= band:
        raise UncertifiedDistance("x sits inside the cloud resolution band")
    gx = mobius.apply(g, x)
    d_gx = dist_to_limit_set(gx, L)
    if d_gx.upper <= 0.0:
        raise UncertifiedDistance("g x collides with the cloud")
    return float(mobius.deriv_sphere(g, x) * d_x.upper / d_gx.upper)


def cloud_invariance_defect(L: LimitSetCloud, g: mobius.MobiusMap) -> float:
    """Max distance from mapped samples back to the cloud (sampled Hausdorff)."""
    mapped = sphere_action_rows(g, L.points)
    return float(np.max(L.nearest(mapped)))


def export_csv(L: LimitSetCloud, path) -> None:
    """Unit-vector rows with a header, stable byte-for-byte for a fixed cloud."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(L.points.shape[1])])
        for row in L.points:
            writer.writerow([repr(float(v)) for v in row])
