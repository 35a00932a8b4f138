"""Invariant dome-envelope graph over the domain of discontinuity.

Base caps are centered at mesh points of a fundamental region with chordal
radius eps0 * dist(center, limit set); the family is the orbit of those caps
under the truncated group. The dome over a cap of angular radius theta is the
sphere of Euclidean center c/cos(theta) and radius tan(theta), the unique
sphere meeting S^n orthogonally along the cap boundary; the graph height f(x)
is the smallest dome-entry radius along the ray through x.

Families over schottky groups are evaluated through the group factorization:
x lies in the image cap gamma(C) exactly when gamma^-1 x lies in the seed cap
C, and gamma(C) is contained in the inflated nested cap of the word gamma, so
candidate words come from a per-level spatial index of nested caps and only
the touched image caps are ever materialized (each one shape-checked as it is
built). Small families are materialized outright.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from . import mobius
from .caps import CapDegenerate, SphericalCap, cap_image, cap_images_batch
from .geom import (
    SpherePoint,
    angle_from_chord,
    chord_from_angle,
    sphere_area,
    uniform_sphere,
)
from .group import GroupPresentation, TAG_SCHOTTKY, Word, _alphabet, enumerate_elements
from .limitset import LimitSetCloud, dist_rows
from .mobius import MobiusMap, compose, inverse, poincare_extend, sphere_action_rows

SHAPE_RATIO_MAX = 0.5
SUPPORT_INFLATION = 1.5
MATERIALIZE_BUDGET = 400_000


class ShrinkEpsilon(RuntimeError):
    """A propagated cap broke the family shape bound; retry with smaller eps0."""


class NotCovered(RuntimeError):
    """Direction is outside the covered part of the domain of discontinuity."""


class UncertifiedSample(ValueError):
    """Base-cap center without a certified positive distance to the limit set."""


# ---------------------------------------------------------------------------
# fundamental regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FundamentalRegion:
    """Membership predicate on unit rows of S^n plus a short description."""

    kind: str
    contains: Callable[[np.ndarray], np.ndarray]

    def restrict(self, extra: Callable[[np.ndarray], np.ndarray],
                 kind: str | None = None) -> "FundamentalRegion":
        base = self.contains
        return FundamentalRegion(
            kind=kind or f"{self.kind}+cut",
            contains=lambda U: base(U) & extra(U),
        )


def schottky_region(G: GroupPresentation) -> FundamentalRegion:
    """Complement of the defining caps."""
    caps = G.ball_caps

    def contains(U: np.ndarray) -> np.ndarray:
        U = np.atleast_2d(U)
        out = np.ones(U.shape[0], dtype=bool)
        for cap in caps:
            out &= ~cap.contains(U)
        return out

    return FundamentalRegion(kind="schottky-cap-complement", contains=contains)


def annulus_region(scale: float) -> FundamentalRegion:
    """Fundamental annulus 1 <= |x| < scale of the dilation x -> scale x."""
    if scale <= 1.0:
        raise ValueError("annulus needs scale > 1")

    def contains(U: np.ndarray) -> np.ndarray:
        from .geom import unembed_rows

        coords, at_inf = unembed_rows(np.atleast_2d(U))
        r = np.linalg.norm(coords, axis=1)
        return (~at_inf) & (r >= 1.0) & (r < scale)

    return FundamentalRegion(kind="cyclic-annulus", contains=contains)


def strip_region(shift: np.ndarray, q_floor: float = 0.25) -> FundamentalRegion:
    """Fundamental strip 0 <= <x, shift>/|shift|^2 < 1 of x -> x + shift.

    Truncated at chordal distance q_floor from the fixed point at infinity,
    so the region is a bounded patch.
    """
    shift = np.asarray(shift, dtype=float)
    s2 = float(shift @ shift)

    def contains(U: np.ndarray) -> np.ndarray:
        from .geom import chordal_to_infinity, unembed_rows

        U = np.atleast_2d(U)
        coords, at_inf = unembed_rows(U)
        t = (coords @ shift) / s2
        q = chordal_to_infinity(coords)
        return (~at_inf) & (t >= 0.0) & (t < 1.0) & (q >= q_floor)

    return FundamentalRegion(kind="cyclic-strip", contains=contains)


# ---------------------------------------------------------------------------
# base caps and region meshes
# ---------------------------------------------------------------------------

def base_caps(sample_points, eps0: float, L: LimitSetCloud) -> list[SphericalCap]:
    """Caps B(x, eps0 * dist(x, L)) with the certified lower distance.

    The chordal radius converts to the angular radius 2 asin(r/2).
    """
    if not 0.0 < eps0 <= 0.5:
        raise ValueError("eps0 must lie in (0, 1/2]")
    rows = _as_unit_rows(sample_points)
    lower, upper = dist_rows(rows, L)
    if not L.certified:
        raise UncertifiedSample("cloud carries no resolution certificate")
    out = []
    for row, lo, up in zip(rows, lower, upper):
        if lo <= 0.0 or up <= L.resolution:
            raise UncertifiedSample(
                "sample sits inside the resolution band of the cloud"
            )
        out.append(SphericalCap(center=row, theta=float(angle_from_chord(eps0 * lo))))
    return out


def _as_unit_rows(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return np.atleast_2d(points)
    rows = []
    for p in points:
        rows.append(p.vec if isinstance(p, SpherePoint) else np.asarray(p, float))
    return np.array(rows)


class _OctaveBucket:
    __slots__ = ("arr", "rad", "count", "tree", "tree_size", "rmax")

    def __init__(self, dim: int):
        self.arr = np.empty((256, dim))
        self.rad = np.empty(256)
        self.count = 0
        self.tree = None
        self.tree_size = 0
        self.rmax = 0.0

    def add(self, x: np.ndarray, r: float, rebuild_every: int):
        if self.count == self.arr.shape[0]:
            self.arr = np.resize(self.arr, (2 * self.count, self.arr.shape[1]))
            self.rad = np.resize(self.rad, 2 * self.count)
        self.arr[self.count] = x
        self.rad[self.count] = r
        self.count += 1
        self.rmax = max(self.rmax, r)
        if self.count - self.tree_size >= rebuild_every:
            self.tree = cKDTree(self.arr[: self.count])
            self.tree_size = self.count

    def blocks(self, x: np.ndarray, r: float) -> bool:
        if self.tree is not None:
            idx = self.tree.query_ball_point(x, max(r, self.rmax))
            if idx:
                idx = np.asarray(idx)
                d = np.linalg.norm(self.arr[idx] - x, axis=1)
                if np.any(d < np.maximum(r, self.rad[idx])):
                    return True
        if self.count > self.tree_size:
            tail = self.arr[self.tree_size:self.count]
            d = np.linalg.norm(tail - x, axis=1)
            if np.any(d < np.maximum(r, self.rad[self.tree_size:self.count])):
                return True
        return False


class _OctaveIndex:
    """Incremental nearest-blocker index for Poisson disks of mixed radii.

    Accepted points are bucketed by radius octave; a candidate only needs one
    small ball query per octave (radius max(candidate, bucket max)), which
    keeps the greedy pass near-linear even when radii span decades.
    """

    def __init__(self, dim: int, rebuild_every: int = 256):
        self.dim = dim
        self.buckets: dict[int, _OctaveBucket] = {}
        self.rebuild_every = rebuild_every

    def blocked(self, x: np.ndarray, r: float) -> bool:
        return any(b.blocks(x, r) for b in self.buckets.values())

    def add(self, x: np.ndarray, r: float):
        key = int(np.floor(np.log2(r)))
        bucket = self.buckets.get(key)
        if bucket is None:
            bucket = self.buckets[key] = _OctaveBucket(self.dim)
        bucket.add(x, r, self.rebuild_every)


def region_mesh(region: FundamentalRegion, L: LimitSetCloud, eps0: float,
                rng: np.random.Generator, spacing: float = 0.7,
                max_points: int = 30_000, stop_after_rejects: int = 6000,
                batch: int = 8192) -> np.ndarray:
    """Variable-radius Poisson-disk sample of the region.

    Local disk radius is spacing * eps0 * dist(x, L) in the chordal metric, so
    coverage density tracks the base-cap scale and the graph band stays tight.
    Deterministic for a fixed generator state.
    """
    n = L.points.shape[1] - 1
    accepted: list[np.ndarray] = []
    radii: list[float] = []
    index = _OctaveIndex(n + 1)
    rejects = 0
    while len(accepted) < max_points and rejects < stop_after_rejects:
        cand = uniform_sphere(rng, n, batch)
        keep = region.contains(cand)
        cand = cand[keep]
        if cand.shape[0] == 0:
            rejects += batch
            continue
        lower, _ = dist_rows(cand, L)
        for row, lo in zip(cand, lower):
            if lo <= 0:
                rejects += 1
                continue
            r = spacing * eps0 * lo
            if index.blocked(row, r):
                rejects += 1
            else:
                index.add(row, r)
                accepted.append(row)
                radii.append(r)
                rejects = 0
            if len(accepted) >= max_points or rejects >= stop_after_rejects:
                break
    return np.array(accepted)


# ---------------------------------------------------------------------------
# domes
# ---------------------------------------------------------------------------

def dome_entry_radius(cap: SphericalCap, x) -> float | None:
    """Radius where the ray through x first meets the dome over cap, else None.

    The dome is the sphere of center c/cos(theta) and radius tan(theta); the
    entry radius solves t^2 - 2 t d + 1 = 0 with d = (x . c)/cos(theta), so
    t = d - sqrt(d^2 - 1) whenever d >= 1 (the ray through the closed cap).
    """
    u = x.vec if isinstance(x, SpherePoint) else np.asarray(x, float)
    d = float(u @ cap.center) / np.cos(cap.theta)
    if d < 1.0:
        return None
    return float(d - np.sqrt(d * d - 1.0))


def entry_radius_rows(center: np.ndarray, theta: float, U: np.ndarray
                      ) -> tuple[np.ndarray, np.ndarray]:
    """(t, hit) arrays of dome-entry radii for unit rows."""
    d = (U @ center) / np.cos(theta)
    hit = d >= 1.0
    t = np.ones_like(d)
    dh = d[hit]
    t[hit] = dh - np.sqrt(dh * dh - 1.0)
    return t, hit


# ---------------------------------------------------------------------------
# dome families
# ---------------------------------------------------------------------------

@dataclass
class HeightResult:
    f: np.ndarray
    covered: np.ndarray
    theta: np.ndarray  # angular radius of the governing cap


@dataclass
class _WordLevel:
    words: list[Word]
    inv_maps: list[MobiusMap]
    centers: np.ndarray
    support_cos: np.ndarray  # cos of inflated support angles
    query_chord: float


class DomeFamily:
    """Truncated invariant ball family with a height evaluator.

    mode "materialized" stores every image cap; mode "factored" (schottky)
    stores seed caps plus per-word nested support caps and materializes image
    caps lazily with a cache. Both modes measure the family shape bound
    (diameter over distance-to-limit-set within (0, 1/2]) on every cap they
    materialize; the factored mode additionally audits a random sample of the
    full product at build time. Under shape_policy "record" (default) upper
    bound violations are counted and flagged, matching pipelines that pin
    eps0 above the strict Prop-1.1 regime of the group; "strict" aborts on
    the first measurable violation. Caps reaching a hemisphere always abort.
    """

    def __init__(self, G: GroupPresentation, cloud: LimitSetCloud,
                 seed_caps: list[SphericalCap], max_len: int, eps0: float,
                 mode: str = "auto", audit: int = 1500, rng=None,
                 shape_policy: str = "record"):
        if shape_policy not in ("record", "strict"):
            raise ValueError("shape_policy must be 'record' or 'strict'")
        self.G = G
        self.cloud = cloud
        self.seed_caps = list(seed_caps)
        self.max_len = max_len
        self.eps0 = eps0
        self.shape_policy = shape_policy
        self.shape_ratios: list[float] = []
        self.shape_unresolved = 0
        self.shape_violations = 0
        self._img_cache: dict[tuple[int, int], SphericalCap | None] = {}
        self._seed_centers = np.array([c.center for c in self.seed_caps])
        self._seed_thetas = np.array([c.theta for c in self.seed_caps])
        self._seed_cos = np.cos(self._seed_thetas)
        self._seed_tree = cKDTree(self._seed_centers)
        self._seed_chord_max = float(
            chord_from_angle(self._seed_thetas.max()) * 1.0000001
        )
        if mode == "auto":
            count = len(self.seed_caps) * _word_count_estimate(G, max_len)
            mode = (
                "factored"
                if G.tag == TAG_SCHOTTKY and count > MATERIALIZE_BUDGET
                else "materialized"
            )
            if mode == "materialized" and count > MATERIALIZE_BUDGET:
                raise ShrinkEpsilon(
                    f"family of ~{count} caps exceeds the materialization "
                    "budget and the group is not schottky-factorable"
                )
        self.mode = mode
        for cap in self.seed_caps:
            self._verify_shape(cap)
        if mode == "materialized":
            self._materialize()
        else:
            self._build_levels()
            self._audit_shape(audit, rng or np.random.default_rng(0))

    # -- construction ------------------------------------------------------

    def _seed_probe_stack(self) -> np.ndarray:
        if not hasattr(self, "_seed_boundary"):
            self._seed_boundary = np.stack(
                [c.boundary_points(count=8) for c in self.seed_caps]
            )
        return self._seed_boundary

    def _materialize(self):
        words = enumerate_elements(self.G, self.max_len)
        self.words = words
        boundary = self._seed_probe_stack()
        centers = [self._seed_centers]
        thetas = [self._seed_thetas]
        for w in words:
            if len(w) == 0:
                continue
            nu, th, valid, probes = cap_images_batch(
                w.map, boundary, self._seed_centers, self._seed_thetas
            )
            if not valid.all():
                raise ShrinkEpsilon(
                    "a propagated cap reached a hemisphere; choose a smaller eps0"
                )
            self._shape_check_batch(probes)
            centers.append(nu)
            thetas.append(th)
        self._all_centers = np.concatenate(centers)
        self._all_thetas = np.concatenate(thetas)
        self._all_cos = np.cos(self._all_thetas)
        self._all_tree = cKDTree(self._all_centers)
        self._all_chord_max = float(
            chord_from_angle(self._all_thetas.max()) * 1.0000001
        )

    def _shape_check_batch(self, probes: np.ndarray):
        """Shape bound on stacks of exactly mapped cap probes, (S, k, m)."""
        S, k, m = probes.shape
        d2 = (
            np.einsum("ijk,ijk->ij", probes, probes)[:, :, None]
            + np.einsum("ijk,ijk->ij", probes, probes)[:, None, :]
            - 2.0 * np.einsum("ijk,ilk->ijl", probes, probes)
        )
        diam = np.sqrt(np.maximum(d2.max(axis=(1, 2)), 0.0))
        near, _ = self.cloud.tree.query(probes.reshape(S * k, m))
        near_min = near.reshape(S, k).min(axis=1)
        res = self.cloud.resolution or 0.0
        unresolved = (diam <= 8.0 * res) | (near_min <= 3.0 * res)
        self.shape_unresolved += int(unresolved.sum())
        meas = ~unresolved
        if np.any(meas):
            ratio = diam[meas] / (near_min[meas] - res)
            bad = ratio > SHAPE_RATIO_MAX
            if np.any(bad):
                if self.shape_policy == "strict":
                    raise ShrinkEpsilon(
                        f"image cap shape ratio {ratio.max():.3f} exceeds 1/2; "
                        "choose a smaller eps0"
                    )
                self.shape_violations += int(bad.sum())
            self.shape_ratios.extend(ratio.tolist())

    def _build_levels(self):
        alphabet = _alphabet(self.G.rank)
        self.words = enumerate_elements(self.G, self.max_len)
        levels: list[_WordLevel] = []
        frontier: list[tuple[tuple[int, ...], MobiusMap]] = [((), mobius.identity(self.G.n))]
        for _ in range(self.max_len):
            rows = []
            for letters, prefix in frontier:
                last = letters[-1] if letters else 0
                for s in alphabet:
                    if s == -last:
                        continue
                    w_letters = letters + (s,)
                    m = compose(prefix, self.G.letter(s))
                    support = cap_image(prefix, self.G.letter_target_cap(s))
                    rows.append((w_letters, m, support))
            words = [Word(r[0], r[1]) for r in rows]
            inv_maps = [inverse(r[1]) for r in rows]
            centers = np.array([r[2].center for r in rows])
            support_angles = np.minimum(
                np.array([r[2].theta for r in rows]) * SUPPORT_INFLATION + 1e-12,
                np.pi / 2 - 1e-9,
            )
            levels.append(
                _WordLevel(
                    words=words,
                    inv_maps=inv_maps,
                    centers=centers,
                    support_cos=np.cos(support_angles),
                    query_chord=float(chord_from_angle(support_angles.max()) * 1.0000001),
                )
            )
            frontier = [(r[0], r[1]) for r in rows]
        self._levels = levels
        self._level_trees = [cKDTree(lv.centers) for lv in levels]
        self._word_index = {
            lv_words.letters: (li, wi)
            for li, lv in enumerate(levels)
            for wi, lv_words in enumerate(lv.words)
        }

    def _audit_shape(self, count: int, rng: np.random.Generator):
        total_words = sum(len(lv.words) for lv in self._levels)
        if total_words == 0 or not self.seed_caps:
            return
        for _ in range(count):
            li = int(rng.integers(0, len(self._levels)))
            lv = self._levels[li]
            wi = int(rng.integers(0, len(lv.words)))
            si = int(rng.integers(0, len(self.seed_caps)))
            self._image_cap(li, wi, si)

    # -- cap bookkeeping ----------------------------------------------------

    def _verify_shape(self, cap: SphericalCap) -> SphericalCap:
        diam = cap.chordal_diameter
        # angle to the nearest sample through the chord, stable at small gaps
        chord = float(np.linalg.norm(cap.center - _nearest_unit(self.cloud, cap.center)))
        ang = float(angle_from_chord(chord))
        gap = max(ang - cap.theta, 0.0)
        dist_lo = max(float(chord_from_angle(gap)) - (self.cloud.resolution or 0.0), 0.0)
        if dist_lo <= 0.0:
            raise ShrinkEpsilon("cap touches the limit-set resolution band")
        ratio = diam / dist_lo
        if ratio > SHAPE_RATIO_MAX:
            if self.shape_policy == "strict":
                raise ShrinkEpsilon(
                    f"cap shape ratio {ratio:.3f} exceeds 1/2; choose a smaller eps0"
                )
            self.shape_violations += 1
        self.shape_ratios.append(ratio)
        return cap

    def _image_cap_checked(self, m: MobiusMap, seed: SphericalCap) -> SphericalCap:
        try:
            img = cap_image(m, seed)
        except CapDegenerate as exc:
            raise ShrinkEpsilon(str(exc)) from exc
        self._verify_shape_mapped(m, seed)
        return img

    def _verify_shape_mapped(self, m: MobiusMap, seed: SphericalCap):
        """Shape bound for an image cap, measured on exactly mapped probes.

        The fitted cap parameters lose the center direction once the image
        is many orders smaller than the probes' absolute roundoff, so the
        diameter and cloud distance are taken from the mapped boundary
        points themselves. Caps whose scale falls below the cloud's
        certified resolution cannot be measured against it and are counted
        as unresolved rather than failed.
        """
        probes = seed.boundary_points(count=8)
        pts = sphere_action_rows(m, np.vstack([probes, seed.center[None, :]]))
        self._shape_check_batch(pts[None, :, :])

    def _image_cap(self, li: int, wi: int, si: int) -> SphericalCap:
        key = (li * 10_000_000 + wi, si)
        cached = self._img_cache.get(key)
        if cached is None:
            cached = self._image_cap_checked(
                self._levels[li].words[wi].map, self.seed_caps[si]
            )
            self._img_cache[key] = cached
        return cached

    @property
    def cap_count_bound(self) -> int:
        return len(self.seed_caps) * len(self.words)

    @property
    def shape_bound_ok(self) -> bool:
        """Whether every measured cap satisfied the 1/2 shape bound."""
        return self.shape_violations == 0

    def min_shape_ratio(self) -> float:
        return min(self.shape_ratios)

    def max_shape_ratio(self) -> float:
        return max(self.shape_ratios)

    # -- evaluation ---------------------------------------------------------

    def heights(self, U: np.ndarray) -> HeightResult:
        U = np.atleast_2d(np.asarray(U, dtype=float))
        N = U.shape[0]
        f = np.full(N, np.inf)
        theta = np.zeros(N)
        if self.mode == "materialized":
            self._min_over_index(
                U, self._all_tree, self._all_centers, self._all_cos,
                self._all_thetas, self._all_chord_max, f, theta,
                np.arange(N),
            )
        else:
            self._min_over_index(
                U, self._seed_tree, self._seed_centers, self._seed_cos,
                self._seed_thetas, self._seed_chord_max, f, theta,
                np.arange(N),
            )
            self._factored_pass(U, f, theta)
        covered = np.isfinite(f)
        f[~covered] = np.nan
        return HeightResult(f=f, covered=covered, theta=theta)

    @staticmethod
    def _min_over_index(U, tree, centers, cosines, thetas, chord_max, f, theta,
                        global_idx):
        from itertools import chain

        lists = tree.query_ball_point(U, chord_max)
        counts = np.fromiter(map(len, lists), dtype=np.int64, count=len(lists))
        if counts.sum() == 0:
            return
        pi = np.repeat(np.arange(U.shape[0]), counts)
        pj = np.fromiter(chain.from_iterable(lists), dtype=np.int64,
                         count=int(counts.sum()))
        d = np.einsum("ij,ij->i", U[pi], centers[pj]) / cosines[pj]
        hit = d >= 1.0
        pi, pj, d = pi[hit], pj[hit], d[hit]
        t = d - np.sqrt(d * d - 1.0)
        order = np.argsort(t, kind="stable")
        pi_o, pj_o, t_o = pi[order], pj[order], t[order]
        first = np.unique(pi_o, return_index=True)[1]
        gi = global_idx[pi_o[first]]
        better = t_o[first] < f[gi]
        f[gi[better]] = t_o[first][better]
        theta[gi[better]] = thetas[pj_o[first][better]]

    def _factored_pass(self, U, f, theta):
        for li, (lv, tree) in enumerate(zip(self._levels, self._level_trees)):
            # candidate (sample, word) pairs: sample inside the inflated
            # nested support cap of the word
            pairs = tree.query_ball_point(U, lv.query_chord)
            word_to_samples: dict[int, list[int]] = {}
            for i, lst in enumerate(pairs):
                for wi in lst:
                    if U[i] @ lv.centers[wi] >= lv.support_cos[wi]:
                        word_to_samples.setdefault(wi, []).append(i)
            for wi, sample_idx in word_to_samples.items():
                idx = np.array(sample_idx)
                Y = sphere_action_rows(lv.inv_maps[wi], U[idx])
                seed_lists = self._seed_tree.query_ball_point(
                    Y, self._seed_chord_max
                )
                for k, seeds in enumerate(seed_lists):
                    if not seeds:
                        continue
                    y = Y[k]
                    gi = idx[k]
                    for si in seeds:
                        if y @ self._seed_centers[si] < self._seed_cos[si]:
                            continue
                        img = self._image_cap(li, wi, si)
                        t = dome_entry_radius(img, U[gi])
                        if t is not None and t < f[gi]:
                            f[gi] = t
                            theta[gi] = img.theta


def _word_count_estimate(G: GroupPresentation, max_len: int) -> int:
    k = 2 * G.rank
    if k <= 1:
        return 2 * max_len + 1
    total = 1
    level = 1
    for _ in range(max_len):
        level = level * (k - 1) if level > 1 else k
        total += level
    return total


def _nearest_unit(cloud: LimitSetCloud, u: np.ndarray) -> np.ndarray:
    _, idx = cloud.tree.query(u[None, :])
    return cloud.points[int(idx[0])]


def propagate(seed_caps: list[SphericalCap], G: GroupPresentation, max_len: int,
              cloud: LimitSetCloud, mode: str = "auto") -> DomeFamily:
    """Orbit of the seed caps under all elements up to max_len, shape-checked."""
    return DomeFamily(G, cloud, seed_caps, max_len, eps0=np.nan, mode=mode)


def build_family(G: GroupPresentation, cloud: LimitSetCloud, region: FundamentalRegion,
                 eps0: float, max_len: int, rng: np.random.Generator,
                 spacing: float = 0.7, max_seeds: int = 30_000,
                 mode: str = "auto") -> DomeFamily:
    """Mesh the region adaptively, build base caps, and propagate them."""
    mesh = region_mesh(region, cloud, eps0, rng, spacing=spacing,
                       max_points=max_seeds)
    caps = base_caps(mesh, eps0, cloud)
    fam = DomeFamily(G, cloud, caps, max_len, eps0=eps0, mode=mode)
    return fam


def height(F: DomeFamily, x) -> float:
    """f(x) for a single direction; raises NotCovered off the covered region."""
    u = x.vec if isinstance(x, SpherePoint) else np.asarray(x, float)
    res = F.heights(u[None, :])
    if not res.covered[0]:
        raise NotCovered("no dome met along this direction")
    return float(res.f[0])


class GraphFunction:
    """Memoized view of a family's height function (transparent cache)."""

    def __init__(self, family: DomeFamily):
        self.family = family
        self._memo: dict[bytes, tuple[float, bool, float]] = {}

    def heights(self, U: np.ndarray) -> HeightResult:
        U = np.atleast_2d(np.asarray(U, dtype=float))
        keys = [np.round(row, 14).tobytes() for row in U]
        missing = [i for i, k in enumerate(keys) if k not in self._memo]
        if missing:
            res = self.family.heights(U[missing])
            for j, i in enumerate(missing):
                self._memo[keys[i]] = (
                    float(res.f[j]), bool(res.covered[j]), float(res.theta[j])
                )
        f = np.array([self._memo[k][0] for k in keys])
        covered = np.array([self._memo[k][1] for k in keys])
        theta = np.array([self._memo[k][2] for k in keys])
        return HeightResult(f=f, covered=covered, theta=theta)

    def value(self, x) -> float:
        u = x.vec if isinstance(x, SpherePoint) else np.asarray(x, float)
        res = self.heights(u[None, :])
        if not res.covered[0]:
            raise NotCovered("no dome met along this direction")
        return float(res.f[0])


# ---------------------------------------------------------------------------
# diagnostics on the graph
# ---------------------------------------------------------------------------

def check_invariance(F: DomeFamily, gamma: MobiusMap, samples: np.ndarray
                     ) -> tuple[float, int]:
    """Max radial deviation of mapped graph points from the graph.

    Pushes the graph point over each covered sample through the extension of
    gamma and measures how far (radially) the image sits from the graph at
    the image direction. Exact invariance of a group-closed family makes this
    zero up to roundoff on the matched-truncation region.
    """
    U = np.atleast_2d(samples)
    res = F.heights(U)
    mask = res.covered
    if not mask.any():
        return 0.0, 0
    P = res.f[mask, None] * U[mask]
    ext = poincare_extend(gamma)
    Y = ext.apply_ball_rows(P)
    norms = np.linalg.norm(Y, axis=1)
    dirs = Y / norms[:, None]
    res2 = F.heights(dirs)
    ok = res2.covered
    dev = np.abs(norms[ok] - res2.f[ok])
    return (float(dev.max()) if dev.size else 0.0), int(ok.sum())


def lipschitz_estimate(F: DomeFamily, samples: np.ndarray,
                       max_pairs: int = 200_000) -> float:
    """Empirical Lipschitz constant sup |f(x)-f(y)| / q(x, y) over sample pairs."""
    U = np.atleast_2d(samples)
    res = F.heights(U)
    U = U[res.covered]
    fv = res.f[res.covered]
    m = U.shape[0]
    if m < 2:
        raise ValueError("need at least two covered samples")
    cap = int(np.sqrt(2 * max_pairs)) + 1
    if m > cap:
        U, fv = U[:cap], fv[:cap]
        m = cap
    diff = np.abs(fv[:, None] - fv[None, :])
    q = np.linalg.norm(U[:, None, :] - U[None, :, :], axis=-1)
    iu = np.triu_indices(m, k=1)
    q_iu = q[iu]
    good = q_iu > 1e-12
    return float(np.max(diff[iu][good] / q_iu[good]))


@dataclass
class SeparationReport:
    passed: bool
    checked: int
    witnesses: list


def separation_check(F: DomeFamily, L: LimitSetCloud, trials: int,
                     rng: np.random.Generator, tol: float | None = None,
                     points_per_geodesic: int = 12) -> SeparationReport:
    """Sampled hull-side check: geodesics between limit points stay under the graph.

    Every sampled point p on a geodesic joining two cloud points must satisfy
    |p| <= f(p/|p|) + tol wherever the direction is covered.
    """
    if L.size < 2:
        return SeparationReport(passed=True, checked=0, witnesses=[])
    if tol is None:
        tol = (L.resolution or 0.0) + 1e-9
    witnesses = []
    checked = 0
    for _ in range(trials):
        i, j = rng.integers(0, L.size, 2)
        if i == j:
            continue
        pts = _geodesic_points(L.points[i], L.points[j], points_per_geodesic)
        if pts.size == 0:
            continue
        norms = np.linalg.norm(pts, axis=1)
        keep = norms > 1e-9
        pts, norms = pts[keep], norms[keep]
        dirs = pts / norms[:, None]
        res = F.heights(dirs)
        mask = res.covered
        checked += int(mask.sum())
        bad = mask & (norms > res.f + tol)
        for b in np.nonzero(bad)[0]:
            witnesses.append(
                {"point": pts[b].tolist(), "radius": float(norms[b]),
                 "graph": float(res.f[b])}
            )
    return SeparationReport(passed=not witnesses, checked=checked,
                            witnesses=witnesses)


def _geodesic_points(a: np.ndarray, b: np.ndarray, count: int) -> np.ndarray:
    ab = float(a @ b)
    if ab <= -1.0 + 1e-12:
        ts = np.linspace(-0.92, 0.92, count)
        return ts[:, None] * a
    c = (a + b) / (1.0 + ab)
    R2 = float(c @ c) - 1.0
    if R2 <= 0:
        return np.empty((0, a.size))
    R = np.sqrt(R2)
    e1 = (a - c) / np.linalg.norm(a - c)
    v = (b - c) - ((b - c) @ e1) * e1
    nv = np.linalg.norm(v)
    if nv < 1e-14:
        return np.empty((0, a.size))
    e2 = v / nv
    phi_b = float(np.arctan2((b - c) @ e2, (b - c) @ e1)) % (2 * np.pi)
    phis = np.linspace(0.0, phi_b, count + 2)[1:-1]
    return c + R * (np.cos(phis)[:, None] * e1 + np.sin(phis)[:, None] * e2)


@dataclass
class VolumeEstimate:
    value: float
    stderr: float
    samples: int
    covered_fraction: float


def graph_volume(F: DomeFamily, region: FundamentalRegion, n_samples: int,
                 seed: int = 0, grad_step: float = 1e-4) -> VolumeEstimate:
    """Monte-Carlo hyperbolic n-volume of the graph over the region.

    The graph map u -> f(u) u has Euclidean area element
    f^{n-1} sqrt(f^2 + |grad f|^2) dA(u); the hyperbolic element scales it by
    (2/(1-f^2))^n at radius f. The gradient uses central differences with an
    angular step proportional to the governing cap radius.
    """
    rng = np.random.default_rng(seed)
    n = F.G.n
    U = uniform_sphere(rng, n, n_samples)
    in_region = region.contains(U)
    vals = np.zeros(n_samples)
    idx = np.nonzero(in_region)[0]
    if idx.size:
        Ur = U[idx]
        res = F.heights(Ur)
        cov = res.covered
        if cov.any():
            Uc = Ur[cov]
            fc = res.f[cov]
            step = grad_step * np.maximum(res.theta[cov], 1e-12)
            grad2 = _tangent_gradient_sq(F, Uc, fc, step)
            area = fc ** (n - 1) * np.sqrt(fc**2 + grad2)
            hyp = (2.0 / (1.0 - fc**2)) ** n
            vals[idx[cov]] = area * hyp
        covered_fraction = float(cov.mean())
    else:
        covered_fraction = 0.0
    A = sphere_area(n)
    value = A * float(vals.mean())
    stderr = A * float(vals.std(ddof=1) / np.sqrt(n_samples))
    return VolumeEstimate(value=value, stderr=stderr, samples=n_samples,
                          covered_fraction=covered_fraction)


def _tangent_gradient_sq(F: DomeFamily, U: np.ndarray, f: np.ndarray,
                         step: np.ndarray) -> np.ndarray:
    """|grad f|^2 by central differences in an orthonormal tangent frame."""
    m = U.shape[1]
    # frames: QR of [u | I] per row gives u plus an orthonormal complement
    eye = np.broadcast_to(np.eye(m), (U.shape[0], m, m))
    stacked = np.concatenate([U[:, :, None], eye], axis=2)
    Q, _ = np.linalg.qr(stacked)
    frames = Q[:, :, 1:m]  # (N, m, m-1)
    grad2 = np.zeros(U.shape[0])
    for k in range(m - 1):
        e = frames[:, :, k]
        plus = U + step[:, None] * e
        minus = U - step[:, None] * e
        plus /= np.linalg.norm(plus, axis=1, keepdims=True)
        minus /= np.linalg.norm(minus, axis=1, keepdims=True)
        rp = F.heights(plus)
        rm = F.heights(minus)
        ang = np.arccos(np.clip(np.einsum("ij,ij->i", plus, minus), -1, 1))
        ok = rp.covered & rm.covered & (ang > 0)
        d = np.zeros(U.shape[0])
        d[ok] = (rp.f[ok] - rm.f[ok]) / ang[ok]
        grad2 += d * d
    return grad2


def bilipschitz_ratios(F: DomeFamily, samples: np.ndarray,
                       factor=None, max_pairs: int = 800) -> np.ndarray:
    """Two-sided distortion of u -> f(u) u against a conformal metric, sampled.

    Pairs each covered sample with its nearest covered neighbour and compares
    the hyperbolic distance of the two graph points with the conformal length
    e^u q(x, y). factor maps sample rows to e^u; by default the band
    surrogate 1/dist(x, cloud) stands in for the invariant factor (the two
    agree up to the band constants). An empirical band, not a certificate.
    """
    from .geom import hyperbolic_distance_rows

    U = np.atleast_2d(samples)
    res = F.heights(U)
    U = U[res.covered]
    fv = res.f[res.covered]
    if U.shape[0] < 2:
        raise ValueError("need at least two covered samples")
    if U.shape[0] > 2 * max_pairs:
        U, fv = U[: 2 * max_pairs], fv[: 2 * max_pairs]
    tree = cKDTree(U)
    d, j = tree.query(U, k=2)
    q = d[:, 1]
    j = j[:, 1]
    keep = q > 1e-12
    if factor is None:
        _, upper = dist_rows(U, F.cloud)
        eu = 1.0 / upper
    else:
        eu = np.asarray(factor(U), dtype=float)
    P = fv[:, None] * U
    rho = hyperbolic_distance_rows(P[keep], P[j[keep]])
    conf = eu[keep] * q[keep]
    return rho / conf


def graph_band(F: DomeFamily, samples: np.ndarray) -> np.ndarray:
    """(1 - f(x)) / dist(x, cloud) over covered samples (upper distances)."""
    U = np.atleast_2d(samples)
    res = F.heights(U)
    mask = res.covered
    _, upper = dist_rows(U[mask], F.cloud)
    good = upper > 0
    return (1.0 - res.f[mask][good]) / upper[good]


def export_graph_csv(F: DomeFamily, samples: np.ndarray, path) -> None:
    """CSV rows (direction vector, f) over covered samples."""
    import csv

    U = np.atleast_2d(samples)
    res = F.heights(U)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(U.shape[1])] + ["f"])
        for row, fv, cov in zip(U, res.f, res.covered):
            if not cov:
                continue
            writer.writerow([repr(float(v)) for v in row] + [repr(float(fv))])
