"""Shared helpers for the test suite: random maps, points, reference groups."""

import numpy as np

from kleinlab.caps import SphericalCap
from kleinlab.group import make_schottky
from kleinlab.mobius import MobiusMap


REFERENCE_THETA = float(2.0 * np.arcsin(0.05))  # caps of chordal radius 0.1


def reference_schottky(theta=REFERENCE_THETA):
    """Rank-2 Schottky group: four equatorial caps paired across the sphere.

    Matches groups/reference_schottky.json so test margins measure the same
    configuration the CLI pipelines run on.
    """
    centers = np.array([
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
    ])
    c = [SphericalCap(center=v, theta=theta) for v in centers]
    return make_schottky([(c[0], c[1]), (c[2], c[3])])


def random_orthogonal(rng, n):
    M = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(M)
    return Q * np.sign(np.diag(R))


def random_mobius(rng, n, inverting=None):
    """A generic normal-form map; scales kept moderate to avoid overflow in chains."""
    eps = int(rng.integers(0, 2)) if inverting is None else int(inverting)
    a = rng.normal(0.0, 1.0, n) if eps else np.zeros(n)
    r = float(np.exp(rng.normal(0.0, 0.7)))
    A = random_orthogonal(rng, n)
    b = rng.normal(0.0, 1.0, n)
    return MobiusMap(n, eps, a, r, A, b)


def random_point_off_pole(rng, g, min_gap=0.1):
    """A finite point staying min_gap away from the pole of g (if any)."""
    while True:
        x = rng.normal(0.0, 1.5, g.n)
        if g.eps == 0 or np.linalg.norm(x - g.a) > min_gap:
            return x


def random_ball_point(rng, m, rmax=0.95):
    v = rng.standard_normal(m)
    v /= np.linalg.norm(v)
    return v * rmax * rng.uniform(0.0, 1.0) ** (1.0 / m)
