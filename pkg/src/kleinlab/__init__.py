"""kleinlab: numerical exploration of Kleinian groups on S^n.

Mobius-group arithmetic in normal form, limit-set sampling and dimension
estimation, the invariant dome-envelope Lipschitz graph over the domain of
discontinuity, conformal cusp-end metrics, hyperbolic Green's functions and
harmonic measure, and an end-to-end geometric-finiteness diagnostic.
"""

__version__ = "0.1.0"
