"""Metastable mass transport in tilted washboard potentials.

Subpackages cover the pipeline from a periodic potential to the discrete
hopping dynamics it induces: potential geometry, Gibbs asymptotics,
transition weights, a finite-volume Fokker-Planck solver, observables,
the limiting lattice dynamics, the bistable (double-well) analogue, the
supercritical ballistic regime, and a Monte-Carlo particle backend.
"""

__version__ = "0.1.0"
