"""Distributed MPC for multi-zone building climate control.

Zones are modelled as RC thermal networks, comfort is scored with a
piecewise-affine PMV surrogate, and the zones share a power budget that is
enforced through Jacobi-parallel ADMM.
"""

__version__ = "0.1.0"
