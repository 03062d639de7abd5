"""Multigrid shifted-inverse iteration for Maxwell cavity eigenvalues.

Lowest-order Nedelec edge elements on tetrahedral (and triangular) meshes;
a mixed saddle eigensolve on the coarse mesh followed by one shifted
linear solve per fine level.
"""
__version__ = "0.1.0"
