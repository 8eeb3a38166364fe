"""martinlab: potential theory of finitely supported symmetric random walks
on free products of Z^d and free-group factors.

Submodules
----------
groups     normal forms, balls, geodesics, coset projection
measures   finitely supported symmetric measures, convolution tables, sampling
potential  Green function brackets, spectral radius, Martin kernels
floyd      Floyd metrics, visibility bound, transition points
ancona     multiplicative Green inequalities: ratio/defect/avoidance scans
parabolic  first-return kernels, F(u) spectral analysis, degenerescence gates
cli        experiment harness (config in, CSV/SVG artifacts out)
"""

from ._accel import HAS_NUMBA, USE_NUMBA, backend_name

__all__ = ["HAS_NUMBA", "USE_NUMBA", "backend_name"]
__version__ = "0.1.0"
