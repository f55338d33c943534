"""Numerical toolkit for a free-boundary Hele-Shaw / Keller-Segel model of cell motility.

Modules
-------
specfun      modified and ordinary Bessel functions
geometry     parameters, boundary shapes, polar grids and the boundary-fitted map
elliptic     potential solvers on the disk and on mapped domains
stability    resting disks, their linear stability and the traveling-wave linearization
bifurcation  bifurcation radius and the second-order traveling-wave expansion
simulator    nonlinear time stepping of the free-boundary problem
cli          command-line entry point
"""

__version__ = "0.1.0"

from .geometry import BoundaryShape, ModelParams, PolarField, PolarGrid  # noqa: F401
