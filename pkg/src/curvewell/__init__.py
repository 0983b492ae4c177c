"""Numerical spectral analysis of 2D Schrodinger operators with potentials
concentrated near a closed curve: resonance detection, transmission-condition
limit operators, interface-fitted FEM eigenproblems, quasimodes, and
eps-convergence studies."""

from ._kernels import IMPLEMENTATION as kernel_implementation

__version__ = "0.1.0"

__all__ = ["kernel_implementation", "__version__"]
