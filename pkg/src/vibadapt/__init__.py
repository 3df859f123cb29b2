"""Adaptive unitary ansatz construction for vibrational structure problems.

The package builds n-mode vibrational Hamiltonians, computes VSCF modal
bases, and grows unitary product ansaetze on an exact statevector simulator,
with dense linear-algebra cross-checks for every fast path.
"""

__version__ = "0.1.0"
