"""Open-quantum-system dynamics with initially correlated system-environment states.

Second-order time-convolutionless solvers for a qubit coupled to a finite or
structured environment: the standard product-state projection (TCL2), the
correlated-projection generalization, and the adapted-projection-operator
(APO2) expansion built on the Pauli-frame decomposition of the initial state,
together with exact oracles and two fully worked models (pure dephasing with
photon-like correlated states, damped qubit in a bosonic bath).
"""

__version__ = "0.1.0"

from . import qmat, frame, dephasing, damped, engine

__all__ = ["qmat", "frame", "dephasing", "damped", "engine", "__version__"]
