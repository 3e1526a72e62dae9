"""Geometric phases of driven and open two-level systems.

Submodules:
    qcore         dense linear algebra, branch tracking, ODE and Lindblad plumbing
    phasefun      gauge-invariant phase functionals and circular statistics
    spin          spin-1/2 in a rotating magnetic field
    jc            atom-mode doublets with loss and pumping
    bipartite     two qubits coupled through a common vacuum
    sliding       atom moving parallel to a dielectric surface
    trajectories  quantum-jump trajectories of the driven spin
    cli           batch runner for named experiments
"""
__version__ = "0.1.0"

from .errors import GeophaseError

__all__ = ["GeophaseError", "__version__"]
