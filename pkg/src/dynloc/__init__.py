"""Quantum and classical dynamics of a laser-driven two-level ion in a Paul trap.

Modules
-------
params     configuration, dimensional scaling, validation
gridstate  spatial grid, spinor fields, distributions, moments
qevolve    split-operator propagator with adaptive stepping
mcwf       quantum-jump unraveling of spontaneous emission
classical  Hamilton + Bloch trajectory ensembles
floquet    Mathieu/Floquet analysis and sideband coupling amplitudes
harness    experiment presets, sweeps, CSV/JSON export
"""

__version__ = "0.1.0"
