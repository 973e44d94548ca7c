"""Linear Boltzmann dynamics of a tagged particle in simple shear.

Modules:

- ``kernels``: angular collision kernels, their moments and scattering rates.
- ``particle_sim``: event-driven Monte Carlo of the tagged-particle process.
- ``moment_dynamics``: the closed linear system for second moments.
- ``spectral``: spectrum, shear threshold and growing mode of that system.
- ``harness``: scenarios, output files and acceptance checks.
"""

__version__ = "0.1.0"
