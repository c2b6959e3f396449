"""Polyhedral and linear estimation for linear inverse problems.

Subpackages:

* `conic` -- self-contained conic-programming layer (LP/SOC/SDP interior point).
* `problem_model` -- signal-set descriptions and samplers.
* `observation` -- observation schemes, contrast tail norms, noise sampling.
* `compat_cones` -- compatibility cones and their calculus.
* `design_direct` -- column-wise contrast design via saddle-point programs.
* `design_sdp` -- semidefinite contrast design and risk certificates.
* `estimator` -- polyhedral and linear estimators.
* `experiments` -- reproducible experiment drivers behind the CLI.
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
