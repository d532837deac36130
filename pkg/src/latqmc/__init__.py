"""Tailored rank-1 lattice rules and quasi-Monte Carlo estimation for an
elliptic PDE with a random diffusion coefficient.

Submodules
----------
points      lattice/digital point generation, shifts, distribution maps
theory      decay models, POD weights, a-priori error bounds
cbc         component-by-component construction (naive and fast)
pde         1-d finite element solver for the random-coefficient problem
estimators  single-level / multilevel QMC and Monte Carlo drivers
cli         command-line front end

Submodules are imported lazily so the command-line entry point can pin
thread-count environment variables before numpy loads its BLAS.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = ("points", "theory", "cbc", "pde", "estimators", "cli", "errors")

__all__ = list(_SUBMODULES) + ["__version__"]


def __getattr__(name):
    if name in _SUBMODULES:
        module = importlib.import_module(f".{name}", __name__)
        globals()[name] = module
        return module
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(__all__)
