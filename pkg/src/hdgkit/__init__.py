"""hdgkit: hybridizable DG for 2D scalar conservation laws with condensed
Newton-GMRES solvers and block / polynomial preconditioners."""
from .hdglocal import HdgSpace, StateFields, make_space, interpolate_state
from .krylov import GmresConfig, gmres, gmres_solve
from .meshgrid import build_structured_quad
from .newtonstep import NewtonConfig, SolveReport, newton_solve, time_march
from .pdemodels import burgers_model, convdiff_model, poisson_model, sinsin_poisson

__version__ = "0.1.0"

__all__ = [
    "HdgSpace", "StateFields", "make_space", "interpolate_state",
    "GmresConfig", "gmres", "gmres_solve", "build_structured_quad",
    "NewtonConfig", "SolveReport", "newton_solve", "time_march",
    "burgers_model", "convdiff_model", "poisson_model", "sinsin_poisson",
]
