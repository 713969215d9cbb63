"""Hybrid finite volume discretisation of the drift-diffusion system for
semiconductors on general polygonal meshes."""
from .statistics import Blakemore, Boltzmann, FermiDiracHalf, MeanKind, parse_statistics
from .mesh import Mesh, build_cartesian, build_from_spec, build_hexagonal, build_triangular, load_mesh
from .hfv import HybridVector, assemble_local, tensor_field
from .problem import ProblemSetup, diode_setup, make_setup
from .poisson import PoissonConfig, poisson_solve, thermal_equilibrium
from .transient import StepperConfig, run_transient, solve_step
from .diagnostics import fit_decay_rate, write_timeseries
from .config import RunConfig, load_config, parse_config

__version__ = "0.1.0"

__all__ = [
    "Blakemore", "Boltzmann", "FermiDiracHalf", "MeanKind", "parse_statistics",
    "Mesh", "build_cartesian", "build_from_spec", "build_hexagonal", "build_triangular", "load_mesh",
    "HybridVector", "assemble_local", "tensor_field",
    "ProblemSetup", "diode_setup", "make_setup",
    "PoissonConfig", "poisson_solve", "thermal_equilibrium",
    "StepperConfig", "run_transient", "solve_step",
    "fit_decay_rate", "write_timeseries",
    "RunConfig", "load_config", "parse_config",
]
