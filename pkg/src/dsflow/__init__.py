"""Direct serendipity and enriched Galerkin two-phase flow on quadrilaterals.

The package is organized by stage of the IMPES loop:

mesh         conforming convex-quad meshes, bilinear maps, edge skeleton
serendipity  DS_r nodal elements and the continuous / enriched spaces
mixed        AC_s velocity-pressure elements and the edge trace space
rockfluid    mobilities, fractional flow, capillary pressure, permeability
flow         hybrid mixed solve for the wetting potential and u_a
capillary    capillary flux u_c by the zeta substitution
transport    EG saturation transport with entropy viscosity
impes        configuration, scenario presets and the time loop
"""

from .capillary import CapillaryFlux, CapillarySolver
from .errors import DsflowError
from .flow import BoundaryCondition, FlowSolution, FlowSolver, dirichlet, neumann
from .impes import (PRESETS, RunResult, Simulation, SimulationConfig, load_config, preset_config,
                    run)
from .mesh import (Mesh, build_mesh, generate_distorted_grid, load_tracer_mesh, read_mesh,
                   square_with_hole, uniform_grid, write_mesh)
from .mixed import FULL, REDUCED, ACSpace, TraceSpace
from .rockfluid import (FluidParams, LinearTracerModel, RockParams, TwoPhaseModel,
                        capillary_pressure, mobilities_and_fractional_flow)
from .serendipity import DSSpace, EGSpace, ElementBasis, local_dimension
from .transport import SaturationState, TransportParams, TransportSolver

__version__ = "0.1.0"

__all__ = [
    "ACSpace", "BoundaryCondition", "CapillaryFlux", "CapillarySolver", "DSSpace", "DsflowError",
    "EGSpace", "ElementBasis", "FULL", "FlowSolution", "FlowSolver", "FluidParams",
    "LinearTracerModel", "Mesh", "PRESETS", "REDUCED", "RockParams", "RunResult", "SaturationState",
    "Simulation", "SimulationConfig", "TraceSpace", "TransportParams", "TransportSolver",
    "TwoPhaseModel", "build_mesh", "capillary_pressure", "dirichlet", "generate_distorted_grid",
    "load_config", "load_tracer_mesh", "local_dimension", "mobilities_and_fractional_flow",
    "neumann", "preset_config", "read_mesh", "run", "square_with_hole", "uniform_grid",
    "write_mesh",
]
