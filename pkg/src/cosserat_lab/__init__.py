"""Numerical laboratory for Cosserat-elastic solids with half-turn micro-rotations."""

from .degree import (
    DipoleRecord,
    ProbeResult,
    SingularPoint,
    adaptive_degree,
    find_singularities,
    LiftResult,
    lift,
    lift_axes,
    lift_grid,
    map_degree_phi,
    mod2_degree_at,
    probe_degree,
    sphere_degree,
    verify_dipole,
)
from .diagnostics import AuditReport, SliceReport, minimizer_energy_audit, slice_diagnostics
from .dipole import (
    BoundaryData,
    BoundaryDataSpec,
    BubbleParams,
    CuboidDecomposition,
    DipoleConstruction,
    DipoleInsertion,
    bubble_insert,
    construction_energy,
    cube_flip,
    insert_dipole,
    thm1_boundary_data,
)
from .errors import CosseratError
from .grid import (
    CosseratField,
    EnergyReport,
    GridDomain,
    energy,
    export_vtk,
    gradient,
    import_vtk,
    make_domain,
    read_field,
    rigid_base_field,
    write_field,
)
from .minimize import SolverConfig, gradient_check, minimize_restricted, perturb_field
from .so3 import MaterialConstants, axis_of, cover, cover_differential, p_operator, principal_axis
from .sources import AnalyticSource, GridSource, rigid_source

__version__ = "0.1.0"

__all__ = [
    "adaptive_degree",
    "AnalyticSource",
    "AuditReport",
    "axis_of",
    "BoundaryData",
    "BoundaryDataSpec",
    "bubble_insert",
    "BubbleParams",
    "construction_energy",
    "CosseratError",
    "CosseratField",
    "cover",
    "cover_differential",
    "cube_flip",
    "CuboidDecomposition",
    "DipoleConstruction",
    "DipoleInsertion",
    "DipoleRecord",
    "energy",
    "EnergyReport",
    "export_vtk",
    "find_singularities",
    "gradient",
    "gradient_check",
    "GridDomain",
    "GridSource",
    "import_vtk",
    "insert_dipole",
    "lift",
    "lift_axes",
    "lift_grid",
    "LiftResult",
    "make_domain",
    "map_degree_phi",
    "MaterialConstants",
    "minimize_restricted",
    "minimizer_energy_audit",
    "mod2_degree_at",
    "p_operator",
    "perturb_field",
    "principal_axis",
    "probe_degree",
    "ProbeResult",
    "read_field",
    "rigid_base_field",
    "rigid_source",
    "SingularPoint",
    "slice_diagnostics",
    "SliceReport",
    "SolverConfig",
    "sphere_degree",
    "thm1_boundary_data",
    "verify_dipole",
    "write_field",
    "__version__",
]
