"""Vanishing-stepsize subgradient dynamics and oscillation-compensation diagnostics."""

from .dynamics import (NumericError, StepSchedule, ThinnedTrajectoryError, Trajectory,
                       load_trajectory_csv, run, save_trajectory_csv, time_in_set)
from .oracles import (AbsTerm, AffinePiece, CompositeFunction, FunctionOracle,
                      PolyhedralFunction, SelectionPolicy, SmoothTerm, Stratum,
                      SubdiffDescription, absvalley, builtin, dist_to_critical,
                      eval_oracle, nsbanana, select, subdifferential, tripod)
from .measures import (CirculationResult, EmpiricalPhaseMeasure, GridField,
                       centroid_field, circulation, closedness_defect,
                       closedness_series, closedness_terms, phase_measure)
from .diagnostics import (CompensationSeries, Cutoff, EssAccReport, FlaggedCell,
                          IntervalDecomposition, PerpReport, Region, RegionOccupation,
                          compensation_ratio, default_checkpoints, essacc_estimate,
                          interval_decomposition, neighborhood_criticality,
                          occupied_cells, perpendicularity, polyhedral_regions,
                          region_occupation, separation_time, value_convergence)
from .config import (ConfigError, DiagnosticSpec, ExperimentConfig, RunManifest,
                     emit_config, load_manifest, parse_config, save_manifest)

__version__ = "0.1.0"

__all__ = [
    "AbsTerm", "AffinePiece", "CirculationResult", "CompensationSeries",
    "CompositeFunction", "ConfigError", "Cutoff", "DiagnosticSpec",
    "EmpiricalPhaseMeasure", "EssAccReport", "ExperimentConfig", "FlaggedCell",
    "FunctionOracle", "GridField", "IntervalDecomposition", "NumericError",
    "PerpReport", "PolyhedralFunction", "Region", "RegionOccupation",
    "RunManifest", "SelectionPolicy", "SmoothTerm", "StepSchedule", "Stratum",
    "SubdiffDescription", "ThinnedTrajectoryError", "Trajectory", "absvalley",
    "builtin", "centroid_field", "circulation", "closedness_defect",
    "closedness_series", "closedness_terms", "compensation_ratio",
    "default_checkpoints", "dist_to_critical", "emit_config", "essacc_estimate",
    "eval_oracle", "interval_decomposition", "load_manifest",
    "load_trajectory_csv", "neighborhood_criticality", "nsbanana",
    "occupied_cells", "parse_config", "perpendicularity", "phase_measure",
    "polyhedral_regions", "region_occupation", "run", "save_manifest",
    "save_trajectory_csv", "select", "separation_time", "subdifferential",
    "time_in_set", "tripod", "value_convergence",
]
