"""2D micro-macro simulator: Hookean dumbbell Navier-Stokes-Fokker-Planck and
Oldroyd-B with stress diffusion, with closure diagnostics."""

from .diagnostics import ClosureGap, DiagnosticsRecord, closure_gap, record, relative_energy
from .errors import (CheckpointError, ConfigurationError, DumbbellError, InputError, OracleInvalidError,
                     SolverError, StabilityError)
from .fokker_planck import FPStepConfig, KineticState, drift_operator, fp_step, q_fp_operator
from .grid import Grid, SymTensorField, VectorFieldMAC
from .harness import (ExperimentPlan, InitialConditionSpec, refinement_study, run, truncation_sweep)
from .hermite import HermiteBasis, TruncationSpec, moments
from .io import diagnose_checkpoint, load_checkpoint, load_config, save_checkpoint
from .navier_stokes import FlowState, ns_step
from .oldroyd import MacroState, coupled_macro_step, sigma_step

__version__ = "0.1.0"
