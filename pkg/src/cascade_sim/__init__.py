"""Entanglement of two distant atoms through cascaded, leaky optical cavities."""

__version__ = "0.1.0"

from .analytic import (
    AmplitudeState,
    Schedule,
    amplitudes_driven,
    amplitudes_stored,
    atom_concurrence_curve,
    evolve_protocol,
    find_tbar,
    p_no,
)
from .detection import (
    ChannelProbabilities,
    RecordStatistics,
    channel_probabilities,
    concurrence_conditional,
    conditional_state,
    rho_atoms_given_no_loss,
    simulate_records,
)
from .dynamics import (
    EnsembleResult,
    JumpChannel,
    TrajectoryRecord,
    integrate,
    jump_rates,
    run_ensemble,
    simulate_trajectory,
)
from .entanglement import (
    concurrence,
    concurrence_atoms_closed,
    concurrence_cavities_closed,
    rho_atoms,
    rho_cavities,
)
from .params import DerivedParams, SubsystemParams, SystemParams, baseline, raman_adequacy, validate

__all__ = [
    "__version__",
    "AmplitudeState",
    "Schedule",
    "amplitudes_driven",
    "amplitudes_stored",
    "atom_concurrence_curve",
    "evolve_protocol",
    "find_tbar",
    "p_no",
    "ChannelProbabilities",
    "RecordStatistics",
    "channel_probabilities",
    "concurrence_conditional",
    "conditional_state",
    "rho_atoms_given_no_loss",
    "simulate_records",
    "EnsembleResult",
    "JumpChannel",
    "TrajectoryRecord",
    "integrate",
    "jump_rates",
    "run_ensemble",
    "simulate_trajectory",
    "concurrence",
    "concurrence_atoms_closed",
    "concurrence_cavities_closed",
    "rho_atoms",
    "rho_cavities",
    "DerivedParams",
    "SubsystemParams",
    "SystemParams",
    "baseline",
    "raman_adequacy",
    "validate",
]
