"""Immersion of linear systems with quadratic outputs, and Riccati observers.

A plant ``xdot = A x + B u`` with outputs ``y_h = 0.5 x^T C_h x + d_h^T x``
is embedded in a larger system that is linear in the state for every fixed
input, by appending the quadratic forms generated by repeated Lyapunov
operators. A Kalman-type observer on the extended system then recovers
``x`` from ``y``.

Modules
-------
symcalc
    vech, duplication matrices, Kronecker sums, Lyapunov operator.
sysmodel
    The plant model and its JSON document format.
immersion
    Auxiliary-state construction and the extended time-varying system.
observer
    Riccati observer and observability Gramian.
simkit
    Simulation, scenarios and CSV traces.
"""
from importlib import resources as _resources

from .immersion import (
    ImmersionError,
    LtvSystem,
    MultiOutputImmersion,
    RankAmbiguityWarning,
    SingleOutputImmersion,
    algorithm1,
    build_ltv,
    decompose_stage,
    embed,
    immerse,
    immersion_report,
    krylov_rank,
    lift,
    numerical_rank,
    rank_factorize,
    single_output_immersion,
)
from .observer import (
    ObserverConfig,
    ObserverDivergence,
    ObserverRun,
    ObserverState,
    Schedule,
    load_observer_config,
    observability_gramian,
    observer_derivative,
    run_observer,
)
from .simkit import (
    InputSignal,
    Scenario,
    ScenarioResult,
    SimulationTrace,
    load_scenario,
    run_scenario,
    simulate_extended,
    simulate_truth,
    trace_from_csv,
    trace_to_csv,
)
from .symcalc import (
    DuplicationPair,
    SymMatrix,
    duplication,
    kron,
    kron_sum,
    lifted_drift,
    lifted_input,
    lyap_op,
    vec,
    vech,
    vech_lyap_matrix,
    unvech,
)
from .sysmodel import (
    LqoSystem,
    StackedOutput,
    SystemDocumentError,
    load_system,
    output_of,
    save_system,
    stacked_output,
)

__version__ = "0.1.0"

__all__ = [
    "DuplicationPair",
    "ImmersionError",
    "InputSignal",
    "LqoSystem",
    "LtvSystem",
    "MultiOutputImmersion",
    "ObserverConfig",
    "ObserverDivergence",
    "ObserverRun",
    "ObserverState",
    "RankAmbiguityWarning",
    "Scenario",
    "ScenarioResult",
    "Schedule",
    "SimulationTrace",
    "SingleOutputImmersion",
    "StackedOutput",
    "SymMatrix",
    "SystemDocumentError",
    "algorithm1",
    "build_ltv",
    "decompose_stage",
    "duplication",
    "embed",
    "immerse",
    "immersion_report",
    "kron",
    "kron_sum",
    "krylov_rank",
    "lift",
    "lifted_drift",
    "lifted_input",
    "load_observer_config",
    "load_scenario",
    "load_system",
    "lyap_op",
    "numerical_rank",
    "observability_gramian",
    "observer_derivative",
    "output_of",
    "rank_factorize",
    "run_observer",
    "run_scenario",
    "save_system",
    "simulate_extended",
    "simulate_truth",
    "single_output_immersion",
    "stacked_output",
    "trace_from_csv",
    "trace_to_csv",
    "unvech",
    "vec",
    "vech",
    "vech_lyap_matrix",
    "data_path",
]


def data_path(name: str) -> str:
    """Path of a bundled document (``example1.json`` ... ``example3_scenario.json``)."""
    return str(_resources.files(__name__).joinpath("data", name))
