"""Matrix-level emulators of three quantum integrators for ``dp/dt = R p``."""

from .block_euler import (
    BlockEncodedStep,
    QuantumRun,
    block_euler_step,
    build_block_encoding,
    expected_calls,
    max_step_size,
    run_block_euler,
)
from .lcu import LcuStep, build_hr, build_lcu, lcu_step, run_lcu
from .schrod import (
    FourierRegister,
    HermitianSplit,
    Recovery,
    build_hs,
    propagator_check,
    run_schrod,
    schrod_evolve,
    schrod_propagator,
    schrod_propagators,
    schrod_recover,
    split_hermitian,
)
from .state import EmulatorState

__all__ = [
    "BlockEncodedStep",
    "EmulatorState",
    "FourierRegister",
    "HermitianSplit",
    "LcuStep",
    "QuantumRun",
    "Recovery",
    "block_euler_step",
    "build_block_encoding",
    "build_hr",
    "build_hs",
    "build_lcu",
    "expected_calls",
    "lcu_step",
    "max_step_size",
    "propagator_check",
    "run_block_euler",
    "run_lcu",
    "run_schrod",
    "schrod_evolve",
    "schrod_propagator",
    "schrod_propagators",
    "schrod_recover",
    "split_hermitian",
]
