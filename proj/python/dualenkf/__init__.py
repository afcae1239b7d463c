"""Dual ensemble Kalman filter for linear-quadratic control."""

from ._dualenkf import (
    LqProblem,
    NumericalError,
    __version__,
    average_cost,
    closed_loop_eigenvalues,
    dual_ricc_op,
    gain_from_p,
    p_to_s,
    probe_control,
    problem,
    random_canonical,
    require_valid,
    ricc_op,
    run_experiment,
    run_offline,
    s_to_p,
    solve_are,
    solve_dre,
    solve_dual_dre,
    spring_mass_damper,
    validate,
)
