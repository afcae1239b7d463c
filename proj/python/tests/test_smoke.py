import pathlib

import numpy as np
import pytest

import dualenkf

ROOT = pathlib.Path(__file__).resolve().parents[2]


def scalar(cost="lqg", theta=0.0, T=None):
    one = np.ones((1, 1))
    return dualenkf.problem(one, one, 0.5 * one, one, one, one, cost=cost, theta=theta, T=T)


def test_scalar_are():
    sol = dualenkf.solve_are(scalar())
    assert sol["P_bar"][0, 0] == pytest.approx(1 + np.sqrt(2), rel=1e-10)
    assert sol["residual"] < 1e-10


def test_dre_and_dual_dre_agree():
    p = dualenkf.spring_mass_damper(2, 0.1)
    P = dualenkf.solve_dre(p, 2.0, 1e-3)
    S = dualenkf.solve_dual_dre(p, 2.0, 1e-3)
    assert P["values"].shape == S["values"].shape == (len(P["times"]), 4, 4)
    for k in range(0, len(P["times"]), 100):
        np.testing.assert_allclose(dualenkf.s_to_p(S["values"][k], p), P["values"][k], rtol=1e-6, atol=1e-9)


def test_validate_flags_bad_input_cost():
    one = np.ones((1, 1))
    bad = dualenkf.problem(one, one, one, one, -one, one)
    report = dualenkf.validate(bad)
    assert not report["ok"]
    assert any(c["name"] == "R>0" and not c["passed"] for c in report["checks"])
    with pytest.raises(ValueError):
        dualenkf.require_valid(bad)


def test_enkf_is_reproducible():
    p = dualenkf.spring_mass_damper(1, 0.1)
    a = dualenkf.run_offline(p, particles=50, horizon=1.0, seed=3)
    b = dualenkf.run_offline(p, particles=50, horizon=1.0, seed=3, threads=2)
    assert a["S"].shape == (51, 2, 2)
    assert np.array_equal(a["S"], b["S"])
    assert np.array_equal(a["means"], b["means"])


def test_negative_theta_never_inverts():
    p = dualenkf.spring_mass_damper(1, 0.1).with_cost("leqg", -0.8)
    out = dualenkf.run_offline(p, particles=50, horizon=1.0)
    assert out["covariance_inversions"] == 0


def test_probe_matches_gain_without_noise():
    p = dualenkf.spring_mass_damper(2, 0.0)
    rng = np.random.default_rng(0)
    M = rng.normal(size=(4, 4))
    P = M @ M.T + np.eye(4)
    x = rng.normal(size=4)
    u = dualenkf.probe_control(x, P, p)
    np.testing.assert_allclose(u, dualenkf.gain_from_p(P, p) @ x, atol=1e-10)


def test_closed_loop_from_are_is_stable():
    p = dualenkf.random_canonical(6, 1, 0.1)
    K = dualenkf.gain_from_p(dualenkf.solve_are(p)["P_bar"], p)
    assert max(e.real for e in dualenkf.closed_loop_eigenvalues(p, K)) < 0
    assert dualenkf.average_cost(p, K) > 0


def test_run_experiment_writes_bundle(tmp_path):
    out = dualenkf.run_experiment(str(ROOT / "configs" / "scalar.ini"), output_dir=str(tmp_path), seed=1)
    assert out["complete"]
    assert "manifest.json" not in out["files"]
    assert (tmp_path / "manifest.json").exists()
    assert "summary.json" in out["files"]
