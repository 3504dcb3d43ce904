import numpy as np
import pytest

from kerrlattice import fock
from kerrlattice.dynamics import (
    Endpoint,
    IntegratorOptions,
    PositivityLost,
    StepSizeUnderflow,
    Trajectory,
    classify_endpoint,
    coherent_initial_state,
    evolve,
)
from kerrlattice.lindblad import build_liouvillian, vec

from conftest import band, branches


@pytest.fixture(scope="module")
def reference_run():
    params = band(3.0, 0.5)
    return evolve(params, coherent_initial_state(0.5 + 0.5j, 40), IntegratorOptions(t_max=50))


def test_reference_run_invariants(reference_run):
    tr = reference_run
    assert tr.trace_drift < 1e-8
    assert tr.hermiticity.max() < 1e-8
    assert np.all(np.diff(tr.times) > 0)
    assert np.all((tr.purities > 0) & (tr.purities <= 1))
    assert np.all(tr.occupations >= 0)
    assert np.all(tr.min_eigenvalues > -1e-4)
    assert len(tr.times) == 501 and tr.times[-1] == pytest.approx(50)


def test_bdf_and_rk45_agree():
    params = band(3.0, 0.5)
    rho0 = coherent_initial_state(1.0 - 1.0j, 20)
    a = evolve(params, rho0, IntegratorOptions(t_max=3, method="bdf"))
    b = evolve(params, rho0, IntegratorOptions(t_max=3, method="rk45"))
    assert np.abs(a.alphas - b.alphas).max() < 1e-6
    assert np.abs(a.purities - b.purities).max() < 1e-6


def test_rk4_agrees_with_adaptive():
    params = band(3.0, 0.5)
    rho0 = coherent_initial_state(-1.0, 15)
    a = evolve(params, rho0, IntegratorOptions(t_max=1, method="rk4", fixed_step=2e-3))
    b = evolve(params, rho0, IntegratorOptions(t_max=1, method="rk45"))
    assert np.abs(a.alphas - b.alphas).max() < 1e-7


def test_z2_equivariance_fixed_step():
    params = band(3.0, 0.5)
    n = 15
    p = fock.parity_operator(n)
    rho0 = coherent_initial_state(0.7 + 0.2j, n)
    opts = IntegratorOptions(t_max=2, method="rk4", fixed_step=2e-3)
    a = evolve(params, rho0, opts)
    b = evolve(params, p @ rho0 @ p, opts)
    assert np.abs(a.alphas + b.alphas).max() < 1e-6
    assert np.abs(a.purities - b.purities).max() < 1e-12
    assert np.abs(p @ a.final_rho @ p - b.final_rho).max() < 1e-6


def test_symmetric_initial_condition_stays_symmetric():
    tr = evolve(band(3.0, 0.5), coherent_initial_state(0, 20), IntegratorOptions(t_max=5))
    assert np.abs(tr.alphas).max() < 1e-12


def test_long_time_limit_matches_fixed_point():
    params = band(3.0, 0.5)
    b = branches(params)[1]
    opts = IntegratorOptions(t_max=2000, record_interval=1.0)
    tr = evolve(params, coherent_initial_state(b.alpha, 40), opts)
    assert tr.early_stopped
    assert classify_endpoint(tr) is Endpoint.BROKEN
    assert abs(tr.alphas[-1] - b.alpha) < 1e-4
    lmat = build_liouvillian(params, tr.alphas[-1], 40).matrix
    assert np.abs(lmat @ vec(tr.final_rho)).max() < 10 * opts.fixed_point_tol


def test_trajectories_split_in_broken_phase():
    params = band(3.0, 0.5)
    target = branches(params)[1].alpha
    ends = []
    for a0 in (0.5 + 0.5j, -1.0, 1.0j, 1.0 - 1.0j):
        tr = evolve(params, coherent_initial_state(a0, 40), IntegratorOptions(t_max=300, record_interval=1.0))
        ends.append(tr.alphas[-1])
    assert all(min(abs(e - target), abs(e + target)) < 0.05 for e in ends)
    assert any(abs(e - target) < 0.05 for e in ends) and any(abs(e + target) < 0.05 for e in ends)


def _fake(alpha_end, stopped):
    return Trajectory(
        times=np.array([0.0, 1.0]),
        alphas=np.array([0.5, alpha_end], dtype=complex),
        occupations=np.ones(2),
        purities=np.ones(2),
        final_rho=np.eye(2) / 2,
        early_stopped=stopped,
    )


def test_classify_endpoint():
    assert classify_endpoint(_fake(0.0, True)) is Endpoint.SYMMETRIC
    assert classify_endpoint(_fake(1.8, True)) is Endpoint.BROKEN
    assert classify_endpoint(_fake(1.8, False)) is Endpoint.UNDECIDED
    assert classify_endpoint(_fake(5e-4, True), threshold=1e-4) is Endpoint.BROKEN


def test_options_validation():
    with pytest.raises(ValueError):
        IntegratorOptions(rel_tol=0)
    with pytest.raises(ValueError):
        IntegratorOptions(t_max=-1)
    with pytest.raises(ValueError):
        IntegratorOptions(method="euler")
    assert IntegratorOptions().step_cap == 10.0
    assert IntegratorOptions(method="rk45").step_cap == 0.1


def test_invalid_initial_state():
    with pytest.raises(ValueError):
        evolve(band(1.0, 0.1), np.eye(5))


def test_unstable_fixed_step_is_reported():
    with pytest.raises((StepSizeUnderflow, PositivityLost)):
        evolve(band(3.0, 0.5), coherent_initial_state(0.5, 20), IntegratorOptions(t_max=5, method="rk4", fixed_step=0.1, record_interval=0.1))


def test_trajectories_relax_to_symmetric_below_threshold():
    params = band(3.0, 0.25)
    for a0 in (0.5 + 0.5j, -1.0):
        tr = evolve(params, coherent_initial_state(a0, 40), IntegratorOptions(t_max=2000, record_interval=1.0))
        assert classify_endpoint(tr) is Endpoint.SYMMETRIC
