import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kerrlattice import fock
from kerrlattice.lindblad import ModelParams, build_liouvillian, check_density_matrix, vec
from kerrlattice.observables import occupation, purity
from kerrlattice.steadystate import (
    Branch,
    DegenerateSteadyState,
    SolverOptions,
    SteadyStateSolver,
    canonical_alpha,
    find_branches,
    search_branches,
    selfconsistent_steady_state,
    steady_state_at_fixed_alpha,
)

from conftest import band, branches, fixed


@pytest.mark.parametrize(
    "params,alpha",
    [(ModelParams(g=3.0), 0.0), (band(3.0, 0.5), 0.4 + 0.3j), (fixed(4.0, 1.0, delta=-0.5), -0.8j)],
)
def test_direct_and_eig_routes_agree(params, alpha):
    n = 20
    rho_d = steady_state_at_fixed_alpha(params, alpha, n, method="direct")
    rho_e = steady_state_at_fixed_alpha(params, alpha, n, method="eig")
    assert np.abs(rho_d - rho_e).max() < 1e-9
    check_density_matrix(rho_d, herm_tol=1e-12, trace_tol=1e-12, psd_tol=1e-8)
    lmat = build_liouvillian(params, alpha, n).matrix
    assert np.abs(lmat @ vec(rho_d)).max() < 1e-10


def test_degenerate_null_space_detected():
    # without one-photon loss and Kerr term, two-photon processes conserve parity
    params = ModelParams(g=2.0, u=0.0, kappa=1e-14, eta=1.0)
    with pytest.raises(DegenerateSteadyState) as info:
        steady_state_at_fixed_alpha(params, 0.0, 12, method="eig")
    assert info.value.multiplicity == 2
    rho = info.value.rho
    assert abs(np.trace(rho) - 1) < 1e-10
    odd = (np.add.outer(np.arange(12), np.arange(12)) % 2).astype(bool)
    assert np.abs(rho[odd]).max() < 1e-12
    assert np.abs(build_liouvillian(params, 0.0, 12).matrix @ vec(rho)).max() < 1e-9


def test_unknown_method():
    with pytest.raises(ValueError):
        steady_state_at_fixed_alpha(ModelParams(), 0.0, 5, method="svd")


def test_jacobian_matches_finite_differences():
    params = band(3.0, 0.5)
    solver = SteadyStateSolver(params, 25)
    alpha = 0.6 + 0.2j
    _, _, jac = solver.solve(alpha, jacobian=True)
    h = 1e-6
    fd = np.zeros((2, 2))
    for col, d in enumerate((h, 1j * h)):
        fp = solver.solve(alpha + d)[1]
        fm = solver.solve(alpha - d)[1]
        diff = (fp - fm) / (2 * h)
        fd[:, col] = [diff.real, diff.imag]
    assert np.abs(jac - fd).max() < 1e-6


def test_symmetric_phase_has_single_branch():
    bs = branches(band(3.0, 0.2))
    assert len(bs) == 1
    assert bs[0].branch is Branch.SYMMETRIC and bs[0].alpha == 0


@pytest.mark.parametrize("params", [band(3.0, 0.5), fixed(3.7, 1.0), band(8.0, 1.0)])
def test_broken_fixed_point_checked_by_dense_route(params):
    n = 30
    bs = branches(params, n)
    assert len(bs) == 2
    b = bs[1]
    assert b.branch is Branch.BROKEN and abs(b.alpha) > 0.1
    assert b.alpha == canonical_alpha(b.alpha)
    # independent: dense null vector of L at the same mean field reproduces alpha
    rho = steady_state_at_fixed_alpha(params, b.alpha, n, method="eig")
    a = fock.annihilation(n)
    assert abs(np.trace(a @ rho) - b.alpha) < 1e-8
    assert np.abs(rho - b.rho).max() < 1e-8
    check_density_matrix(b.rho, herm_tol=1e-8, trace_tol=1e-8, psd_tol=1e-8)


@pytest.mark.parametrize("params", [band(3.0, 0.5), fixed(3.7, 1.0)])
def test_z2_partner_is_fixed_point(params):
    b = branches(params)[1]
    assert b.z2_defect < 1e-6
    n = 40
    p = fock.parity_operator(n)
    partner = steady_state_at_fixed_alpha(params, -b.alpha, n)
    assert np.abs(partner - p @ b.rho @ p).max() < 1e-6
    assert abs(np.trace(fock.annihilation(n) @ partner) + b.alpha) < 1e-6


def test_symmetric_state_is_mixed_cat_like():
    rho = branches(band(3.0, 0.25))[0].rho
    assert 0.45 <= purity(rho) <= 0.55
    assert occupation(rho) > 0.5


def test_weak_drive_row_symmetric():
    for j in (0.1, 0.5, 1.0):
        for mode in (band, fixed):
            assert len(find_branches(mode(0.2, j), n_levels=30)) == 1


def test_selfconsistent_from_seed_and_nonconvergence():
    params = band(3.0, 0.5)
    fp = selfconsistent_steady_state(params, 0.5, n_levels=30)
    assert fp.converged and fp.branch is Branch.BROKEN
    assert abs(abs(fp.alpha) - abs(branches(params, 30)[1].alpha)) < 1e-8
    stuck = selfconsistent_steady_state(
        params, 0.5, SolverOptions(max_iter=2, newton_fallback=False), n_levels=30
    )
    assert not stuck.converged


def test_search_reports_no_failures_and_dedupes():
    res = search_branches(band(3.0, 0.5), n_levels=30)
    assert res.failed_seeds == []
    assert len(res.branches) == 2


def test_solver_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(mixing=0)
    with pytest.raises(ValueError):
        SolverOptions(seeds=())


@settings(max_examples=50)
@given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_canonical_alpha_is_z2_invariant(z):
    c = canonical_alpha(z)
    assert c == canonical_alpha(-z)
    assert c in (z, -z)
    assert c.real > 0 or (c.real == 0 and c.imag >= 0)


@pytest.mark.parametrize("j", [0.1, 0.3])
def test_symmetric_phase_matches_single_site_at_same_detuning(j):
    sym = branches(band(3.0, j))
    assert len(sym) == 1
    single = steady_state_at_fixed_alpha(fixed(3.0, 0.0, -j), 0.0, 40)
    assert np.abs(sym[0].rho - single).max() < 1e-9
