import numpy as np
import pytest

from kerrlattice import fock
from kerrlattice.dynamics import MeanFieldFlow
from kerrlattice.lindblad import build_liouvillian, unvec, vec
from kerrlattice.stability import (
    MomentumGrid,
    NoSignChange,
    StationaryModeAmbiguous,
    SymmetryViolation,
    _drop_stationary,
    excitation_spectrum,
    linearized_generator,
    stability_boundary,
)
from kerrlattice.steadystate import steady_state_at_fixed_alpha

from conftest import band, branches, fixed


def test_momentum_grid():
    grid = MomentumGrid(n_k=5)
    assert np.allclose(grid.k_values, [0, np.pi / 4, np.pi / 2, 3 * np.pi / 4, np.pi])
    assert np.allclose(grid.dispersion(2.0), -2.0 * np.cos(grid.k_values))
    with pytest.raises(ValueError):
        MomentumGrid(n_k=1)
    with pytest.raises(ValueError):
        MomentumGrid(z=4)


def test_k0_generator_is_linearized_mean_field_flow(rng):
    # the uniform (k=0) excitation is a perturbation of the nonlinear
    # single-site flow, so M_0 must equal its derivative at rho_s
    params = band(3.0, 0.6)
    n = 15
    rho_s = steady_state_at_fixed_alpha(params, 0.0, n)
    flow = MeanFieldFlow(params, n)
    m0 = linearized_generator(build_liouvillian(params, 0.0, n), rho_s, -params.j).matrix
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    d = vec(x + x.conj().T)
    h = 1e-6
    fd = (flow(0, vec(rho_s) + h * d) - flow(0, vec(rho_s) - h * d)) / (2 * h)
    assert np.abs(fd - m0 @ d).max() < 1e-7


def test_generator_zero_hopping_is_liouvillian():
    params = band(2.0, 0.0)
    lv = build_liouvillian(params, 0.0, 10)
    rho_s = steady_state_at_fixed_alpha(params, 0.0, 10)
    assert abs(linearized_generator(lv, rho_s, 0.0).matrix - lv.matrix).max() == 0


def test_symmetry_violation():
    params = band(3.0, 0.5)
    n = 20
    rho = fock.projector(fock.coherent_state(0.5, n))
    with pytest.raises(SymmetryViolation):
        linearized_generator(build_liouvillian(params, 0.0, n), rho, 0.3)


@pytest.mark.parametrize(
    "params", [band(3.0, 0.2), band(3.0, 0.5), fixed(4.0, 2.0), fixed(1.0, 1.0), fixed(3.7, 1.0)]
)
def test_arnoldi_matches_dense(params):
    grid = MomentumGrid(n_k=9)
    dense = excitation_spectrum(params, grid, 20, method="dense")
    arn = excitation_spectrum(params, grid, 20, method="arnoldi")
    assert np.abs(dense.least_stable - arn.least_stable).max() < 1e-8
    assert dense.argmax_k == arn.argmax_k


def test_dense_spectrum_counts_modes():
    grid = MomentumGrid(n_k=3)
    spec = excitation_spectrum(band(2.0, 0.3), grid, 8, method="dense")
    # N^2 eigenvalues minus the stationary one
    assert all(len(om) == 8 * 8 - 1 for om in spec.omegas)
    assert np.all(spec.even_modes.imag < 0)


def test_flat_dispersion_at_zero_hopping():
    spec = excitation_spectrum(band(3.0, 0.0), MomentumGrid(n_k=17), 25)
    assert np.all(spec.least_stable == spec.least_stable[0])
    assert spec.argmax_k == 0.0
    assert spec.max_im < 0


def test_instability_at_k0_for_band_bottom():
    spec = excitation_spectrum(band(3.0, 0.5), n_levels=40)
    assert spec.max_im > 0 and spec.argmax_k == 0.0
    assert excitation_spectrum(band(3.0, 0.25), n_levels=40).max_im < 0


def test_unknown_method():
    with pytest.raises(ValueError):
        excitation_spectrum(band(1.0, 0.1), MomentumGrid(n_k=2), 6, method="lanczos")


def test_drop_stationary_requires_unique_match():
    rho = np.array([1.0, 0.0, 0.0])
    vecs = np.eye(3, dtype=complex)
    assert _drop_stationary(np.array([0.0, -1.0, -2.0]), vecs, rho).tolist() == [-1.0, -2.0]
    vecs2 = np.array([[1, 1, 0], [0, 0, 0], [0, 0, 1]], dtype=complex)
    with pytest.raises(StationaryModeAmbiguous):
        _drop_stationary(np.array([0.0, 0.0, -2.0]), vecs2, rho)
    with pytest.raises(StationaryModeAmbiguous):
        _drop_stationary(np.array([-1.0, -1.5, -2.0]), vecs, rho)


def test_stability_boundary_brackets_and_sign_error():
    params = band(3.0, 0.0)
    grid = MomentumGrid(n_k=5)
    jb = stability_boundary(params, (0.2, 0.5), tol=1e-3, grid=grid, n_levels=30)
    assert 0.3 < jb < 0.36
    with pytest.raises(NoSignChange):
        stability_boundary(params, (0.05, 0.1), grid=grid, n_levels=30)


def test_rho_s_reused():
    params = band(3.0, 0.4)
    rho = branches(params, 25)[0].rho
    a = excitation_spectrum(params, MomentumGrid(n_k=5), 25, rho_s=rho)
    b = excitation_spectrum(params, MomentumGrid(n_k=5), 25)
    assert np.array_equal(a.least_stable, b.least_stable)
