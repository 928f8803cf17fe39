import types
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.stats import unitary_group

from partialwidths import (BlockDensity, ChannelState, PartialWidthWarning, ResonanceState, SectorMap,
                           WidthReport, build_basis, channel_states, coherence_closed_form,
                           diagonalize_sector, kappa_matrix, one_body_operator,
                           partial_width_cap_grid, partial_width_cap_orbital, partial_width_ecs,
                           population_closed_form, propagate, purity_closed_form, total_width,
                           two_body_operator)

from conftest import TinyModel, single_channel_case, tiny_resonance


def test_total_width_definition():
    assert total_width(ResonanceState(1.0 - 0.005j, np.ones(3))) == pytest.approx(0.01)
    # a non-decaying state cannot be a ResonanceState; the formula itself gives zero
    assert total_width(types.SimpleNamespace(eps_I=0.0)) == 0.0


@pytest.fixture(scope="module")
def tiny_case():
    model = TinyModel(4)
    res, channels, report = tiny_resonance(model)
    return model, res, channels, report


def maps_of(model, n=2):
    return [model.basis.annihilator(k, n) for k in range(model.M)]


def test_zero_cap_gives_zero_partials(tiny_case):
    model, res, channels, _ = tiny_case
    rep = partial_width_cap_grid(res, channels, np.zeros(4), maps_of(model))
    assert not np.any(rep.partials) and rep.method == "CAP-grid"


def test_grid_partials_are_nonnegative_and_sum(tiny_case):
    _, _, _, rep = tiny_case
    assert np.all(rep.partials >= -1e-12)
    assert abs(rep.sum_residual) <= 1e-12 * rep.gamma_total
    assert np.allclose(np.diag(rep.kappa).real, rep.partials, atol=1e-10 * rep.gamma_total)


def test_orbital_form_with_diagonal_matrix_is_grid_form(tiny_case):
    model, res, channels, rep = tiny_case
    orb = partial_width_cap_orbital(res, channels, np.diag(model.cap), maps_of(model))
    assert np.allclose(orb.partials, rep.partials, atol=1e-12, rtol=0)
    assert orb.method == "CAP-orbital" and orb.imag_residue <= 1e-10 * rep.gamma_total
    zero = partial_width_cap_orbital(res, channels, np.zeros((4, 4)), maps_of(model))
    assert not np.any(zero.partials)
    with pytest.raises(ValueError):
        partial_width_cap_orbital(res, channels, np.triu(np.ones((4, 4))), maps_of(model))


def rotated(model, res, channels, U):
    """Orbital maps c~_k = sum_i conj(U[i,k]) c_i and the CAP in the rotated basis."""
    maps = maps_of(model)
    rot = []
    for k in range(model.M):
        mat = sum(np.conj(U[i, k]) * maps[i].matrix for i in range(model.M))
        rot.append(SectorMap(k, 2, sp.csr_array(mat)))
    gamma_orb = U.conj().T @ np.diag(model.cap) @ U
    return partial_width_cap_orbital(res, channels, gamma_orb, rot)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_unitary_mode_rotation_invariance(seed):
    model = TinyModel(4)
    res, channels, rep = tiny_resonance(model)
    U = unitary_group.rvs(4, random_state=np.random.default_rng(seed))
    out = rotated(model, res, channels, U)
    assert np.max(np.abs(out.partials - rep.partials)) <= 1e-10 * rep.gamma_total
    assert np.argmax(out.partials) == np.argmax(rep.partials)


def test_kappa_is_hermitian(tiny_case):
    model, res, channels, rep = tiny_case
    k = kappa_matrix(res, channels, model.cap, maps_of(model))
    assert np.max(np.abs(k - k.conj().T)) <= 1e-10 * rep.gamma_total
    assert np.allclose(np.diag(k).real, rep.partials, atol=1e-10 * rep.gamma_total)


def test_single_channel():
    res, channels, rep, _ = single_channel_case()
    assert len(channels) == 1
    assert rep.partials[0] / rep.gamma_total == pytest.approx(1.0, abs=1e-12)
    assert rep.kappa.shape == (1, 1) and rep.kappa[0, 0].real == pytest.approx(rep.gamma_total, rel=1e-12)
    curve, asym = purity_closed_form(rep.kappa, rep.energies, rep.gamma_total, np.array([0.0, 1e4]))
    assert asym == pytest.approx(1.0, abs=1e-12) and curve[-1] == pytest.approx(1.0, abs=1e-12)


def test_ecs_with_zero_coefficients():
    model = TinyModel(0)
    res, channels, _ = tiny_resonance(model)
    rep = partial_width_ecs(res, channels, np.zeros((4, 4)), maps_of(model))
    assert not np.any(rep.partials) and rep.method == "ECS"


def test_negative_ecs_partials_warn():
    model = TinyModel(0)
    res, channels, _ = tiny_resonance(model)
    with pytest.warns(PartialWidthWarning):
        partial_width_ecs(res, channels, -np.diag(model.cap), maps_of(model))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        partial_width_ecs(res, channels, np.diag(model.cap), maps_of(model))


def test_sector_mismatch():
    model = TinyModel(0)
    res, channels, _ = tiny_resonance(model)
    with pytest.raises(ValueError):
        partial_width_cap_grid(res, channels, model.cap, maps_of(model, n=1))
    with pytest.raises(TypeError):
        partial_width_cap_grid(res, channels, model.cap, model.basis)


def test_report_serialization(tiny_case):
    *_, rep = tiny_case
    d = rep.to_dict()
    assert set(d) == {"gamma_total", "partials", "sum_residual", "method", "imag_residue", "absorber"}
    assert [p["p"] for p in d["partials"]] == list(range(len(rep.partials)))


def fake_report(partials, energies=None):
    partials = np.asarray(partials, dtype=float)
    energies = np.arange(len(partials), dtype=float) if energies is None else np.asarray(energies)
    return WidthReport(float(partials.sum()), partials, energies, np.diag(partials).astype(complex), "CAP-grid")


def test_population_closed_form():
    rep = fake_report([0.3, 0.1, 0.0])
    G = rep.gamma_total
    curves = population_closed_form(rep, np.array([0.0, np.log(2) / G, 1e4]))
    assert curves.resonance[0] == 1 and not np.any(curves.channels[0])
    assert curves.resonance[1] == pytest.approx(0.5)
    assert np.allclose(curves.resonance + curves.channels.sum(axis=1), 1.0, atol=1e-15)
    assert np.allclose(curves.channels[-1], rep.partials / G)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_purity_closed_form_bounds(seed):
    rng = np.random.default_rng(seed)
    n = rng.integers(1, 5)
    A = rng.normal(size=(n, 3)) + 1j * rng.normal(size=(n, 3))
    kappa = 2 * A @ np.diag(rng.uniform(0, 1, 3)) @ A.conj().T
    G = float(np.trace(kappa).real)             # exact sum rule
    e = rng.normal(size=n)
    t = np.linspace(0, 20 / G, 200)
    curve, asym = purity_closed_form(kappa, e, G, t)
    assert curve[0] == pytest.approx(1.0, abs=1e-10)
    assert np.all(curve <= 1 + 1e-10) and np.all(curve > 0)
    assert 0 < asym <= 1 + 1e-12
    big, _ = purity_closed_form(kappa, e, G, np.array([60 / G]))
    assert big[0] == pytest.approx(asym, abs=1e-6)
    # the coefficient solution is the same object the purity is built from
    p = coherence_closed_form(kappa, e, G, t)
    assert np.allclose(np.exp(-2 * G * t) + np.sum(np.abs(p) ** 2, axis=(1, 2)), curve, atol=1e-12)


def test_tiny_oracle_branching(tiny_case):
    model, res, channels, rep = tiny_case
    G = rep.gamma_total
    init = BlockDensity.from_pure(res.vector, 2, {0: 1, 1: 4})
    T = 20 / G
    traj = propagate(init, model.generator(), T, dt=T, method="adaptive", samples=3, channels=channels,
                     rtol=1e-9, atol=1e-12)
    assert np.max(np.abs(traj.P[-1] - rep.partials / G)) <= 1e-6
