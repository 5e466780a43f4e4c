"""Monitored quantities, closure gap, compatibility bound and relative energy."""

import math

import numpy as np
import pytest

from dumbbell.diagnostics import (DiagnosticsRecord, closure_gap, compatibility_check, fisher_x, kinetic_energy,
                                  kinetic_quantities, record, relative_energy, second_moment_slack)
from dumbbell.errors import ConfigurationError, InputError
from dumbbell.fokker_planck import KineticState
from dumbbell.grid import Grid, SymTensorField, VectorFieldMAC, laplacian
from dumbbell.hermite import HermiteBasis, coeffs_from_sigma, entropy_and_fisher, sigma_components
from dumbbell.navier_stokes import FlowState, ns_step
from dumbbell.oldroyd import MacroState


def perturbed_state(g, b, amp=0.4, seed=0):
    rng = np.random.default_rng(seed)
    s11 = 1 + amp * rng.random(g.shape)
    s22 = 1 + amp * rng.random(g.shape)
    s12 = 0.1 * amp * rng.standard_normal(g.shape)
    return KineticState(coeffs_from_sigma(s11, s12, s22, b), g, b)


def test_equilibrium_record():
    g, b = Grid(8, 8), HermiteBasis(6)
    kin = KineticState.equilibrium(g, b)
    rec = record(kin=kin, flow=FlowState.at_rest(g), mu=0.1)
    assert rec.kinetic_energy == 0 and rec.velocity_dissipation == 0
    assert rec.entropy == pytest.approx(0, abs=1e-14)
    assert rec.fisher_x == 0 and rec.fisher_q == 0
    assert rec.trace_sigma == pytest.approx(2 * g.area, rel=1e-15)
    assert rec.residual_nsfp == 0 and rec.mass == pytest.approx(1.0)
    assert math.isnan(rec.residual_ob)
    kin.t = 0.1
    rec2 = record(kin=kin, flow=FlowState.at_rest(g, t=0.1), mu=0.1, prev=rec)
    assert rec2.residual_nsfp == pytest.approx(0, abs=1e-12)


def test_record_argument_errors():
    g, b = Grid(8, 8), HermiteBasis(4)
    kin = KineticState.equilibrium(g, b)
    with pytest.raises(InputError):
        record()
    with pytest.raises(InputError):
        record(kin=kin, mu=0.1)
    with pytest.raises(InputError):
        record(kin=kin, flow=FlowState.at_rest(g))


def test_fisher_x_is_the_entropy_production_of_the_discrete_laplacian():
    g, b = Grid(12, 12), HermiteBasis(4)
    kin = perturbed_state(g, b)
    mu, dt = 0.1, 1e-7
    c1 = kin.coeffs + dt * mu * laplacian(kin.coeffs, g, "neumann")
    e0 = kinetic_quantities(kin)["entropy"]
    e1 = kinetic_quantities(KineticState(c1, g, b))["entropy"]
    fx = fisher_x(kin.coeffs, b, g)
    assert fx > 0
    assert (e1 - e0) / dt == pytest.approx(-4 * mu * fx, rel=1e-5)


def test_second_moment_slack_nonnegative():
    g, b = Grid(8, 8), HermiteBasis(8)
    kin = perturbed_state(g, b, amp=0.8)
    q = kinetic_quantities(kin)
    assert q["neg_fraction"] <= 1e-6
    assert second_moment_slack(q["entropy"], q["trace_sigma"], g) >= -1e-6


def test_closure_gap_zero_from_matched_data_and_errors():
    g, b = Grid(8, 8), HermiteBasis(6)
    kin = perturbed_state(g, b)
    mac = MacroState(FlowState.at_rest(g), SymTensorField(sigma_components(kin.coeffs, b)))
    gap = closure_gap(kin, mac)
    assert gap.gap_l2 == 0 and gap.gap_trace == 0 and gap.gap_psd
    later = MacroState(FlowState.at_rest(g, t=1.0), mac.sigma)
    with pytest.raises(InputError):
        closure_gap(kin, later, dt=1e-3)
    other = MacroState(FlowState.at_rest(Grid(4, 4)), SymTensorField.identity(Grid(4, 4)))
    with pytest.raises(ConfigurationError):
        closure_gap(kin, other)


def test_compatibility_bounds():
    g, b = Grid(10, 10), HermiteBasis(4)
    kin = KineticState.equilibrium(g, b)
    rng = np.random.default_rng(4)
    X, Y = g.cell_centers()
    grad_theta = np.array([[np.cos(X), 0.5 * np.sin(Y)], [0.5 * np.sin(Y), -np.cos(X) * Y]])
    for psd in (False, True):
        L = rng.standard_normal((2, 2) + g.shape) * 0.1
        if psd:
            d = np.stack([L[0, 0] ** 2 + L[0, 1] ** 2, L[0, 0] * L[1, 0] + L[0, 1] * L[1, 1],
                          L[1, 0] ** 2 + L[1, 1] ** 2])
        else:
            d = L[0]
            d = np.stack([d[0], d[1], -d[0]])
        mac = MacroState(FlowState.at_rest(g), SymTensorField(kin.sigma().data + d))
        gap = closure_gap(kin, mac)
        assert gap.gap_psd == psd
        out = compatibility_check(gap, grad_theta, g)
        assert out["frobenius_ok"]
        assert ("trace_ok" in out) == psd
        if psd:
            assert out["trace_ok"] and out["trace_bound"] <= out["frobenius_bound"] * math.sqrt(2) + 1e-15


def test_relative_energy_examples():
    g = Grid(12, 12)
    u = VectorFieldMAC.from_functions(g, lambda x, y: np.sin(np.pi * x) ** 2 * np.sin(2 * np.pi * y),
                                      lambda x, y: -np.sin(2 * np.pi * x) * np.sin(np.pi * y) ** 2)
    a = MacroState(FlowState(u, np.zeros(g.shape), g), SymTensorField.identity(g))
    assert relative_energy(a, a) == 0
    eps = 1e-3
    b = MacroState(FlowState(u * (1 + eps), np.zeros(g.shape), g), SymTensorField.identity(g))
    expect = eps**2 * kinetic_energy(u, g)
    assert relative_energy(a, b) == pytest.approx(expect, rel=1e-12)
    assert relative_energy(a, b) == relative_energy(b, a)
    with pytest.raises(ConfigurationError):
        relative_energy(a, MacroState(FlowState.at_rest(Grid(4, 4)), SymTensorField.identity(Grid(4, 4))))


def test_newtonian_energy_balance_first_order():
    # periodic Taylor-Green flow with the polymer at equilibrium: residual_nsfp
    # is the Newtonian energy balance and shrinks linearly with dt
    L = 2 * math.pi
    g, b = Grid(32, 32, L, L, "periodic"), HermiteBasis(2)
    kin = KineticState.equilibrium(g, b)
    u0 = VectorFieldMAC.from_functions(g, lambda x, y: np.sin(x) * np.cos(y), lambda x, y: -np.cos(x) * np.sin(y))
    res = []
    for dt in (2e-2, 1e-2):
        f = FlowState(u0.copy(), np.zeros(g.shape), g, 0.1)
        kin.t = 0.0
        prev = record(kin=kin, flow=f, mu=0.1)
        worst = 0.0
        for n in range(int(round(0.2 / dt))):
            f = ns_step(f, None, dt)
            kin.t = f.t
            prev = record(kin=kin, flow=f, mu=0.1, prev=prev, step=n + 1)
            worst = max(worst, abs(prev.residual_nsfp))
        res.append(worst)
    assert res[0] / res[1] == pytest.approx(2.0, rel=0.2)


def test_record_columns_are_frozen():
    cols = DiagnosticsRecord.columns()
    assert len(cols) == 25 and cols[0] == "t" and cols[-1] == "m_ob_proxy"
    assert DiagnosticsRecord().energy_nsfp() != DiagnosticsRecord().energy_nsfp()  # NaN defaults


def test_entropy_helper_agrees_with_kinetic_quantities():
    g, b = Grid(6, 6), HermiteBasis(6)
    kin = perturbed_state(g, b)
    e, _, _ = entropy_and_fisher(kin.coeffs, b)
    assert kinetic_quantities(kin)["entropy"] == pytest.approx(float(e.sum() * g.cell_area), rel=1e-14)

