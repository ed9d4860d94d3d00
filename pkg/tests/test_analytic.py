import math
from dataclasses import replace

import numpy as np
import pytest
from _oracles import oracle_amplitudes, random_params

from cascade_sim.analytic import (
    SINGULAR_TOL,
    AmplitudeState,
    Schedule,
    _alpha_beta,
    amplitudes_driven,
    amplitudes_stored,
    closed_form_intermediates,
    evolve_protocol,
    find_tbar,
    formula_family,
    lambda_k,
    p_no,
)
from cascade_sim.errors import EmptyWindow, NegativeTime, TimeBeforeSwitchOff
from cascade_sim.params import DerivedParams, SubsystemParams, SystemParams, baseline

TBAR = 28.32


def test_lambda_special_values():
    assert lambda_k(DerivedParams(0.0, 0.0, 0.0, 1.0)) == pytest.approx(0.5)
    assert lambda_k(DerivedParams(0.1, 0.0, 0.0, 0.0)) == pytest.approx(0.2j)
    lam = lambda_k(baseline().derived_a)
    assert lam == pytest.approx(math.sqrt(0.21), abs=1e-12)
    assert lam == pytest.approx(0.458258, abs=1e-6)


def test_lambda_squared_reproduces_radicand():
    rng = np.random.default_rng(3)
    for _ in range(50):
        d = DerivedParams(*rng.uniform(-1, 1, 3), rng.uniform(0, 2))
        x = d.big_k + 2j * d.stark_cavity
        radicand = (x / 2 - 1j * d.stark_laser) ** 2 - 4 * d.g_bar**2
        lam = lambda_k(d)
        assert abs(lam**2 - radicand) <= 1e-12 * max(abs(radicand), 1e-300)


def test_initial_state():
    s = amplitudes_driven(baseline(), 0.0)
    assert (s.alpha, s.beta, s.gamma, s.delta) == (1, 0, 0, 0)


def test_baseline_at_peak():
    s = amplitudes_driven(baseline(), TBAR)
    pops = s.populations
    assert pops[0] == pytest.approx(0.33, abs=0.01)
    assert pops[2] == pytest.approx(0.33, abs=0.01)
    assert pops[0] + pops[2] == pytest.approx(0.66, abs=0.01)
    assert pops[1] == pytest.approx(0.01, abs=0.005)
    assert pops[3] == pytest.approx(0.01, abs=0.005)


def test_matches_oracle_baseline():
    p = baseline()
    for t in (0.0, 0.3, 5.0, TBAR, 50.0):
        assert np.allclose(amplitudes_driven(p, t).as_array(), oracle_amplitudes(p, t), rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_matches_oracle_random(seed):
    rng = np.random.default_rng(seed)
    for _ in range(20):
        p = random_params(rng)
        t = rng.uniform(0, 50)
        err = np.abs(amplitudes_driven(p, t).as_array() - oracle_amplitudes(p, t)).max()
        assert err < 1e-10


def test_vector_and_scalar_evaluation_agree():
    p = random_params(np.random.default_rng(11))
    t = np.linspace(0, 40, 9)
    vec = amplitudes_driven(p, t).as_array()
    for i, ti in enumerate(t):
        assert np.allclose(vec[:, i], amplitudes_driven(p, ti).as_array(), rtol=0, atol=1e-15)


def test_norm_bounded_and_non_increasing():
    rng = np.random.default_rng(5)
    t = np.linspace(0, 50, 2001)
    for _ in range(10):
        p = random_params(rng)
        survive = np.sum(amplitudes_driven(p, t).populations, axis=0)
        assert survive.max() <= 1 + 1e-9
        assert np.all(np.diff(survive) <= 1e-12)


def test_phase_covariance():
    p = random_params(np.random.default_rng(8))
    t = np.linspace(0, 30, 31)
    ref = amplitudes_driven(p, t)
    for dphi in (math.pi / 3, math.pi, 1.7 * math.pi):
        s = amplitudes_driven(p.with_phi(p.phi + dphi), t)
        factor = np.exp(1j * dphi)
        assert np.allclose(s.alpha, ref.alpha, atol=1e-14)
        assert np.allclose(s.beta, ref.beta, atol=1e-14)
        assert np.allclose(s.gamma, ref.gamma * factor, atol=1e-13)
        assert np.allclose(s.delta, ref.delta * factor, atol=1e-13)


def test_branch_choice_cancels_in_alpha_beta():
    rng = np.random.default_rng(2)
    t = np.linspace(0, 40, 41)
    for _ in range(10):
        d = random_params(rng).derived_a
        lam = lambda_k(d)
        a1, b1 = _alpha_beta(d, t, lam)
        a2, b2 = _alpha_beta(d, t, -lam)
        assert np.allclose(a1, a2, atol=1e-13)
        assert np.allclose(b1, b2, atol=1e-13)


def test_formula_families():
    assert formula_family(baseline()) == "equal"
    assert formula_family(random_params(np.random.default_rng(0))) == "general"
    # pure decay with equal bandwidths: every exponent coincides pairwise
    sub = SubsystemParams(0.0, 0.0, 1000.0, 1.0)
    assert formula_family(SystemParams.equal(sub)) in {"limit", "equal"}


@pytest.mark.parametrize("field_name", ["kappa", "kappa_loss", "g", "omega_rabi", "detuning"])
def test_degenerate_limit_consistency(field_name):
    """General formulas 1e-6 away from equality agree with the equal-parameter ones."""
    p = baseline()
    bumped = replace(p.b, **{field_name: getattr(p.b, field_name) * (1 + 1e-6)})
    near = SystemParams(p.a, bumped, p.phi)
    assert formula_family(near) == "general"
    t = np.linspace(0, 50, 201)
    diff = np.abs(amplitudes_driven(near, t).as_array() - amplitudes_driven(p, t).as_array())
    assert diff.max() < 1e-5


def test_limit_family_matches_oracle():
    # g = Omega cancels the two Stark shifts in the radicand; K = 4|g_bar| then gives Lambda = 0
    g = math.sqrt(250.0)
    sub = SubsystemParams(g=g, omega_rabi=g, detuning=1e3, kappa=1.0)
    p = SystemParams.equal(sub)
    assert abs(lambda_k(p.derived_a)) < SINGULAR_TOL
    assert formula_family(p) == "limit"
    t = np.array([0.5, 3.0, 12.0])
    got = amplitudes_driven(p, t).as_array()
    want = np.stack([oracle_amplitudes(p, ti) for ti in t], axis=1)
    assert np.abs(got - want).max() < 1e-9


def test_coincident_exponents_use_limit_form():
    # target and source differ only in kappa split, so K and shifts match but kappa differs
    a = SubsystemParams(0.0, 0.0, 1000.0, 1.0, 0.0)
    b = SubsystemParams(0.0, 0.0, 1000.0, 0.5, 0.5)
    p = SystemParams(a, b)
    assert formula_family(p) == "limit"
    s = amplitudes_driven(p, np.array([0.0, 1.0, 10.0]))
    assert np.allclose(s.as_array()[2:], 0.0)


def test_large_times_do_not_overflow():
    for p in (baseline(), random_params(np.random.default_rng(1))):
        s = amplitudes_driven(p, np.array([1e3, 1e4]))
        assert np.all(np.isfinite(s.as_array()))


def test_intermediates_reproduce_general_amplitudes():
    p = random_params(np.random.default_rng(4))
    t = 3.7
    c = closed_form_intermediates(p, t)
    db = p.derived_b
    gamma = db.g_bar * (c.f_plus * (c.g_minus + c.h_plus) - c.f_minus * (c.g_plus + c.h_minus))
    assert gamma == pytest.approx(amplitudes_driven(p, t).gamma, abs=1e-12)
    assert c.lambda_a == pytest.approx(lambda_k(p.derived_a))


def test_negative_time_rejected():
    with pytest.raises(NegativeTime):
        amplitudes_driven(baseline(), -1.0)
    with pytest.raises(NegativeTime):
        amplitudes_driven(baseline(), np.array([0.0, math.nan]))


def test_storage_boundary_and_freeze():
    p = baseline()
    at = amplitudes_driven(p, TBAR)
    s0 = amplitudes_stored(p, at, TBAR)
    assert np.array_equal(s0.as_array(), at.as_array())
    t = np.linspace(TBAR, 100, 500)
    s = amplitudes_stored(p, at, t)
    assert np.all(s.alpha == at.alpha)
    assert np.all(s.gamma == at.gamma)
    late = amplitudes_stored(p, at, TBAR + 20)
    assert abs(late.beta) ** 2 < 1e-6 and abs(late.delta) ** 2 < 1e-6


def test_storage_keeps_given_alpha():
    at = AmplitudeState(1.0, 0.5, 0.1j, -0.3, 0.05)
    s = amplitudes_stored(baseline(), at, np.array([2.0, 10.0]))
    assert np.all(s.alpha == 0.5)


def test_storage_matches_oracle():
    for p in (baseline(), random_params(np.random.default_rng(9))):
        at = amplitudes_driven(p, TBAR)
        for t in (TBAR + 0.1, 40.0, 90.0):
            got = amplitudes_stored(p, at, t).as_array()
            assert np.allclose(got, oracle_amplitudes(p, t, TBAR), rtol=0, atol=1e-12)


def test_storage_before_switch_off_rejected():
    p = baseline()
    with pytest.raises(TimeBeforeSwitchOff):
        amplitudes_stored(p, amplitudes_driven(p, TBAR), TBAR - 1)


def test_protocol_single_phase_equals_driven():
    p = baseline()
    t = np.linspace(0, 60, 61)
    assert np.array_equal(evolve_protocol(p, Schedule(), t).as_array(), amplitudes_driven(p, t).as_array())


def test_protocol_switch_off():
    p = baseline()
    s = evolve_protocol(p, Schedule(TBAR), 50.0)
    assert s.alpha == amplitudes_driven(p, TBAR).alpha
    left = evolve_protocol(p, Schedule(TBAR), TBAR).as_array()
    right = evolve_protocol(p, Schedule(TBAR), np.nextafter(TBAR, np.inf)).as_array()
    assert np.abs(left - right).max() < 1e-12


def test_schedule_rejects_bad_tbar():
    with pytest.raises(ValueError):
        Schedule(-1.0)
    with pytest.raises(ValueError):
        Schedule(math.inf)


def test_p_no():
    p = baseline()
    assert p_no(amplitudes_driven(p, 0.0)) == 1.0
    assert p_no(evolve_protocol(p, Schedule(TBAR), 100.0)) == pytest.approx(0.66, abs=0.01)
    s = amplitudes_driven(p, 12.0)
    assert s.loss_weight == pytest.approx(1 - p_no(s), abs=0)


def test_find_tbar_baseline():
    p = baseline()
    tbar = find_tbar(p, (0.0, 60.0))
    assert tbar == pytest.approx(TBAR, abs=0.05)
    s = amplitudes_driven(p, tbar)
    assert 2 * abs(s.alpha) * abs(s.gamma) == pytest.approx(0.66, abs=0.01)


@pytest.mark.parametrize("ratio, peak", [(1.0, 0.73), (0.9, 0.66), (0.8, 0.59)])
def test_find_tbar_kappa_sweep(ratio, peak):
    p = baseline(kappa_ratio=ratio)
    tbar = find_tbar(p)
    s = amplitudes_driven(p, tbar)
    assert 2 * abs(s.alpha) * abs(s.gamma) == pytest.approx(peak, abs=0.01)


def test_find_tbar_no_dynamics_returns_window_start():
    p = SystemParams.equal(SubsystemParams(0.0, 10.0, 1000.0, 1.0))
    assert find_tbar(p, (2.0, 10.0)) == 2.0


def test_find_tbar_empty_window():
    with pytest.raises(EmptyWindow):
        find_tbar(baseline(), (5.0, 5.0))
    with pytest.raises(EmptyWindow):
        find_tbar(baseline(), (-1.0, 5.0))


def test_singular_threshold_value():
    assert SINGULAR_TOL == 1e-9
