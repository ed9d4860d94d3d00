import math

import numpy as np
import pytest
from _oracles import random_amplitudes, random_params
from hypothesis import given, settings
from hypothesis import strategies as st

from cascade_sim.analytic import AmplitudeState, Schedule, amplitudes_driven, evolve_protocol
from cascade_sim.entanglement import (
    check_density,
    concurrence,
    concurrence_atoms_closed,
    concurrence_cavities_closed,
    concurrence_from_spectrum,
    rho_atoms,
    rho_cavities,
)
from cascade_sim.errors import NotADensityMatrix
from cascade_sim.params import baseline

TBAR = 28.32
BELL = np.zeros((4, 4), dtype=complex)
BELL[1:3, 1:3] = 0.5


def _state(amps):
    return AmplitudeState(0.0, *amps)


def _random_mixed(rng, rank=4):
    w = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = w @ w.conj().T
    return rho / np.trace(rho).real


def test_atom_excited_is_pure_product():
    rho = rho_atoms(_state((1, 0, 0, 0)))
    expected = np.zeros((4, 4))
    expected[2, 2] = 1
    assert np.array_equal(rho, expected)


def test_symmetric_atoms_give_bell_state():
    s = 1 / math.sqrt(2)
    rho = rho_atoms(_state((s, 0, s, 0)))
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-15)
    assert concurrence(rho) == pytest.approx(1.0, abs=1e-15)


def test_cavity_state():
    rho = rho_cavities(_state((0, 1, 0, 0)))
    assert rho[2, 2] == 1 and rho[0, 0] == 0
    assert rho_cavities(amplitudes_driven(baseline(), 0.0))[0, 0] == 1


def test_baseline_reduced_states_at_peak():
    s = amplitudes_driven(baseline(), TBAR)
    diag = np.diag(rho_atoms(s)).real
    assert diag == pytest.approx([0.34, 0.33, 0.33, 0.0], abs=0.01)
    assert rho_cavities(s)[0, 0].real == pytest.approx(0.98, abs=0.01)
    assert concurrence(rho_atoms(s)) == pytest.approx(0.66, abs=0.01)


def test_bell_and_product():
    assert concurrence(BELL) == pytest.approx(1.0, abs=1e-15)
    vac = np.zeros((4, 4))
    vac[0, 0] = 1
    assert concurrence(vac) == 0.0
    assert concurrence(np.eye(4) / 4) == 0.0


def test_reduced_states_are_valid():
    rng = np.random.default_rng(1)
    for amps in random_amplitudes(rng, 200):
        for rho in (rho_atoms(_state(amps)), rho_cavities(_state(amps))):
            check_density(rho)
            assert np.allclose(rho, rho.conj().T, atol=1e-12)


def test_closed_forms_match_general_routine():
    rng = np.random.default_rng(7)
    for amps in random_amplitudes(rng, 1000):
        s = _state(amps)
        assert abs(concurrence(rho_atoms(s)) - concurrence_atoms_closed(s)) < 1e-10
        assert abs(concurrence(rho_cavities(s)) - concurrence_cavities_closed(s)) < 1e-10


def test_closed_form_special_cases():
    s = 1 / math.sqrt(2)
    assert concurrence_atoms_closed(_state((s, 0, s, 0))) == pytest.approx(1.0)
    assert concurrence_atoms_closed(_state((1, 0, 0, 0))) == 0.0
    assert concurrence_cavities_closed(_state((0.5, 0, 0.5, 0))) == 0.0


def test_spectrum_route_agrees_on_mixed_states():
    rng = np.random.default_rng(3)
    for _ in range(200):
        rho = _random_mixed(rng, rank=rng.integers(1, 5))
        assert concurrence(rho) == pytest.approx(concurrence_from_spectrum(rho), abs=1e-7)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_concurrence_bounded(seed):
    rng = np.random.default_rng(seed)
    c = concurrence(_random_mixed(rng, rank=int(rng.integers(1, 5))))
    assert 0.0 <= c <= 1.0


def test_local_unitary_invariance():
    rng = np.random.default_rng(5)
    rho = _random_mixed(rng, 2)
    q, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    r, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    u = np.kron(q, r)
    assert concurrence(u @ rho @ u.conj().T) == pytest.approx(concurrence(rho), abs=1e-12)


@pytest.mark.parametrize(
    "rho",
    [
        np.eye(3),
        np.diag([0.5, 0.5, 0.5, -0.5]),
        np.array([[0.5, 0.4], [0.0, 0.5]]),
        np.triu(np.full((4, 4), 0.25)),
        np.full((4, 4), np.nan),
    ],
)
def test_invalid_density_rejected(rho):
    with pytest.raises(NotADensityMatrix):
        concurrence(rho)


def test_phase_invariance():
    p = random_params(np.random.default_rng(6))
    t = np.linspace(0, 40, 41)
    ref = amplitudes_driven(p, t)
    for phi in (0.0, math.pi / 3, math.pi, 1.7 * math.pi):
        s = amplitudes_driven(p.with_phi(phi), t)
        assert np.allclose(concurrence_atoms_closed(s), concurrence_atoms_closed(ref), atol=1e-12)
        assert np.allclose(concurrence_cavities_closed(s), concurrence_cavities_closed(ref), atol=1e-12)


def test_storage_constancy_and_cavity_decay():
    p = baseline()
    t = np.linspace(TBAR, 100, 400)
    s = evolve_protocol(p, Schedule(TBAR), t)
    c_at = concurrence_atoms_closed(s)
    at = amplitudes_driven(p, TBAR)
    assert np.all(c_at == 2 * abs(at.alpha) * abs(at.gamma))
    c_cav = concurrence_cavities_closed(s)
    assert c_cav[-1] < 1e-6
    assert c_cav[-1] < c_cav[50] < c_cav[0]


def test_peak_ordering_in_kappa():
    peaks = [concurrence_atoms_closed(amplitudes_driven(baseline(r), TBAR)) for r in (0.8, 0.9, 1.0)]
    assert peaks[0] < peaks[1] < peaks[2]
