"""Where the excitation went, and what a leaky photodetector tells us.

The photon leaves either through the interfering output of the two cavities
(``p_rad``) or through mirror absorption/scattering (``p_abs``).  A detector of
efficiency ``eta`` watches the radiated field only; conditioning on "no click"
re-weights the surviving coherent part and raises the atom-atom concurrence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dynamics
from .analytic import AmplitudeState, Schedule, evolve_protocol, p_no
from .dynamics import JumpChannel
from .errors import ZeroNullClickProbability, ZeroSurvivalProbability
from .params import SystemParams

QUADRATURE_DT = 1e-3


@dataclass(frozen=True)
class ChannelProbabilities:
    t: float
    p_no: float
    p_rad: float
    p_abs: float
    p_yes: float
    eta: float
    p0: float

    @property
    def enhancement(self) -> float:
        """Relative gain ``1/p0 - 1`` of the conditional over the unconditional concurrence."""
        return 1.0 / self.p0 - 1.0


@dataclass(frozen=True)
class ConditionalState:
    """State given no detector click: weights of the two histories and the atom reduction."""

    weight_no: float
    weight_e: float
    rho_at_given_0: np.ndarray


@dataclass(frozen=True)
class RecordStatistics:
    """Counts of the four photon-counting records of a run.

    ``click`` means the radiated photon passed the beam splitter that models
    the detector efficiency and was counted; ``reflected`` is a radiated photon
    that was lost at the splitter; ``loss`` is mirror absorption or scattering.
    """

    n_no_jump: int
    n_click: int
    n_reflected: int
    n_loss: int
    eta: float
    seed: int

    @property
    def n(self) -> int:
        return self.n_no_jump + self.n_click + self.n_reflected + self.n_loss

    @property
    def p0(self) -> float:
        return 1.0 - self.n_click / self.n

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "n_no_jump": self.n_no_jump,
            "n_click": self.n_click,
            "n_reflected": self.n_reflected,
            "n_loss": self.n_loss,
            "p0_empirical": self.p0,
            "eta": self.eta,
            "seed": self.seed,
        }


def _integrands(params: SystemParams, state: AmplitudeState):
    beta, delta = state.beta, state.delta
    ka, kb = params.a.kappa, params.b.kappa
    b2, d2 = np.abs(beta) ** 2, np.abs(delta) ** 2
    rad = ka * b2 + kb * d2 + 2 * math.sqrt(ka * kb) * np.real(np.conj(beta) * delta * np.exp(-1j * params.phi))
    lost = params.a.kappa_loss * b2 + params.b.kappa_loss * d2
    return rad, lost


def _simpson_weights(n: int) -> np.ndarray:
    w = np.ones(n + 1)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return w / 3


def cumulative_channel_integrals(params: SystemParams, schedule: Schedule, times, dt: float = QUADRATURE_DT):
    """``p_rad`` and ``p_abs`` at each of the (sorted) ``times``.

    Composite Simpson on every interval between consecutive output times, with
    the switch-off time inserted as an extra break so no panel straddles the
    kink of the integrand.  Each interval uses an even number of panels of
    width at most ``dt``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(np.diff(times) < 0) or np.any(times < 0):
        raise ValueError("times must be sorted and >= 0")
    breaks = np.union1d([0.0], times)
    tbar = schedule.tbar
    if tbar is not None and 0 < tbar < breaks[-1]:
        breaks = np.union1d(breaks, [tbar])

    nodes, weights, seg_index = [], [], []
    for i, (lo, hi) in enumerate(zip(breaks[:-1], breaks[1:])):
        n = max(2, 2 * math.ceil((hi - lo) / (2 * dt) - 1e-9))
        h = (hi - lo) / n
        nodes.append(np.linspace(lo, hi, n + 1))
        weights.append(_simpson_weights(n) * h)
        seg_index.append(np.full(n + 1, i))
    if not nodes:
        zero = np.zeros(times.shape)
        return zero, zero.copy()
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    seg_index = np.concatenate(seg_index)

    rad, lost = _integrands(params, evolve_protocol(params, schedule, nodes))
    n_seg = breaks.size - 1
    seg_rad = np.bincount(seg_index, weights=weights * rad, minlength=n_seg)
    seg_abs = np.bincount(seg_index, weights=weights * lost, minlength=n_seg)
    cum_rad = np.concatenate([[0.0], np.cumsum(seg_rad)])
    cum_abs = np.concatenate([[0.0], np.cumsum(seg_abs)])
    idx = np.searchsorted(breaks, times)
    return cum_rad[idx], cum_abs[idx]


def channel_probabilities(
    params: SystemParams,
    schedule: Schedule | None = None,
    t: float = 100.0,
    eta: float = 0.0,
    dt: float = QUADRATURE_DT,
) -> ChannelProbabilities:
    """Decay-channel bookkeeping and the null-click probability at time ``t``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta!r}")
    if not t >= 0:
        raise ValueError(f"t must be >= 0, got {t!r}")
    schedule = schedule or Schedule()
    rad, lost = cumulative_channel_integrals(params, schedule, [t], dt)
    survive = p_no(evolve_protocol(params, schedule, t))
    p_rad, p_abs = float(rad[0]), float(lost[0])
    return ChannelProbabilities(
        t=float(t),
        p_no=survive,
        p_rad=p_rad,
        p_abs=p_abs,
        p_yes=1.0 - survive,
        eta=eta,
        p0=1.0 - eta * p_rad,
    )


def rho_atoms_given_no_loss(state: AmplitudeState) -> np.ndarray:
    """Atomic state conditioned on the excitation not having left yet."""
    amps = state.as_array()
    norm = float(np.sum(np.abs(amps) ** 2))
    if norm <= 0:
        raise ZeroSurvivalProbability("no-jump probability is zero")
    alpha, beta, gamma, delta = amps
    rho = np.zeros((4, 4), dtype=complex)
    rho[2, 2] = abs(alpha) ** 2
    rho[1, 1] = abs(gamma) ** 2
    rho[2, 1] = alpha * np.conj(gamma)
    rho[1, 2] = np.conj(alpha) * gamma
    rho[0, 0] = abs(beta) ** 2 + abs(delta) ** 2
    return rho / norm


def conditional_state(state: AmplitudeState, probs: ChannelProbabilities) -> ConditionalState:
    """Mixture of the no-jump state and |e> given that the detector stayed silent.

    The weights are normalized by their sum, which equals ``p0`` up to the
    quadrature error of ``p_rad`` and ``p_abs``.
    """
    if probs.p0 <= 0:
        raise ZeroNullClickProbability("null-click probability is zero")
    survive = float(np.sum(np.abs(state.as_array()) ** 2))
    lost = (1.0 - probs.eta) * probs.p_rad + probs.p_abs
    total = survive + lost
    w_no, w_e = survive / total, lost / total
    rho = np.zeros((4, 4), dtype=complex)
    if survive > 0:
        rho += w_no * rho_atoms_given_no_loss(state)
    rho[0, 0] += w_e
    return ConditionalState(w_no, w_e, rho)


def concurrence_conditional(state: AmplitudeState, probs: ChannelProbabilities) -> float:
    """Atom-atom concurrence given no click: the unconditional one divided by ``p0``."""
    if probs.p0 <= 0:
        raise ZeroNullClickProbability("null-click probability is zero")
    return float(min(2.0 * abs(state.alpha) * abs(state.gamma) / probs.p0, 1.0))


def simulate_records(
    params: SystemParams,
    schedule: Schedule | None = None,
    eta: float = 0.0,
    n: int = 10_000,
    seed: int = 0,
    t_max: float = dynamics.DEFAULT_T_MAX,
    dt: float = dynamics.DEFAULT_DT,
    workers: int = 1,
) -> RecordStatistics:
    """Monte-Carlo photon-counting records with a detector of efficiency ``eta``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta!r}")
    result = dynamics.run_ensemble(params, schedule, n=n, seed=seed, t_max=t_max, dt=dt, eta=eta, workers=workers)
    return records_from_ensemble(result, eta)


def records_from_ensemble(result: dynamics.EnsembleResult, eta: float) -> RecordStatistics:
    """Tally an ensemble already run with detector efficiency ``eta``."""
    radiated = result.channels == JumpChannel.RADIATED
    return RecordStatistics(
        n_no_jump=int(np.count_nonzero(result.channels < 0)),
        n_click=int(np.count_nonzero(result.clicks)),
        n_reflected=int(np.count_nonzero(radiated & ~result.clicks)),
        n_loss=int(np.count_nonzero(result.channels > JumpChannel.RADIATED)),
        eta=eta,
        seed=result.master_seed,
    )
