"""Numerical integration of the no-jump evolution and quantum-jump sampling.

The no-jump amplitudes obey ``dy/dt = M y`` with a constant 4x4 generator per
laser phase, so a classical RK4 step of size ``h`` is the fixed matrix
``T(hM) = I + hM + (hM)^2/2 + (hM)^3/6 + (hM)^4/24``.  :func:`integrate`
applies that matrix step by step; it serves as the independent oracle for the
closed forms in :mod:`cascade_sim.analytic`.

Jumps are sampled with the delay-function method: a trajectory draws ``r``
uniformly and jumps when the no-jump probability first drops to ``r``.  The
no-jump path is the same for every trajectory, so ensembles integrate it once
and only the crossing search is per trajectory.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analytic import AmplitudeState, Schedule
from .errors import StepTooLarge
from .params import SystemParams

DEFAULT_DT = 1e-3
DEFAULT_T_MAX = 100.0
#: Largest allowed ``dt * ||M||_2``.
STEP_BUDGET = 0.1

_BLOCK = 512
_BISECT_REL_TOL = 1e-10


class JumpChannel(enum.IntEnum):
    RADIATED = 0
    MIRROR_LOSS_A = 1
    MIRROR_LOSS_B = 2


@dataclass(frozen=True)
class GeneratorMatrix:
    matrix: np.ndarray
    laser_on: bool


@dataclass(frozen=True)
class TrajectoryRecord:
    jump_time: float | None
    channel: JumpChannel | None
    seed: int
    click: bool = False

    def __post_init__(self):
        if (self.jump_time is None) != (self.channel is None):
            raise ValueError("jump_time and channel must both be set or both be None")


@dataclass(frozen=True)
class JumpRates:
    radiated: float | np.ndarray
    loss_a: float | np.ndarray
    loss_b: float | np.ndarray

    @property
    def total(self):
        return self.radiated + self.loss_a + self.loss_b


def generator(params: SystemParams, laser_on: bool = True) -> GeneratorMatrix:
    """Generator of the no-jump amplitudes (alpha, beta, gamma, delta)."""
    da, db = params.derived_a, params.derived_b
    if not laser_on:
        da, db = da.laser_off(), db.laser_off()
    m = np.zeros((4, 4), dtype=complex)
    m[0, 0] = -1j * da.stark_laser
    m[0, 1] = -1j * da.g_bar
    m[1, 0] = -1j * da.g_bar
    m[1, 1] = -da.big_k / 2 - 1j * da.stark_cavity
    m[2, 2] = -1j * db.stark_laser
    m[2, 3] = -1j * db.g_bar
    m[3, 1] = -params.coupling * np.exp(1j * params.phi)
    m[3, 2] = -1j * db.g_bar
    m[3, 3] = -db.big_k / 2 - 1j * db.stark_cavity
    return GeneratorMatrix(m, laser_on)


def rk4_step_matrix(m: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 step for ``dy/dt = m y`` as a matrix acting on ``y``."""
    hm = h * m
    step = np.eye(len(m), dtype=complex)
    term = np.eye(len(m), dtype=complex)
    for k in range(1, 5):
        term = term @ hm / k
        step = step + term
    return step


def _rk4_step_batch(m: np.ndarray, h: np.ndarray) -> np.ndarray:
    """RK4 step matrices for many step sizes, shape ``(len(h), 4, 4)``."""
    powers = [np.eye(4, dtype=complex)]
    for k in range(1, 5):
        powers.append(powers[-1] @ m / k)
    coeffs = np.stack([h**k for k in range(5)], axis=-1)
    return np.einsum("nk,kij->nij", coeffs, np.array(powers))


def _propagate(step: np.ndarray, y0: np.ndarray, n: int) -> np.ndarray:
    """States after 1..n applications of ``step``, shape ``(4, n)``."""
    out = np.empty((4, n), dtype=complex)
    if n == 0:
        return out
    first = min(n, _BLOCK)
    y = y0
    for j in range(first):
        y = step @ y
        out[:, j] = y
    if n > first:
        # the block map P^B is applied to whole blocks of already-computed states
        jump = np.linalg.matrix_power(step, _BLOCK)
        for start in range(_BLOCK, n, _BLOCK):
            stop = min(start + _BLOCK, n)
            out[:, start:stop] = jump @ out[:, start - _BLOCK : stop - _BLOCK]
    return out


def time_grid(t_max: float, dt: float, tbar: float | None = None) -> np.ndarray:
    """Uniform grid ``k dt`` up to ``t_max``, with ``tbar`` and ``t_max`` inserted."""
    n = int(math.floor(t_max / dt + 1e-9))
    grid = dt * np.arange(n + 1)
    extra = [t_max] + ([tbar] if tbar is not None and tbar < t_max else [])
    grid = np.union1d(grid, extra)
    # drop points that only differ from a neighbour by rounding
    keep = np.concatenate([[True], np.diff(grid) > 1e-12 * max(1.0, t_max)])
    grid = grid[keep]
    grid[-1] = t_max
    if tbar is not None and tbar < t_max:
        grid[np.argmin(np.abs(grid - tbar))] = tbar
    return grid


def _check_step(m: np.ndarray, dt: float):
    norm = np.linalg.norm(m, 2)
    if dt * norm > STEP_BUDGET:
        raise StepTooLarge(f"dt * ||M|| = {dt * norm:.3g} exceeds {STEP_BUDGET}; reduce dt below {STEP_BUDGET / norm:.3g}")


def integrate(
    params: SystemParams,
    schedule: Schedule | None = None,
    t_max: float = DEFAULT_T_MAX,
    dt: float = DEFAULT_DT,
) -> AmplitudeState:
    """Fixed-step RK4 integration of the no-jump amplitudes from |a>.

    The step that contains the switch-off time is split there, so ``tbar`` is a
    grid point and each step uses a single generator.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    if not t_max >= 0:
        raise ValueError(f"t_max must be >= 0, got {t_max!r}")
    schedule = schedule or Schedule()
    tbar = schedule.tbar
    m_on = generator(params, True).matrix
    m_off = generator(params, False).matrix
    _check_step(m_on, dt)
    if tbar is not None and tbar < t_max:
        _check_step(m_off, dt)

    grid = time_grid(t_max, dt, tbar)
    on = grid <= tbar if tbar is not None else np.ones(grid.shape, dtype=bool)
    y = np.empty((4, grid.size), dtype=complex)
    y[:, 0] = (1, 0, 0, 0)

    steps = np.diff(grid)
    # a step belongs to the laser-off phase when it starts at or after tbar
    step_on = on[:-1] if tbar is None else grid[:-1] < tbar
    # maximal runs of steps with equal size and phase
    breaks = (step_on[1:] != step_on[:-1]) | (np.abs(np.diff(steps)) > 1e-9 * dt)
    bounds = np.concatenate([[0], np.flatnonzero(breaks) + 1, [steps.size]])
    for i, j in zip(bounds[:-1], bounds[1:]):
        if i == j:
            continue
        m = m_on if step_on[i] else m_off
        y[:, i + 1 : j + 1] = _propagate(rk4_step_matrix(m, steps[i]), y[:, i], j - i)
    return AmplitudeState.from_array(grid, y, laser_on=on)


def jump_rates(params: SystemParams, state: AmplitudeState) -> JumpRates:
    """Jump probability densities of the three unravelled channels."""
    beta, delta = np.asarray(state.beta), np.asarray(state.delta)
    field = math.sqrt(params.a.kappa) * beta + math.sqrt(params.b.kappa) * np.exp(-1j * params.phi) * delta
    rates = (
        np.abs(field) ** 2,
        params.a.kappa_loss * np.abs(beta) ** 2,
        params.b.kappa_loss * np.abs(delta) ** 2,
    )
    if np.ndim(rates[0]) == 0:
        rates = tuple(float(r) for r in rates)
    return JumpRates(*rates)


def spont_emission_bound(params: SystemParams, state: AmplitudeState):
    """Summed rate of the four spontaneous-emission jumps (diagnostic only).

    Each atom decays from the eliminated excited level, reached either from
    the upper ground state through the laser or from the lower one through
    the cavity photon; both paths feed the same final state and interfere.
    """
    laser = np.asarray(state.laser_on, dtype=float)
    a, b = params.a, params.b
    da, db = params.derived_a, params.derived_b
    amp_a = a.omega_rabi * laser * np.asarray(state.alpha) + a.g * np.asarray(state.beta)
    amp_b = b.omega_rabi * laser * np.asarray(state.gamma) + b.g * np.asarray(state.delta)
    rate = (da.gamma_eff + da.gamma_eff_prime) * np.abs(amp_a) ** 2 + (db.gamma_eff + db.gamma_eff_prime) * np.abs(amp_b) ** 2
    return float(rate) if np.ndim(rate) == 0 else rate


# -- Monte-Carlo unraveling ---------------------------------------------------


def trajectory_seed(master_seed: int, index: int) -> int:
    """Seed of trajectory ``index``; depends only on (master_seed, index)."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def _trajectory_uniforms(seed: int) -> np.ndarray:
    # (delay-function threshold, channel choice, detector choice)
    return np.random.default_rng(seed).random(3)


@dataclass(frozen=True)
class NoJumpPath:
    """Integrated no-jump path shared by all trajectories of a run."""

    params: SystemParams
    schedule: Schedule
    state: AmplitudeState
    m_on: np.ndarray
    m_off: np.ndarray

    @classmethod
    def build(cls, params, schedule=None, t_max=DEFAULT_T_MAX, dt=DEFAULT_DT) -> NoJumpPath:
        schedule = schedule or Schedule()
        state = integrate(params, schedule, t_max=t_max, dt=dt)
        return cls(params, schedule, state, generator(params, True).matrix, generator(params, False).matrix)

    @property
    def times(self) -> np.ndarray:
        return self.state.t

    @property
    def p_no(self) -> np.ndarray:
        return np.sum(np.abs(self.state.as_array()) ** 2, axis=0)

    def sample(self, thresholds: np.ndarray, channel_u: np.ndarray):
        """Jump times and channels for the given uniforms.

        Returns ``(times, channels)``; trajectories without a jump before the end
        of the path get ``nan`` and ``-1``.
        """
        thresholds = np.asarray(thresholds, dtype=float)
        p = self.p_no
        times = np.full(thresholds.shape, np.nan)
        channels = np.full(thresholds.shape, -1, dtype=int)
        # first grid index where p_no <= r (p_no is non-increasing)
        k = np.searchsorted(-p, -thresholds, side="left")
        jumped = np.flatnonzero(k < p.size)
        if jumped.size == 0:
            return times, channels
        k = k[jumped]
        r = thresholds[jumped]
        grid = self.times
        t0 = grid[k - 1]
        y0 = self.state.as_array()[:, k - 1].T
        width = grid[k] - t0
        step_on = grid[k - 1] < self.schedule.tbar if self.schedule.tbar is not None else np.ones(k.shape, bool)

        lo = np.zeros(k.shape)
        hi = width.copy()
        for _ in range(self._bisect_iterations()):
            mid = 0.5 * (lo + hi)
            y = self._substep(y0, mid, step_on)
            below = np.sum(np.abs(y) ** 2, axis=1) <= r
            hi = np.where(below, mid, hi)
            lo = np.where(below, lo, mid)
        y = self._substep(y0, hi, step_on)
        state = AmplitudeState.from_array(t0 + hi, y.T)
        rates = jump_rates(self.params, state)
        stacked = np.stack([rates.radiated, rates.loss_a, rates.loss_b], axis=1)
        cum = np.cumsum(stacked, axis=1)
        total = cum[:, -1:]
        total = np.where(total > 0, total, 1.0)
        choice = np.sum(cum / total <= channel_u[jumped, None], axis=1)
        times[jumped] = t0 + hi
        channels[jumped] = np.minimum(choice, 2)
        return times, channels

    def _bisect_iterations(self) -> int:
        # fixed by the grid alone so a trajectory's jump time never depends on its batch
        grid = self.times
        if grid.size < 2:
            return 1
        return max(1, int(math.ceil(math.log2(np.diff(grid).max() / (_BISECT_REL_TOL * grid[1]))))) + 1

    def _substep(self, y0, tau, step_on):
        y = np.empty_like(y0)
        for flag, m in ((True, self.m_on), (False, self.m_off)):
            sel = step_on == flag
            if np.any(sel):
                mats = _rk4_step_batch(m, tau[sel])
                y[sel] = np.einsum("nij,nj->ni", mats, y0[sel])
        return y


def simulate_trajectory(
    params: SystemParams,
    schedule: Schedule | None = None,
    seed: int = 0,
    t_max: float = DEFAULT_T_MAX,
    dt: float = DEFAULT_DT,
    eta: float = 0.0,
    path: NoJumpPath | None = None,
) -> TrajectoryRecord:
    """One realization: when (if at all) the excitation leaves, and where.

    A radiated jump registers as a detector click with probability ``eta``.
    """
    path = path or NoJumpPath.build(params, schedule, t_max, dt)
    r, u_ch, u_click = _trajectory_uniforms(seed)
    times, channels = path.sample(np.array([r]), np.array([u_ch]))
    if channels[0] < 0:
        return TrajectoryRecord(None, None, seed)
    channel = JumpChannel(int(channels[0]))
    click = channel is JumpChannel.RADIATED and u_click < eta
    return TrajectoryRecord(float(times[0]), channel, seed, bool(click))


@dataclass(frozen=True)
class EnsembleResult:
    """Per-trajectory outcomes of an ensemble, in trajectory-index order.

    ``channels`` holds :class:`JumpChannel` codes, or -1 when no jump occurred
    before ``t_max``; ``jump_times`` is ``nan`` for those trajectories.
    """

    seeds: np.ndarray
    jump_times: np.ndarray
    channels: np.ndarray
    clicks: np.ndarray
    master_seed: int
    t_max: float
    dt: float

    @property
    def n(self) -> int:
        return self.seeds.size

    def channel_counts(self) -> dict[JumpChannel, int]:
        return {c: int(np.count_nonzero(self.channels == c)) for c in JumpChannel}

    @property
    def n_jumped(self) -> int:
        return int(np.count_nonzero(self.channels >= 0))

    def survival(self, t) -> np.ndarray:
        """Fraction of trajectories without a jump up to each time in ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        jt = np.where(np.isnan(self.jump_times), np.inf, self.jump_times)
        return np.array([np.count_nonzero(jt > ti) for ti in t]) / self.n

    def record(self, i: int) -> TrajectoryRecord:
        if self.channels[i] < 0:
            return TrajectoryRecord(None, None, int(self.seeds[i]))
        return TrajectoryRecord(float(self.jump_times[i]), JumpChannel(int(self.channels[i])), int(self.seeds[i]), bool(self.clicks[i]))


def _run_chunk(path: NoJumpPath, master_seed: int, start: int, stop: int, eta: float):
    seeds = np.array([trajectory_seed(master_seed, i) for i in range(start, stop)], dtype=np.uint64)
    u = np.array([_trajectory_uniforms(int(s)) for s in seeds]).reshape(-1, 3)
    times, channels = path.sample(u[:, 0], u[:, 1])
    clicks = (channels == JumpChannel.RADIATED) & (u[:, 2] < eta)
    return seeds, times, channels, clicks


def _run_chunk_rebuild(args):
    params, schedule, t_max, dt, master_seed, start, stop, eta = args
    return _run_chunk(NoJumpPath.build(params, schedule, t_max, dt), master_seed, start, stop, eta)


def run_ensemble(
    params: SystemParams,
    schedule: Schedule | None = None,
    n: int = 10_000,
    seed: int = 0,
    t_max: float = DEFAULT_T_MAX,
    dt: float = DEFAULT_DT,
    eta: float = 0.0,
    workers: int = 1,
    chunk: int = 20_000,
) -> EnsembleResult:
    """Simulate ``n`` independent trajectories.

    Trajectory ``i`` is seeded from ``(seed, i)`` alone, so the result does not
    depend on ``workers`` or ``chunk``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n!r}")
    schedule = schedule or Schedule()
    bounds = [(s, min(s + chunk, n)) for s in range(0, n, chunk)]
    if workers > 1 and len(bounds) > 1:
        jobs = [(params, schedule, t_max, dt, seed, s, e, eta) for s, e in bounds]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk_rebuild, jobs))
    else:
        path = NoJumpPath.build(params, schedule, t_max, dt)
        parts = [_run_chunk(path, seed, s, e, eta) for s, e in bounds]
    seeds, times, channels, clicks = (np.concatenate(x) for x in zip(*parts))
    return EnsembleResult(seeds, times, channels, clicks, seed, t_max, dt)


@dataclass(frozen=True)
class EnsembleDensity:
    """Empirical two-history mixture at time ``t`` in the basis |a>..|e>.

    ``rho_no`` is the normalized no-jump state, ``rho_yes`` is |e><e|, and
    ``rho = p_no * rho_no + p_yes * rho_yes``.
    """

    t: float
    p_no: float
    p_yes: float
    rho_no: np.ndarray
    rho_yes: np.ndarray
    channel_counts: dict
    n: int

    @property
    def rho(self) -> np.ndarray:
        return self.p_no * self.rho_no + self.p_yes * self.rho_yes


def ensemble_density(
    params: SystemParams,
    schedule: Schedule | None = None,
    n: int = 10_000,
    seed: int = 0,
    t: float = DEFAULT_T_MAX,
    dt: float = DEFAULT_DT,
    workers: int = 1,
) -> EnsembleDensity:
    """Monte-Carlo estimate of the density operator at time ``t``."""
    result = run_ensemble(params, schedule, n=n, seed=seed, t_max=t, dt=dt, workers=workers)
    path_state = integrate(params, schedule, t_max=t, dt=dt).at(-1)
    psi = np.append(path_state.as_array(), 0.0)
    norm = float(np.vdot(psi, psi).real)
    rho_no = np.outer(psi, psi.conj()) / norm if norm > 0 else np.zeros((5, 5), complex)
    rho_yes = np.zeros((5, 5), dtype=complex)
    rho_yes[4, 4] = 1.0
    jumped = result.n_jumped
    return EnsembleDensity(
        t=float(t),
        p_no=(n - jumped) / n,
        p_yes=jumped / n,
        rho_no=rho_no,
        rho_yes=rho_yes,
        channel_counts=result.channel_counts(),
        n=n,
    )
