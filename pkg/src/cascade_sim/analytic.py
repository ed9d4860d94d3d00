"""Closed-form amplitudes of the no-jump state.

The unnormalized no-jump state is ``alpha|a> + beta|b> + gamma|c> + delta|d>``
with |a> = atom A excited, |b> = photon in cavity A, |c> = atom B excited and
|d> = photon in cavity B.  The source pair (alpha, beta) evolves on its own;
(gamma, delta) is driven by beta through the cascade coupling.

Every exponential that appears in the closed forms is evaluated through the
first divided difference ``(exp(a t) - exp(b t)) / (a - b)`` of two decay
exponents with non-positive real part.  This is algebraically identical to
the products ``f(t) * g(t)`` and ``f(t) * h(t)`` of the textbook solution but
never overflows and stays accurate when ``a`` and ``b`` nearly coincide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import EmptyWindow, NegativeTime, TimeBeforeSwitchOff
from .params import DerivedParams, SystemParams

#: Magnitude below which a denominator is treated as a removable singularity.
SINGULAR_TOL = 1e-9

# |x t| below which divided differences switch to their Taylor series
_SERIES_CUTOFF = 0.05
_SERIES_ORDER = 9


@dataclass(frozen=True)
class AmplitudeState:
    """Amplitudes at time ``t``; every field may also be a 1-D array over times."""

    t: float | np.ndarray
    alpha: complex | np.ndarray
    beta: complex | np.ndarray
    gamma: complex | np.ndarray
    delta: complex | np.ndarray
    laser_on: bool | np.ndarray = True

    @property
    def populations(self) -> np.ndarray:
        """``|alpha|^2, |beta|^2, |gamma|^2, |delta|^2`` stacked on axis 0."""
        return np.abs(self.as_array()) ** 2

    @property
    def loss_weight(self):
        """``|epsilon|^2 = 1 - p_no``, the weight of the collapsed state |e>."""
        return 1.0 - p_no(self)

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma, self.delta], dtype=complex)

    def __len__(self):
        return np.size(self.t)

    def at(self, i: int) -> AmplitudeState:
        """Scalar state at index ``i`` of a time series."""
        return AmplitudeState(
            t=float(np.asarray(self.t)[i]),
            alpha=complex(np.asarray(self.alpha)[i]),
            beta=complex(np.asarray(self.beta)[i]),
            gamma=complex(np.asarray(self.gamma)[i]),
            delta=complex(np.asarray(self.delta)[i]),
            laser_on=bool(np.broadcast_to(self.laser_on, np.shape(self.t))[i]),
        )

    @classmethod
    def from_array(cls, t, y, laser_on=True) -> AmplitudeState:
        y = np.asarray(y, dtype=complex)
        return cls(t, y[0], y[1], y[2], y[3], laser_on)


@dataclass(frozen=True)
class Schedule:
    """Laser schedule: on from t = 0, off from ``tbar`` (never if ``None``)."""

    tbar: float | None = None

    def __post_init__(self):
        if self.tbar is not None and not (self.tbar >= 0 and math.isfinite(self.tbar)):
            raise ValueError(f"tbar must be a finite time >= 0, got {self.tbar!r}")


@dataclass(frozen=True)
class ClosedFormIntermediates:
    lambda_a: complex
    lambda_b: complex
    upsilon: complex
    theta: float
    f_plus: complex
    f_minus: complex
    g_plus: complex
    g_minus: complex
    h_plus: complex
    h_minus: complex


def lambda_k(derived: DerivedParams) -> complex:
    """Principal square root of the characteristic radicand of one subsystem."""
    x = derived.big_k + 2j * derived.stark_cavity
    dp = derived.stark_laser
    radicand = x * x / 4 - 4 * derived.g_bar**2 - 1j * x * dp - dp * dp
    return complex(np.sqrt(complex(radicand)))


def _decay_exponent(derived: DerivedParams) -> complex:
    # common exponent -[(K + 2i Dbar)/4 + i D'/2] of both eigenmodes
    return -(derived.big_k + 2j * derived.stark_cavity) / 4 - 0.5j * derived.stark_laser


def _exp_divdiff(a: complex, b: complex, t):
    """``(exp(a t) - exp(b t)) / (a - b)``, with its limit ``t exp(b t)`` at a = b."""
    t = np.asarray(t, dtype=float)
    x = a - b
    xt = x * t
    small = np.abs(xt) < _SERIES_CUTOFF
    out = np.empty(np.shape(t), dtype=complex)
    if np.any(small):
        z = xt[small] if xt.ndim else xt
        ts = t[small] if t.ndim else t
        series = np.zeros_like(z, dtype=complex)
        for k in range(_SERIES_ORDER, -1, -1):
            series = series * z / (k + 2) + 1.0
        out[small] = ts * np.exp(b * ts) * series
    big = ~small
    if np.any(big):
        tb = t[big] if t.ndim else t
        out[big] = (np.exp(a * tb) - np.exp(b * tb)) / x
    return out if out.ndim else complex(out)


def _exp_divdiff_nodes(nodes, t) -> np.ndarray:
    """Divided differences ``exp[z0..zk]`` of ``z -> exp(z t)`` for k = 0..n-1.

    Uses the exponential of the bidiagonal matrix built from the nodes, which
    is well defined for confluent nodes.  Returns shape ``(len(nodes),) + t.shape``.
    """
    n = len(nodes)
    z = np.diag(np.asarray(nodes, dtype=complex)) + np.diag(np.ones(n - 1), 1)
    t = np.asarray(t, dtype=float)
    mats = expm(t.reshape(-1, 1, 1) * z)
    return mats[:, 0, :].T.reshape((n,) + t.shape)


def _source_exponents(d: DerivedParams, lam: complex):
    s = _decay_exponent(d)
    return s + lam / 2, s - lam / 2


def _alpha_beta(d: DerivedParams, t, lam: complex | None = None):
    if lam is None:
        lam = lambda_k(d)
    nu_p, nu_m = _source_exponents(d, lam)
    diff = _exp_divdiff(nu_p, nu_m, t)
    w = (d.big_k + 2j * d.stark_cavity) / 2 - 1j * d.stark_laser
    alpha = 0.5 * w * diff + 0.5 * (np.exp(nu_p * np.asarray(t)) + np.exp(nu_m * np.asarray(t)))
    beta = -1j * d.g_bar * diff
    return alpha, beta


def _target_prefactor(db: DerivedParams) -> complex:
    return (db.big_k + 2j * db.stark_cavity) / 4 - 0.5j * db.stark_laser


def _upsilon_theta(da: DerivedParams, db: DerivedParams):
    upsilon = (da.big_k - db.big_k + 2j * da.stark_cavity - 2j * db.stark_cavity) / 4
    theta = (da.stark_laser - db.stark_laser) / 2
    return upsilon, theta


def _denominators(params: SystemParams):
    da, db = params.derived_a, params.derived_b
    la, lb = lambda_k(da), lambda_k(db)
    ups, th = _upsilon_theta(da, db)
    g_den = [(la + s * lb) / 2 - ups - 1j * th for s in (1, -1)]
    h_den = [(la + s * lb) / 2 + ups + 1j * th for s in (1, -1)]
    return la, lb, g_den, h_den


def _is_equal_pair(params: SystemParams) -> bool:
    da, db = params.derived_a, params.derived_b
    diffs = (
        params.a.kappa - params.b.kappa,
        da.big_k - db.big_k,
        da.g_bar - db.g_bar,
        da.stark_cavity - db.stark_cavity,
        da.stark_laser - db.stark_laser,
    )
    return all(abs(x) < SINGULAR_TOL for x in diffs)


def _gamma_delta_general(params: SystemParams, t):
    da, db = params.derived_a, params.derived_b
    la, lb = lambda_k(da), lambda_k(db)
    nu_p, nu_m = _source_exponents(da, la)
    mu_p, mu_m = _source_exponents(db, lb)
    c = da.g_bar * params.coupling * np.exp(1j * params.phi) / (la * lb)
    # f_+ (g_- + h_+) and f_- (g_+ + h_-) in combined-exponent form
    fp_sum = c * (_exp_divdiff(nu_p, mu_p, t) - _exp_divdiff(nu_m, mu_p, t))
    fm_sum = c * (_exp_divdiff(nu_p, mu_m, t) - _exp_divdiff(nu_m, mu_m, t))
    gamma = db.g_bar * (fp_sum - fm_sum)
    pre = _target_prefactor(db)
    delta = 1j * (pre + lb / 2) * fm_sum - 1j * (pre - lb / 2) * fp_sum
    return gamma, delta


def _poly_tail(z, sign):
    """``exp(sign z) - sign z - 1`` for small ``z`` via its series."""
    z = sign * z
    acc = np.zeros_like(z, dtype=complex)
    for k in range(_SERIES_ORDER + 2, 1, -1):
        acc = (acc + 1.0) * z / k
    return acc * z


def _gamma_delta_equal(params: SystemParams, t):
    d = params.derived_a
    lam = lambda_k(d)
    s = _decay_exponent(d)
    t = np.asarray(t, dtype=float)
    z = lam * t
    e_p = np.exp((s + lam / 2) * t)
    e_m = np.exp((s - lam / 2) * t)
    small = np.abs(z) < _SERIES_CUTOFF
    with np.errstate(all="ignore"):
        # (e^{-z} + z - 1) e^{(s + L/2) t} and (e^{z} - z - 1) e^{(s - L/2) t}
        tail_minus = np.where(small, _poly_tail(z, -1) * e_p, e_m + (z - 1) * e_p)
        tail_plus = np.where(small, _poly_tail(z, 1) * e_m, e_p - (z + 1) * e_m)
    ph = np.exp(1j * params.phi)
    kappa = params.coupling
    gamma = kappa * d.g_bar * params.derived_b.g_bar * ph / lam**3 * (tail_minus - tail_plus)
    pre = _target_prefactor(d)
    delta = 1j * kappa * d.g_bar * ph / lam**3 * ((pre + lam / 2) * tail_plus - (pre - lam / 2) * tail_minus)
    return gamma, delta


def _gamma_delta_limit(params: SystemParams, t):
    """Removable-singularity form via divided differences on the four exponents."""
    da, db = params.derived_a, params.derived_b
    nu_p, nu_m = _source_exponents(da, lambda_k(da))
    mu_p, mu_m = _source_exponents(db, lambda_k(db))
    plus = _exp_divdiff_nodes([nu_p, nu_m, mu_p, mu_m], t)
    minus = _exp_divdiff_nodes([nu_p, nu_m, mu_m], t)
    third, second_p, second_m = plus[3], plus[2], minus[2]
    c = da.g_bar * params.coupling * np.exp(1j * params.phi)
    gamma = db.g_bar * c * third
    delta = 1j * c * (0.5 * (second_p + second_m) - _target_prefactor(db) * third)
    if np.ndim(t) == 0:
        return complex(gamma), complex(delta)
    return gamma, delta


def formula_family(params: SystemParams) -> str:
    """Which closed form :func:`amplitudes_driven` uses: general, equal or limit."""
    la, lb, g_den, h_den = _denominators(params)
    if _is_equal_pair(params) and abs(la) >= SINGULAR_TOL:
        return "equal"
    if min(abs(x) for x in (la, lb, *g_den, *h_den)) < SINGULAR_TOL:
        return "limit"
    return "general"


def _check_times(t):
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise NegativeTime(f"times must be finite and >= 0, got {t!r}")
    return arr


def amplitudes_driven(params: SystemParams, t) -> AmplitudeState:
    """Closed-form amplitudes with both lasers on, starting from |a>."""
    arr = _check_times(t)
    alpha, beta = _alpha_beta(params.derived_a, arr)
    family = formula_family(params)
    if family == "equal":
        gamma, delta = _gamma_delta_equal(params, arr)
    elif family == "limit":
        gamma, delta = _gamma_delta_limit(params, arr)
    else:
        gamma, delta = _gamma_delta_general(params, arr)
    if arr.ndim == 0:
        return AmplitudeState(float(arr), complex(alpha), complex(beta), complex(gamma), complex(delta), True)
    return AmplitudeState(arr, alpha, beta, gamma, delta, True)


def closed_form_intermediates(params: SystemParams, t: float) -> ClosedFormIntermediates:
    """The helper quantities of the general solution, evaluated literally.

    Intended for inspection; the factors ``g`` and ``h`` overflow for large
    ``t`` even though their products with ``f`` stay bounded.
    """
    da, db = params.derived_a, params.derived_b
    la, lb, g_den, h_den = _denominators(params)
    ups, th = _upsilon_theta(da, db)
    c = da.g_bar * params.coupling * np.exp(1j * params.phi) / (la * lb)
    s_b = _decay_exponent(db)
    with np.errstate(all="ignore"):
        f_p, f_m = (c * np.exp((s_b + sign * lb / 2) * t) for sign in (1, -1))
        g_p, g_m = ((np.exp(x * t) - 1) / x for x in g_den)
        h_p, h_m = ((np.exp(-x * t) - 1) / x for x in h_den)
    return ClosedFormIntermediates(la, lb, ups, th, f_p, f_m, g_p, g_m, h_p, h_m)


def amplitudes_stored(params: SystemParams, at_tbar: AmplitudeState, t) -> AmplitudeState:
    """Amplitudes after both lasers were switched off at ``at_tbar.t``.

    The atomic amplitudes freeze; the cavity amplitudes decay, with cavity B
    still fed by cavity A.
    """
    tbar = float(at_tbar.t)
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < tbar):
        raise TimeBeforeSwitchOff(f"t must be >= tbar = {tbar}, got {t!r}")
    tau = arr - tbar
    da, db = params.derived_a, params.derived_b
    m_a = -(da.big_k / 2 + 1j * da.stark_cavity)
    m_b = -(db.big_k / 2 + 1j * db.stark_cavity)
    b0, d0 = complex(at_tbar.beta), complex(at_tbar.delta)
    beta = b0 * np.exp(m_a * tau)
    delta = d0 * np.exp(m_b * tau) - params.coupling * np.exp(1j * params.phi) * b0 * _exp_divdiff(m_a, m_b, tau)
    alpha = np.full(arr.shape, complex(at_tbar.alpha))
    gamma = np.full(arr.shape, complex(at_tbar.gamma))
    if arr.ndim == 0:
        return AmplitudeState(float(arr), complex(alpha), complex(beta), complex(gamma), complex(delta), False)
    return AmplitudeState(arr, alpha, beta, gamma, delta, np.zeros(arr.shape, dtype=bool))


def evolve_protocol(params: SystemParams, schedule: Schedule, t) -> AmplitudeState:
    """Driven evolution up to ``schedule.tbar`` and storage afterwards."""
    arr = _check_times(t)
    if schedule.tbar is None or np.all(arr <= schedule.tbar):
        return amplitudes_driven(params, arr)
    at_tbar = amplitudes_driven(params, schedule.tbar)
    if arr.ndim == 0:
        return amplitudes_stored(params, at_tbar, arr)
    on = arr <= schedule.tbar
    y = np.empty((4, arr.size), dtype=complex)
    if np.any(on):
        y[:, on] = amplitudes_driven(params, arr[on]).as_array()
    y[:, ~on] = amplitudes_stored(params, at_tbar, arr[~on]).as_array()
    return AmplitudeState.from_array(arr, y, laser_on=on)


def p_no(state: AmplitudeState):
    """No-jump probability, the squared norm of the unnormalized state."""
    total = np.sum(np.abs(state.as_array()) ** 2, axis=0)
    clipped = np.clip(total, 0.0, 1.0)
    return float(clipped) if np.ndim(clipped) == 0 else clipped


def atom_concurrence_curve(params: SystemParams, t) -> np.ndarray:
    """``2 |alpha(t)| |gamma(t)|`` along the driven evolution."""
    s = amplitudes_driven(params, t)
    return np.minimum(2.0 * np.abs(s.alpha) * np.abs(s.gamma), 1.0)


def find_tbar(params: SystemParams, window=(0.0, 60.0), step: float = 0.01) -> float:
    """Time of maximal atom-atom concurrence under continuous driving.

    Scans ``window`` on a uniform grid and refines the best grid point with a
    parabola through its neighbours.  Ties resolve to the left-most point.
    """
    t_lo, t_hi = map(float, window)
    if not (t_hi > t_lo >= 0):
        raise EmptyWindow(f"need t_hi > t_lo >= 0, got {window!r}")
    n = int(math.floor((t_hi - t_lo) / step + 1e-9))
    grid = t_lo + step * np.arange(n + 1)
    if grid[-1] < t_hi:
        grid = np.append(grid, t_hi)
    c = atom_concurrence_curve(params, grid)
    i = int(np.argmax(c))
    if 0 < i < len(grid) - 1:
        left, mid, right = c[i - 1], c[i], c[i + 1]
        curvature = left - 2 * mid + right
        if curvature < 0:
            h = min(grid[i] - grid[i - 1], grid[i + 1] - grid[i])
            offset = 0.5 * (left - right) / curvature
            return float(grid[i] + np.clip(offset, -0.5, 0.5) * h)
    return float(grid[i])
