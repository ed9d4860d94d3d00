"""Independent references shared by the test modules.

The amplitude oracle exponentiates the generator written out here from the
equations of motion, so it shares no code with the closed forms or with the
integrator under test.
"""

import math

import numpy as np
from scipy.linalg import expm

from cascade_sim.params import SubsystemParams, SystemParams


def generator_matrix(params: SystemParams, laser_on: bool = True) -> np.ndarray:
    rows = []
    for sub in (params.a, params.b):
        g_bar = -sub.g * sub.omega_rabi / sub.detuning if laser_on else 0.0
        shift_laser = -sub.omega_rabi**2 / sub.detuning if laser_on else 0.0
        shift_cav = -sub.g**2 / sub.detuning
        k = sub.kappa + sub.kappa_loss
        rows.append((g_bar, shift_laser, shift_cav, k))
    (ga, la, ca, ka), (gb, lb, cb, kb) = rows
    m = np.array(
        [
            [-1j * la, -1j * ga, 0, 0],
            [-1j * ga, -ka / 2 - 1j * ca, 0, 0],
            [0, 0, -1j * lb, -1j * gb],
            [0, -math.sqrt(params.a.kappa * params.b.kappa) * np.exp(1j * params.phi), -1j * gb, -kb / 2 - 1j * cb],
        ],
        dtype=complex,
    )
    return m


def oracle_amplitudes(params: SystemParams, t: float, tbar: float | None = None) -> np.ndarray:
    """(alpha, beta, gamma, delta) at ``t`` from matrix exponentials."""
    y0 = np.array([1, 0, 0, 0], dtype=complex)
    if tbar is None or t <= tbar:
        return expm(generator_matrix(params, True) * t) @ y0
    y_bar = expm(generator_matrix(params, True) * tbar) @ y0
    return expm(generator_matrix(params, False) * (t - tbar)) @ y_bar


def random_params(rng: np.random.Generator) -> SystemParams:
    """Raw parameters whose derived constants span rates in [0, 2] and |g_bar| <= 0.5."""

    def sub():
        detuning = rng.uniform(200.0, 1000.0)
        g_bar = rng.uniform(-0.5, 0.5)
        # split g * omega = -g_bar * detuning between g and omega with a random ratio
        scale = math.sqrt(abs(g_bar) * detuning) * rng.uniform(0.5, 2.0)
        g = scale * rng.choice([-1.0, 1.0])
        omega = -g_bar * detuning / g
        kappa = rng.uniform(0.0, 2.0)
        kappa_loss = rng.uniform(0.0, 2.0)
        if kappa + kappa_loss < 1e-3:
            kappa_loss = 1e-3
        return SubsystemParams(g, omega, detuning, kappa, kappa_loss)

    return SystemParams(sub(), sub(), phi=rng.uniform(0.0, 2 * math.pi))


def random_amplitudes(rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` random sub-normalized amplitude vectors, shape ``(n, 4)``."""
    z = rng.normal(size=(n, 4)) + 1j * rng.normal(size=(n, 4))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z * np.sqrt(rng.uniform(0.0, 1.0, size=(n, 1)))


def wilson_interval(k: int, n: int, z: float) -> tuple[float, float]:
    p = k / n
    denom = 1 + z**2 / n
    centre = (p + z**2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    return centre - half, centre + half
