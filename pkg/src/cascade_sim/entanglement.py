"""Two-qubit reduced states and their concurrence.

Matrices use the ordered basis ``|0,0>, |0,1>, |1,0>, |1,1>`` where the first
label belongs to subsystem A.
"""

from __future__ import annotations

import numpy as np

from .analytic import AmplitudeState
from .errors import NotADensityMatrix

BASIS = ("00", "01", "10", "11")
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
EIGEN_TOL = 1e-10
RANK_TOL = 1e-14

_SYSY = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))
# indices of |0,1> and |1,0>
_I01, _I10 = 1, 2


def _reduced(first, second) -> np.ndarray:
    """One excitation shared as ``first |1,0> + second |0,1>``, the rest in |0,0>."""
    first, second = complex(first), complex(second)
    rho = np.zeros((4, 4), dtype=complex)
    rho[_I10, _I10] = abs(first) ** 2
    rho[_I01, _I01] = abs(second) ** 2
    rho[_I10, _I01] = first * second.conjugate()
    rho[_I01, _I10] = first.conjugate() * second
    rho[0, 0] = 1.0 - abs(first) ** 2 - abs(second) ** 2
    return rho


def rho_atoms(state: AmplitudeState) -> np.ndarray:
    """Atomic two-qubit state after tracing out both cavity fields."""
    return _reduced(state.alpha, state.gamma)


def rho_cavities(state: AmplitudeState) -> np.ndarray:
    """Two-mode field state (vacuum/one photon) after tracing out the atoms."""
    return _reduced(state.beta, state.delta)


def check_density(rho: np.ndarray) -> np.ndarray:
    """Return ``rho`` as a complex array, raising if it is not a density matrix."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise NotADensityMatrix(f"expected a 4x4 matrix, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise NotADensityMatrix("matrix has non-finite entries")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
        raise NotADensityMatrix("matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > TRACE_TOL:
        raise NotADensityMatrix(f"trace is {np.trace(rho).real!r}, not 1")
    if np.linalg.eigvalsh(rho).min() < -EIGEN_TOL:
        raise NotADensityMatrix("matrix has a negative eigenvalue")
    return rho


def concurrence(rho: np.ndarray) -> float:
    """Wootters concurrence ``max(0, s1 - s2 - s3 - s4)`` of a two-qubit state.

    The ``s_i`` are the square roots of the eigenvalues of
    ``rho (sy x sy) rho* (sy x sy)``.  They are obtained directly as the
    singular values of ``W^T (sy x sy) W`` for a factorization
    ``rho = W W^H``, which keeps their absolute error at rounding level; taking
    square roots of computed eigenvalues would turn a 1e-17 eigenvalue error
    into a 3e-9 concurrence error.  Eigen-components of ``rho`` below
    ``RANK_TOL`` (relative) are rounding noise and are dropped from ``W``.
    """
    rho = check_density(rho)
    weights, vecs = np.linalg.eigh(rho)
    keep = weights > RANK_TOL * max(1.0, weights.max())
    w = vecs[:, keep] * np.sqrt(weights[keep])
    s = np.zeros(4)
    s[: keep.sum()] = np.linalg.svd(w.T @ _SYSY @ w, compute_uv=False)
    s = np.sort(s)[::-1]
    return float(np.clip(s[0] - s[1:].sum(), 0.0, 1.0))


def concurrence_from_spectrum(rho: np.ndarray) -> float:
    """Concurrence from the eigenvalues of the spin-flipped product.

    Textbook route, kept as a cross-check of :func:`concurrence`; its accuracy
    degrades to about 1e-8 on rank-deficient states.
    """
    rho = check_density(rho)
    lam = np.linalg.eigvals(rho @ _SYSY @ rho.conj() @ _SYSY)
    if np.max(np.abs(lam.imag)) > EIGEN_TOL or lam.real.min() < -EIGEN_TOL:
        raise NotADensityMatrix(f"spin-flip spectrum is not real non-negative: {lam}")
    roots = np.sqrt(np.sort(np.clip(lam.real, 0.0, None))[::-1])
    return float(np.clip(roots[0] - roots[1:].sum(), 0.0, 1.0))


def concurrence_atoms_closed(state: AmplitudeState):
    c = np.minimum(2.0 * np.abs(state.alpha) * np.abs(state.gamma), 1.0)
    return float(c) if np.ndim(c) == 0 else c


def concurrence_cavities_closed(state: AmplitudeState):
    c = np.minimum(2.0 * np.abs(state.beta) * np.abs(state.delta), 1.0)
    return float(c) if np.ndim(c) == 0 else c
