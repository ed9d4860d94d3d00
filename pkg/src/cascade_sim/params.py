"""Model constants for the two Raman-driven atom-cavity subsystems.

Every rate, frequency and time is measured in units of the total cavity
bandwidth ``K = kappa + kappa_loss`` of subsystem A, and hbar = 1.  The raw
fields mirror the physical knobs (coupling, Rabi frequency, detuning, mirror
rates, dipole relaxation); the effective Raman constants are derived once,
when a :class:`SystemParams` is built, and never stored independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from .errors import NegativeRate, NonFinite, NonPositiveDetuning, ParamsError

TWO_PI = 2.0 * math.pi

#: Advisory threshold on g/Delta and Omega/Delta.
ADEQUACY_THRESHOLD = 0.05

_RATE_FIELDS = ("kappa", "kappa_loss", "gamma", "gamma_prime")


@dataclass(frozen=True)
class DerivedParams:
    """Effective constants of one subsystem after eliminating the excited level.

    Attributes
    ----------
    g_bar : float
        Raman coupling ``-g * Omega / Delta``.
    stark_laser : float
        Laser-induced shift of the upper ground state, ``-Omega**2 / Delta``.
    stark_cavity : float
        Cavity-induced shift, ``-g**2 / Delta``.
    big_k : float
        Total cavity bandwidth ``kappa + kappa_loss``.
    gamma_eff, gamma_eff_prime : float
        Spontaneous-emission weights ``gamma / Delta**2`` and
        ``gamma_prime / Delta**2``.
    """

    g_bar: float
    stark_laser: float
    stark_cavity: float
    big_k: float
    gamma_eff: float = 0.0
    gamma_eff_prime: float = 0.0

    def laser_off(self) -> DerivedParams:
        """Constants with the Raman laser switched off (Omega = 0)."""
        return replace(self, g_bar=0.0, stark_laser=0.0)


@dataclass(frozen=True)
class SubsystemParams:
    """Raw physical parameters of one atom-cavity subsystem.

    ``g`` and ``omega_rabi`` are signed couplings; the four rates must be
    non-negative and the detuning strictly positive.
    """

    g: float
    omega_rabi: float
    detuning: float
    kappa: float
    kappa_loss: float = 0.0
    gamma: float = 0.0
    gamma_prime: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise NonFinite(f"{f.name} must be finite, got {value!r}")
        for name in _RATE_FIELDS:
            if getattr(self, name) < 0:
                raise NegativeRate(f"{name} must be >= 0, got {getattr(self, name)!r}")
        if self.detuning <= 0:
            raise NonPositiveDetuning(f"detuning must be > 0, got {self.detuning!r}")
        if self.kappa + self.kappa_loss <= 0:
            raise ParamsError("kappa + kappa_loss must be > 0")

    def derive(self) -> DerivedParams:
        d = self.detuning
        return DerivedParams(
            g_bar=-self.g * self.omega_rabi / d,
            stark_laser=-self.omega_rabi**2 / d,
            stark_cavity=-self.g**2 / d,
            big_k=self.kappa + self.kappa_loss,
            gamma_eff=self.gamma / d**2,
            gamma_eff_prime=self.gamma_prime / d**2,
        )


def _normalize_phase(phi: float) -> float:
    phi = math.fmod(phi, TWO_PI)
    if phi < 0:
        phi += TWO_PI
    # fmod of a tiny negative number can round up to exactly 2*pi
    return 0.0 if phi >= TWO_PI else phi


@dataclass(frozen=True)
class SystemParams:
    """The cascaded pair: source ``a`` drives target ``b`` through phase ``phi``."""

    a: SubsystemParams
    b: SubsystemParams
    phi: float = 0.0
    derived_a: DerivedParams = field(init=False, repr=False, compare=False)
    derived_b: DerivedParams = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.phi):
            raise NonFinite(f"phi must be finite, got {self.phi!r}")
        object.__setattr__(self, "phi", _normalize_phase(float(self.phi)))
        object.__setattr__(self, "derived_a", self.a.derive())
        object.__setattr__(self, "derived_b", self.b.derive())

    @classmethod
    def equal(cls, sub: SubsystemParams, phi: float = 0.0) -> SystemParams:
        """Both subsystems share ``sub``."""
        return cls(a=sub, b=sub, phi=phi)

    @property
    def coupling(self) -> float:
        """Cascade coupling strength ``sqrt(kappa_a * kappa_b)``."""
        return math.sqrt(self.a.kappa * self.b.kappa)

    def with_phi(self, phi: float) -> SystemParams:
        return replace(self, phi=phi)


def validate(raw: SystemParams) -> SystemParams:
    """Rebuild ``raw`` from its raw fields, re-running every check.

    Derived constants are recomputed from scratch, so repeated validation is
    idempotent and bitwise stable.
    """
    return SystemParams(
        a=SubsystemParams(**{f.name: getattr(raw.a, f.name) for f in fields(SubsystemParams)}),
        b=SubsystemParams(**{f.name: getattr(raw.b, f.name) for f in fields(SubsystemParams)}),
        phi=raw.phi,
    )


def baseline(kappa_ratio: float = 0.9, phi: float = 0.0) -> SystemParams:
    """Equal subsystems with g = Omega = 10, Delta = 1000 and K = 1.

    ``kappa_ratio`` is the fraction of the bandwidth leaving through the
    output mirror; the remainder is mirror absorption and scattering.
    """
    sub = SubsystemParams(
        g=10.0,
        omega_rabi=10.0,
        detuning=1000.0,
        kappa=kappa_ratio,
        kappa_loss=1.0 - kappa_ratio,
    )
    return SystemParams.equal(sub, phi=phi)


@dataclass(frozen=True)
class AdequacyReport:
    g_ratio_a: float
    omega_ratio_a: float
    g_ratio_b: float
    omega_ratio_b: float
    spont_weight: float
    threshold: float
    flagged: bool


def raman_adequacy(params: SystemParams, threshold: float = ADEQUACY_THRESHOLD) -> AdequacyReport:
    """Check the far-detuned regime the effective model relies on.

    ``spont_weight`` is ``(gamma_a + gamma'_a)/Delta_a + (gamma_b + gamma'_b)/Delta_b``,
    the order of magnitude of the spontaneous-emission probability over one
    Raman period; it reduces to ``2 (gamma + gamma') / Delta`` for equal
    subsystems.  The report never blocks a simulation.
    """
    a, b = params.a, params.b
    ratios = (
        abs(a.g) / a.detuning,
        abs(a.omega_rabi) / a.detuning,
        abs(b.g) / b.detuning,
        abs(b.omega_rabi) / b.detuning,
    )
    spont = (a.gamma + a.gamma_prime) / a.detuning + (b.gamma + b.gamma_prime) / b.detuning
    return AdequacyReport(
        *ratios,
        spont_weight=spont,
        threshold=threshold,
        flagged=any(r > threshold for r in ratios),
    )
