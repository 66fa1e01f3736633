"""System parameter set shared by every model in the package.

All photon numbers are per coincidence window ``tau_c``; rates in hertz are
converted with :func:`rate_to_mean`.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

from .errors import InvalidParameters

__all__ = [
    "SystemParams",
    "RateSpec",
    "ValidationReport",
    "validate",
    "rate_to_mean",
    "db_to_ratio",
    "ratio_to_db",
]


@dataclass(frozen=True)
class RateSpec:
    """A mean count rate in hertz."""

    value: float

    def __post_init__(self):
        if not self.value >= 0:
            raise InvalidParameters(f"rate must be nonnegative, got {self.value}")

    def per_window(self, tau_c: float) -> float:
        return rate_to_mean(self, tau_c)


def rate_to_mean(rate, tau_c: float) -> float:
    """Mean number of events in a window of length ``tau_c`` seconds."""
    if not tau_c > 0:
        raise InvalidParameters("tau_c must be positive")
    value = rate.value if isinstance(rate, RateSpec) else float(rate)
    return value * tau_c


def db_to_ratio(db: float) -> float:
    """Power-ratio transmission for a loss quoted in (positive) dB."""
    return 10.0 ** (-db / 10.0)


def ratio_to_db(ratio: float) -> float:
    return -10.0 * math.log10(ratio)


@dataclass(frozen=True)
class SystemParams:
    """Photonic parameters read by the click model, sampler and analysis.

    ``nbg_s`` and ``nbg_i`` are mean background photon numbers per window
    *before* detection efficiency, so the detected background per window
    on the signal arm is ``nbg_s * eta_s``.
    """

    n_mean: float
    xi: float
    eta_s: float
    eta_i: float
    nbg_s: float
    nbg_i: float
    tau_c: float
    t_int: float
    gamma: float = 1.0
    beta: float = 1.0

    @property
    def k_ci(self) -> int:
        """Number of whole coincidence windows in one integration time."""
        # guard against 0.1/2e-9 landing a hair below an integer
        return int(math.floor(self.t_int / self.tau_c * (1 + 1e-12)))

    @property
    def pair_rate(self) -> float:
        return self.n_mean / self.tau_c

    @property
    def signal_bg_rate(self) -> float:
        """Detected background rate on the signal detector (Hz)."""
        return self.nbg_s * self.eta_s / self.tau_c

    @property
    def idler_bg_rate(self) -> float:
        return self.nbg_i * self.eta_i / self.tau_c

    @property
    def signal_return_rate(self) -> float:
        """Mean rate of detected target-return photons (Hz)."""
        return self.n_mean * self.xi * self.eta_s / self.tau_c

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def with_signal_bg_rate(self, rate: float) -> "SystemParams":
        """Copy with the detected signal background set to ``rate`` Hz."""
        return replace(self, nbg_s=rate * self.tau_c / self.eta_s)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SystemParams":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidParameters(f"unknown SystemParams fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    @classmethod
    def from_rates(
        cls,
        *,
        pair_rate: float,
        xi: float,
        eta_s: float,
        eta_i: float,
        signal_bg_rate: float,
        idler_bg_rate: float = 0.0,
        tau_c: float,
        t_int: float,
        gamma: float = 1.0,
        beta: float = 1.0,
    ) -> "SystemParams":
        """Build from lab-style rates.

        Background rates are *detected* count rates, as measured with the
        source blocked.
        """
        return cls(
            n_mean=rate_to_mean(pair_rate, tau_c),
            xi=xi,
            eta_s=eta_s,
            eta_i=eta_i,
            nbg_s=rate_to_mean(signal_bg_rate, tau_c) / eta_s,
            nbg_i=rate_to_mean(idler_bg_rate, tau_c) / eta_i,
            tau_c=tau_c,
            t_int=t_int,
            gamma=gamma,
            beta=beta,
        )


class ValidationReport(list):
    """List of violated invariants; falsy when the parameters are usable."""

    @property
    def ok(self) -> bool:
        return len(self) == 0


def validate(params: SystemParams) -> ValidationReport:
    report = ValidationReport()
    p = params
    for name in ("n_mean", "nbg_s", "nbg_i"):
        value = getattr(p, name)
        if not (value >= 0 and math.isfinite(value)):
            report.append(f"{name} must be a finite nonnegative number")
    if not 0 <= p.xi <= 1:
        report.append("xi out of range [0, 1]")
    for name in ("eta_s", "eta_i"):
        if not 0 < getattr(p, name) <= 1:
            report.append(f"{name} out of range (0, 1]")
    if not p.tau_c > 0:
        report.append("tau_c must be positive")
    elif not p.t_int >= p.tau_c:
        report.append("t_int must be at least tau_c")
    for name in ("gamma", "beta"):
        if not getattr(p, name) > 0:
            report.append(f"{name} must be positive")
    return report


def check(params: SystemParams) -> SystemParams:
    """Raise :class:`InvalidParameters` listing every violation."""
    report = validate(params)
    if report:
        raise InvalidParameters("; ".join(report))
    return params
