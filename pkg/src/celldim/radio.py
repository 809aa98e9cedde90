"""SINR and the SINR-to-peak-bit-rate maps.

Two technologies:
  3G   R = efficiency * W * E[log2(1 + |H|^2 * SINR)], |H|^2 unit-mean
       exponential; the expectation has the closed form
       e^(1/s) * E1(1/s) / ln 2 with the exponential integral E1.
  4G   R = b * W * log2(1 + SINR / a).

All SINR arithmetic is linear (watts); dB conversion happens once at
the configuration boundary.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .units import dbm_to_watts
from . import propagation as prop

EULER_GAMMA = 0.57721566490153286


def exp_e1_scaled(x):
    """e^x * E1(x) for x > 0, elementwise.

    Power series below the switchover at 1,

        E1(x) = -gamma - ln x + sum_{k>=1} (-1)^(k+1) x^k / (k * k!),

    and the modified Lentz evaluation of the continued fraction

        e^x E1(x) = 1 / (x + 1 - 1/(x + 3 - 4/(x + 5 - 9/(...))))

    above it. Both branches hold ~1e-14 relative accuracy over
    x in [1e-8, 1e12]; the series term k=25 at x=1 is already below
    1e-26 and the fraction is run to a fixed depth that converges for
    every x >= 1.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if np.any(x <= 0):
        raise ValueError("exp_e1_scaled requires positive arguments")
    out = np.empty_like(x)

    small = x <= 1.0
    if np.any(small):
        xs = x[small]
        term = np.ones_like(xs)
        acc = np.zeros_like(xs)
        for k in range(1, 26):
            term *= -xs / k
            acc -= term / k
        e1 = -EULER_GAMMA - np.log(xs) + acc
        out[small] = np.exp(xs) * e1

    large = ~small
    if np.any(large):
        xl = x[large]
        tiny = 1e-300
        b = xl + 1.0
        c = np.full_like(xl, 1.0 / tiny)
        d = 1.0 / b
        h = d.copy()
        for k in range(1, 97):
            a = -float(k * k)
            b = b + 2.0
            den = a * d + b
            np.copyto(den, tiny, where=den == 0.0)
            d = 1.0 / den
            c = b + a / c
            np.copyto(c, tiny, where=c == 0.0)
            h *= c * d
        out[large] = h

    return float(out[0]) if scalar else out


def ergodic_bits_per_symbol(snr):
    """E[log2(1 + |H|^2 * s)] for unit-mean exponential |H|^2.

    Closed form e^(1/s) * E1(1/s) / ln 2. Vanishes like s/ln 2 as
    s -> 0 and grows like log2(s) for large s; snr = 0 maps to 0 bits.
    """
    s = np.asarray(snr, dtype=float)
    scalar = s.ndim == 0
    s = np.atleast_1d(s)
    if np.any(s < 0) or not np.all(np.isfinite(s) | np.isposinf(s)):
        raise ValueError("snr must be nonnegative")
    out = np.zeros_like(s)
    pos = s > 0
    if np.any(pos):
        with np.errstate(divide="ignore"):
            out[pos] = exp_e1_scaled(1.0 / s[pos]) / math.log(2.0)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class RateModel:
    """Peak bit-rate map R(SINR) for one technology and bandwidth."""

    technology: str
    bandwidth_hz: float
    efficiency: float = 0.3   # 3G: fraction of the ergodic fading capacity
    a: float = 3.0            # 4G: SINR gap to capacity
    b: float = 1.12           # 4G: bandwidth efficiency

    def __post_init__(self):
        if self.technology not in ("3g", "4g"):
            raise ValueError(f"unknown technology {self.technology!r}")
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth must be positive")
        if not (0 < self.efficiency <= 1):
            raise ValueError("efficiency must lie in (0, 1]")
        if not self.a >= 1:
            raise ValueError("SINR gap a must be >= 1")
        if not self.b > 0:
            raise ValueError("bandwidth efficiency b must be positive")

    @classmethod
    def three_g(cls, bandwidth_hz, efficiency=0.3):
        return cls("3g", bandwidth_hz, efficiency=efficiency)

    @classmethod
    def four_g(cls, bandwidth_hz, a=3.0, b=1.12):
        return cls("4g", bandwidth_hz, a=a, b=b)

    def with_bandwidth(self, bandwidth_hz) -> "RateModel":
        return replace(self, bandwidth_hz=bandwidth_hz)

    def rate(self, sinr):
        return peak_rate(self, sinr)


def peak_rate(model: RateModel, sinr):
    """Peak bit-rate in bit/s for a user alone in the cell.

    Strictly increasing and continuous in SINR, exactly linear in W.
    With a = b = 1 the 4G form reduces to the Shannon rate.
    """
    if model.technology == "3g":
        return model.efficiency * model.bandwidth_hz * ergodic_bits_per_symbol(sinr)
    s = np.asarray(sinr, dtype=float)
    out = model.b * model.bandwidth_hz * np.log2(1.0 + s / model.a)
    return float(out) if np.isscalar(sinr) else out


@dataclass(frozen=True)
class InterferenceFactors:
    """Per-station activity weights in [0, 1] entering the interference sum."""

    phi: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.phi, dtype=float)
        object.__setattr__(self, "phi", p)
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("interference factors must lie in [0, 1]")


def sinr_from_gains(gains: np.ndarray, serving: int, phi: np.ndarray,
                    noise_w: float) -> float:
    """SINR from received powers: own power over noise plus weighted others.

        SINR = g_serving / (N + sum_{Y != serving} phi_Y * g_Y)
    """
    if noise_w < 0:
        raise ValueError("noise power must be nonnegative")
    signal = gains[serving]
    interference = float(np.dot(phi, gains)) - phi[serving] * signal
    return signal / (noise_w + interference)


def sinr(location, serving: int, deployment, model: "prop.PropagationModel",
         factors: InterferenceFactors, noise_w: float, extra_gain_at=None) -> float:
    """Downlink SINR at one location served by one station.

    extra_gain_at, if given, is the (S,) realized shadow/antenna gain of
    each station toward the location; otherwise both are taken trivial.
    """
    loc = np.asarray(location, dtype=float)
    d = np.hypot(deployment.positions[:, 0] - loc[0],
                 deployment.positions[:, 1] - loc[1])
    powers = model.station_powers_dbm(deployment)
    gains = dbm_to_watts(powers) / prop.path_loss(model.pathloss, d)
    if extra_gain_at is not None:
        gains = gains * np.asarray(extra_gain_at, dtype=float)
    return sinr_from_gains(gains, serving, factors.phi, noise_w)
