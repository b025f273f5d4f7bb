"""Network description and derived statistical channel quantities."""

import math
from dataclasses import dataclass

import numpy as np

from .quadrature import integrate


def _is_power_of_two(m):
    return m >= 2 and (m & (m - 1)) == 0


def check_constellation(M):
    if isinstance(M, bool) or int(M) != M or not _is_power_of_two(int(M)):
        raise ValueError(f"constellation size must be a power of two >= 2, got {M!r}")
    return int(M)


def g_psk(M):
    """Modulation constant sin^2(pi/M)."""
    return math.sin(math.pi / M) ** 2


def upper_angle(M):
    """Upper integration limit (M-1) pi / M of the Craig-form integrals."""
    return (M - 1) * math.pi / M


def cot_upper(M):
    """cot((M-1) pi / M), computed as cos/sin of the exact angle."""
    ang = upper_angle(M)
    return math.cos(ang) / math.sin(ang)


@dataclass(frozen=True)
class NetworkConfig:
    """Physical description of the two-hop network.

    Powers and variances are linear.  ``var_source_dest = 0`` means the
    destination has no direct link to the source.
    """

    n_relays: int
    constellation_size: int
    source_power: float
    noise_power: float
    var_source_dest: float
    var_source_relay: tuple
    var_relay_dest: tuple

    def __post_init__(self):
        object.__setattr__(self, "var_source_relay", tuple(float(v) for v in self.var_source_relay))
        object.__setattr__(self, "var_relay_dest", tuple(float(v) for v in self.var_relay_dest))
        if int(self.n_relays) != self.n_relays or self.n_relays < 0:
            raise ValueError("n_relays must be a nonnegative integer")
        check_constellation(self.constellation_size)
        if len(self.var_source_relay) != self.n_relays or len(self.var_relay_dest) != self.n_relays:
            raise ValueError("variance lists must have n_relays entries")
        if not (math.isfinite(self.noise_power) and self.noise_power > 0):
            raise ValueError("noise_power must be positive and finite")
        if not (math.isfinite(self.source_power) and self.source_power >= 0):
            raise ValueError("source_power must be nonnegative and finite")
        if not (math.isfinite(self.var_source_dest) and self.var_source_dest >= 0):
            raise ValueError("var_source_dest must be nonnegative and finite")
        for v in self.var_source_relay + self.var_relay_dest:
            if not (math.isfinite(v) and v > 0):
                raise ValueError("relay link variances must be positive and finite")

    @classmethod
    def from_geometry(cls, geometry, constellation_size=4, source_power=1.0, noise_power=1.0,
                      direct_link=True):
        m_sd, m_sr, m_rd = variances_from_geometry(geometry)
        return cls(
            n_relays=len(m_sr),
            constellation_size=constellation_size,
            source_power=source_power,
            noise_power=noise_power,
            var_source_dest=m_sd if direct_link else 0.0,
            var_source_relay=tuple(m_sr),
            var_relay_dest=tuple(m_rd),
        )

    def subset(self, relays):
        """Network restricted to the given 1-based relay indices."""
        idx = [r - 1 for r in relays]
        if any(i < 0 or i >= self.n_relays for i in idx):
            raise ValueError(f"relay indices {relays} out of range 1..{self.n_relays}")
        return NetworkConfig(
            n_relays=len(idx),
            constellation_size=self.constellation_size,
            source_power=self.source_power,
            noise_power=self.noise_power,
            var_source_dest=self.var_source_dest,
            var_source_relay=tuple(self.var_source_relay[i] for i in idx),
            var_relay_dest=tuple(self.var_relay_dest[i] for i in idx),
        )

    def with_source_power(self, p0):
        return NetworkConfig(self.n_relays, self.constellation_size, p0, self.noise_power,
                             self.var_source_dest, self.var_source_relay, self.var_relay_dest)


@dataclass(frozen=True)
class Geometry:
    """Relays on the unit source-destination segment."""

    relay_positions: tuple
    path_loss_exponent: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "relay_positions", tuple(float(d) for d in self.relay_positions))
        for d in self.relay_positions:
            if not 0.0 < d < 1.0:
                raise ValueError(f"relay position {d} must lie strictly inside (0, 1)")
        if not 2.0 <= self.path_loss_exponent <= 6.0:
            raise ValueError("path_loss_exponent must be in [2, 6]")


@dataclass(frozen=True, eq=False)
class ChannelStats:
    """Derived quantities consumed by the SEP evaluators and allocators.

    ``b`` and ``beta`` are indexed 0..N with index 0 the direct link
    (``beta[0] == 1``); ``c`` is indexed 1..N, stored 0-based.
    """

    M: int
    g_psk: float
    b: np.ndarray
    c: np.ndarray
    beta: np.ndarray
    source_power: float

    @property
    def n_relays(self):
        return self.c.size

    @property
    def direct_snr(self):
        """b_0 p_0, the scaled mean SNR of the direct link."""
        return float(self.b[0] * self.source_power)

    @property
    def relay_b(self):
        return self.b[1:]

    @property
    def relay_beta(self):
        return self.beta[1:]

    def scaled_snr(self, p):
        """The vector (b_0 p_0, b_1 p_1, ..., b_N p_N)."""
        p = np.asarray(p, dtype=float)
        return np.concatenate([[self.direct_snr], self.b[1:] * p])


def beta_closed_form(c_i, p0, M):
    """Fading-averaged probability that a relay decodes correctly.

    Uses only arctan, cot and a square root.  Equals 1/M at zero SNR.
    """
    if c_i < 0 or p0 < 0:
        raise ValueError("c_i and p0 must be nonnegative")
    snr = c_i * p0
    cot = cot_upper(M)
    if math.isinf(snr):
        r = 1.0
    else:
        r = math.sqrt(snr / (snr + 1.0))
    return (1.0
            - r * (math.atan(cot * r) / math.pi - 0.5)
            - (0.5 - math.atan(cot) / math.pi))


def beta_quadrature(c_i, p0, M, epsabs=1e-13):
    """Same quantity as :func:`beta_closed_form`, by direct integration."""
    if c_i < 0 or p0 < 0:
        raise ValueError("c_i and p0 must be nonnegative")
    snr = c_i * p0
    top = upper_angle(M)

    def f(theta):
        s = np.sin(theta) ** 2
        return s / (s + snr)

    points = [math.pi / 2] if top > math.pi / 2 else None
    return 1.0 - integrate(f, 0.0, top, points=points, epsabs=epsabs) / math.pi


def alpha_conditional(channel_gain_sq, p0, M, N0):
    """Probability that a relay decodes correctly given |h_{s,i}|^2."""
    if channel_gain_sq < 0:
        raise ValueError("channel_gain_sq must be nonnegative")
    a = g_psk(M) * channel_gain_sq * p0 / N0
    top = upper_angle(M)

    def f(theta):
        s = np.sin(theta) ** 2
        with np.errstate(divide="ignore", over="ignore"):
            return np.exp(-a / s)

    points = [math.pi / 2] if top > math.pi / 2 else None
    return 1.0 - integrate(f, 0.0, top, points=points) / math.pi


def variances_from_geometry(geom):
    """(m_sd, m_si list, m_id list) for path-loss variance 1/d^nu."""
    nu = geom.path_loss_exponent
    d = np.asarray(geom.relay_positions, dtype=float)
    if np.any(d <= 0) or np.any(d >= 1):
        raise ValueError("relay positions must lie strictly inside (0, 1)")
    return 1.0, list(1.0 / d ** nu), list(1.0 / (1.0 - d) ** nu)


def derive_stats(config):
    M = check_constellation(config.constellation_size)
    if not config.noise_power > 0:
        raise ValueError("noise_power must be positive")
    g = g_psk(M)
    n0 = config.noise_power
    b = np.array([g * config.var_source_dest / n0]
                 + [g * m / n0 for m in config.var_relay_dest])
    c = np.array([g * m / n0 for m in config.var_source_relay])
    beta = np.array([1.0] + [beta_closed_form(ci, config.source_power, M) for ci in c])
    return ChannelStats(M=M, g_psk=g, b=b, c=c, beta=beta, source_power=float(config.source_power))


def make_stats(b, beta, M=4, source_power=1.0, c=None):
    """Build :class:`ChannelStats` directly from b_0..b_N and beta_1..beta_N.

    Useful for synthetic instances where only the normalised gains matter.
    ``beta`` may be given with or without the leading direct-link 1.
    """
    b = np.asarray(b, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if beta.size == b.size - 1:
        beta = np.concatenate([[1.0], beta])
    if beta.size != b.size:
        raise ValueError("beta must have N or N+1 entries for N+1 gains")
    if np.any(b < 0) or np.any(beta < 0) or np.any(beta > 1):
        raise ValueError("b must be nonnegative and beta in [0, 1]")
    if c is None:
        c = np.full(b.size - 1, np.nan)
    return ChannelStats(M=check_constellation(M), g_psk=g_psk(M), b=b,
                        c=np.asarray(c, dtype=float), beta=beta,
                        source_power=float(source_power))


# Relay positions used in the reference experiments.
REFERENCE_POSITIONS = (0.0117, 0.1365, 0.2844, 0.4692, 0.8938)
