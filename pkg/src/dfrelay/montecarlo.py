"""Monte-Carlo estimates of the average SEP.

Two estimators are available:

``semi_analytic``
    Draws the fading coefficients only.  Per draw it computes each relay's
    conditional decoding probability, the probability of every decoding
    state and the exact conditional M-PSK SEP of the MRC output, then
    averages the total-probability sum.  Noise and decoding randomness are
    integrated out, so the variance is lower than symbol counting.

``symbol_level``
    Simulates complex baseband transmission: random M-PSK symbol, relay ML
    detection (a relay forwards only if it detected the right symbol), MRC
    at the destination and ML detection there.

Trials are split into shards with independent Philox streams spawned from
one :class:`numpy.random.SeedSequence`; shard results are merged in shard
order so a given plan is bit-reproducible regardless of ``workers``.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .sep import MONTE_CARLO, SepEstimate, conditional_sep_vec

SEMI_ANALYTIC = "semi_analytic"
SYMBOL_LEVEL = "symbol_level"

MAX_ENUMERATED_RELAYS = 16
# Number of (draw, state, relay) cells processed per chunk.
_CHUNK_CELLS = 1 << 21


@dataclass(frozen=True)
class TrialPlan:
    trials: int
    seed: int = 0
    estimator: str = SEMI_ANALYTIC
    shards: int = 1

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("trials must be a positive integer")
        if int(self.shards) != self.shards or not 1 <= self.shards <= self.trials:
            raise ValueError("shards must be in [1, trials]")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.estimator not in (SEMI_ANALYTIC, SYMBOL_LEVEL):
            raise ValueError(f"unknown estimator {self.estimator!r}")


@dataclass(frozen=True)
class DecodingState:
    bits: tuple
    decimal_index: int

    @classmethod
    def from_bits(cls, bits):
        bits = tuple(bool(b) for b in bits)
        return cls(bits, decoding_state_index(bits))

    @classmethod
    def from_index(cls, k, n_relays):
        return cls(decoding_state_bits(k, n_relays), int(k))


def decoding_state_index(bits):
    """Big-endian value of the decoding-state vector: relay 1 is the MSB."""
    k = 0
    for bit in bits:
        k = 2 * k + (1 if bit else 0)
    return k


def decoding_state_bits(k, n_relays):
    if not 0 <= k < 2 ** n_relays:
        raise ValueError(f"state index {k} out of range for {n_relays} relays")
    return tuple(bool((k >> (n_relays - 1 - i)) & 1) for i in range(n_relays))


def state_matrix(n_relays):
    """All 2^N decoding states as a boolean array, row k is state k."""
    k = np.arange(2 ** n_relays)[:, None]
    shifts = np.arange(n_relays - 1, -1, -1)[None, :]
    return ((k >> shifts) & 1).astype(bool)


def state_probabilities(alpha, states=None):
    """Pr{state k} = prod alpha_i over decoders times prod (1 - alpha_i) otherwise.

    ``alpha`` has shape (..., N); the result has shape (..., 2^N).
    """
    alpha = np.asarray(alpha, dtype=float)
    n = alpha.shape[-1]
    if states is None:
        states = state_matrix(n)
    a = alpha[..., None, :]
    return np.where(states, a, 1.0 - a).prod(axis=-1)


def _expand_states(fail, gamma_s, gamma_r):
    """State probabilities and MRC SNRs for every draw, shape (draws, 2^N).

    ``fail`` holds each relay's conditional decoding-error probability; it is
    used as given (not as 1 - alpha) so that tiny failure probabilities keep
    their precision.  Built by doubling over relays in order, so column k
    matches the big-endian state index.
    """
    k = fail.shape[0]
    weights = np.ones((k, 1))
    gamma = gamma_s[:, None].copy()
    for i in range(fail.shape[1]):
        e = fail[:, i:i + 1]
        weights = np.stack([weights * e, weights * (1.0 - e)], axis=-1).reshape(k, -1)
        gamma = np.stack([gamma, gamma + gamma_r[:, i:i + 1]], axis=-1).reshape(k, -1)
    return weights, gamma


def _shard_sizes(plan):
    base, extra = divmod(plan.trials, plan.shards)
    return [base + (1 if k < extra else 0) for k in range(plan.shards)]


def _shard_rngs(plan):
    seqs = np.random.SeedSequence(int(plan.seed)).spawn(plan.shards)
    return [np.random.Generator(np.random.Philox(s)) for s in seqs]


def _merge_moments(a, b):
    """Chan's parallel update of (count, mean, M2)."""
    na, ma, qa = a
    nb, mb, qb = b
    if na == 0:
        return b
    n = na + nb
    delta = mb - ma
    return n, ma + delta * nb / n, qa + qb + delta * delta * na * nb / n


def _chunk_moments(values):
    n = values.size
    mean = float(values.mean())
    return n, mean, float(((values - mean) ** 2).sum())


def _semi_analytic_shard(config, p, n_trials, rng):
    M = config.constellation_size
    n = config.n_relays
    n0 = config.noise_power
    p = np.asarray(p, dtype=float)
    enumerate_states = n <= MAX_ENUMERATED_RELAYS
    width = 2 ** n if enumerate_states else max(n, 1)
    chunk = max(1, _CHUNK_CELLS // width)
    m_sr = np.asarray(config.var_source_relay)
    m_rd = np.asarray(config.var_relay_dest)

    moments = (0, 0.0, 0.0)
    done = 0
    while done < n_trials:
        k = min(chunk, n_trials - done)
        gain_sd = rng.exponential(1.0, k) * config.var_source_dest
        gain_sr = rng.exponential(1.0, (k, n)) * m_sr
        gain_rd = rng.exponential(1.0, (k, n)) * m_rd
        gamma_s = config.source_power * gain_sd / n0
        gamma_r = p * gain_rd / n0
        fail = conditional_sep_vec(gain_sr * config.source_power / n0, M)
        if enumerate_states:
            weights, gamma_d = _expand_states(fail, gamma_s, gamma_r)
            values = (weights * conditional_sep_vec(gamma_d, M)).sum(axis=1)
        else:
            decoded = rng.random((k, n)) >= fail
            gamma_d = gamma_s + (gamma_r * decoded).sum(axis=1)
            values = conditional_sep_vec(gamma_d, M)
        moments = _merge_moments(moments, _chunk_moments(values))
        done += k
    return moments


def _psk_detect(z, M):
    """Index of the nearest M-PSK point to the phase of z."""
    idx = np.rint(np.angle(z) * M / (2 * np.pi)).astype(np.int64)
    return np.mod(idx, M)


def _cn(rng, shape, var):
    scale = np.sqrt(np.asarray(var, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _symbol_level_shard(config, p, n_trials, rng):
    M = config.constellation_size
    n = config.n_relays
    n0 = config.noise_power
    p = np.asarray(p, dtype=float)
    p0 = config.source_power
    chunk = max(1, _CHUNK_CELLS // (4 * max(n, 1)))
    errors = 0
    done = 0
    while done < n_trials:
        k = min(chunk, n_trials - done)
        sym = rng.integers(0, M, k)
        x = np.exp(2j * np.pi * sym / M)
        h_sd = _cn(rng, k, config.var_source_dest)
        h_sr = _cn(rng, (k, n), config.var_source_relay)
        h_rd = _cn(rng, (k, n), config.var_relay_dest)
        y_sd = math.sqrt(p0) * h_sd * x + _cn(rng, k, n0)
        y_sr = math.sqrt(p0) * h_sr * x[:, None] + _cn(rng, (k, n), n0)
        relay_ok = _psk_detect(np.conj(h_sr) * y_sr, M) == sym[:, None]
        y_rd = np.sqrt(p) * h_rd * x[:, None] + _cn(rng, (k, n), n0)
        combined = math.sqrt(p0) * np.conj(h_sd) * y_sd
        combined = combined + (relay_ok * np.sqrt(p) * np.conj(h_rd) * y_rd).sum(axis=1)
        errors += int(np.count_nonzero(_psk_detect(combined, M) != sym))
        done += k
    return errors


def _run_shards(fn, config, p, plan, workers):
    jobs = list(zip(_shard_sizes(plan), _shard_rngs(plan)))
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda job: fn(config, p, *job), jobs))
    return [fn(config, p, *job) for job in jobs]


def _check_power(config, p):
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size != config.n_relays:
        raise ValueError(f"expected {config.n_relays} relay powers, got {p.size}")
    if np.any(p < 0) or np.any(~np.isfinite(p)):
        raise ValueError("relay powers must be finite and nonnegative")
    return p


def estimate_sep_semi_analytic(config, p, plan, workers=None):
    p = _check_power(config, p)
    moments = (0, 0.0, 0.0)
    for shard in _run_shards(_semi_analytic_shard, config, p, plan, workers):
        moments = _merge_moments(moments, shard)
    n, mean, m2 = moments
    std = math.sqrt(m2 / (n - 1)) if n > 1 else 0.0
    return SepEstimate(mean, MONTE_CARLO, std_error=std / math.sqrt(n), trials=n)


def estimate_sep_symbol_level(config, p, plan, workers=None):
    p = _check_power(config, p)
    errors = sum(_run_shards(_symbol_level_shard, config, p, plan, workers))
    n = plan.trials
    rate = errors / n
    return SepEstimate(rate, MONTE_CARLO, std_error=math.sqrt(rate * (1 - rate) / n), trials=n)


def estimate_sep(config, p, plan, workers=None):
    if plan.estimator == SYMBOL_LEVEL:
        return estimate_sep_symbol_level(config, p, plan, workers)
    return estimate_sep_semi_analytic(config, p, plan, workers)


def awgn_symbol_error_rate(snr, M, n_symbols, seed=0):
    """Symbol error rate of M-PSK ML detection on an AWGN link at ``snr``.

    Independent check on the Craig-form conditional SEP.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    errors = 0
    done = 0
    while done < n_symbols:
        k = min(1 << 20, n_symbols - done)
        sym = rng.integers(0, M, k)
        y = math.sqrt(snr) * np.exp(2j * np.pi * sym / M) + _cn(rng, k, 1.0)
        errors += int(np.count_nonzero(_psk_detect(y, M) != sym))
        done += k
    return errors / n_symbols
