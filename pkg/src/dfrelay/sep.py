"""Average symbol-error probability of the DF relay network.

The product-integral form is

    P_e(p) = (1/pi) * int_0^{(M-1)pi/M} g(theta, p) dtheta,
    g(theta, p) = prod_{i=0..N} ((1 - beta_i) + beta_i s / (s + b_i p_i)),

with s = sin^2(theta) and the i = 0 factor using the fixed source power.
The closed form is its partial-fraction evaluation; gradient and Hessian
differentiate under the integral sign.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, owens_t

from .model import cot_upper, g_psk, upper_angle
from .quadrature import integrate

QUADRATURE = "quadrature"
CLOSED_FORM = "closed_form"
CLOSED_FORM_FALLBACK = "closed_form_fallback"
MONTE_CARLO = "monte_carlo"

# Relative gap between two b_i p_i below which the partial-fraction form is
# abandoned for quadrature.
COLLISION_RTOL = 1e-9


@dataclass(frozen=True)
class SepEstimate:
    value: float
    method: str
    std_error: float = 0.0
    trials: int = 0

    def __float__(self):
        return float(self.value)


def _as_power(stats, p):
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size != stats.n_relays:
        raise ValueError(f"expected {stats.n_relays} relay powers, got {p.size}")
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise ValueError("relay powers must be finite and nonnegative")
    return p


def _break_points(M):
    return [math.pi / 2] if M > 2 else None


def _factors(theta, stats, p):
    """Per-theta factors h_i, shape (len(theta), N+1), plus s and x."""
    s = np.sin(theta)[:, None] ** 2
    x = stats.scaled_snr(p)[None, :]
    beta = stats.beta[None, :]
    h = (1.0 - beta) + beta * s / (s + x)
    return h, s, x


def sep_integrand(theta, stats, p):
    """g(theta, p); ``theta`` may be a scalar or an array."""
    p = _as_power(stats, p)
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    h, _, _ = _factors(th, stats, p)
    g = h.prod(axis=1)
    return g if np.ndim(theta) else float(g[0])


def sep_quadrature(stats, p):
    p = _as_power(stats, p)

    def f(theta):
        h, _, _ = _factors(theta, stats, p)
        return h.prod(axis=1)

    val = integrate(f, 0.0, upper_angle(stats.M), points=_break_points(stats.M)) / math.pi
    return SepEstimate(float(val), QUADRATURE)


def _has_collision(x, rtol=COLLISION_RTOL):
    xs = np.sort(x[x > 0])
    if xs.size < 2:
        return False
    return bool(np.any(np.diff(xs) <= rtol * xs[1:]))


def sep_closed_form(stats, p, rtol=COLLISION_RTOL):
    """Partial-fraction closed form; falls back to quadrature on repeated roots."""
    p = _as_power(stats, p)
    x = stats.scaled_snr(p)
    if _has_collision(x, rtol):
        est = sep_quadrature(stats, p)
        return SepEstimate(est.value, CLOSED_FORM_FALLBACK)
    beta = stats.beta
    cot = cot_upper(stats.M)
    total = 0.5 - math.atan(cot) / math.pi
    terms = []
    for i in np.flatnonzero(x > 0):
        xi = x[i]
        r = math.sqrt(xi / (xi + 1.0))
        prod = 1.0
        for j in range(x.size):
            if j == i or x[j] == 0.0:
                continue
            # beta_j / (1 - x_j/x_i) + (1 - beta_j), written without the ratio
            prod *= (xi - (1.0 - beta[j]) * x[j]) / (xi - x[j])
        terms.append(beta[i] * (math.atan(cot * r) / math.pi - 0.5) * r * prod)
    value = math.fsum([total] + terms)
    return SepEstimate(value, CLOSED_FORM)


def _log_derivative(s, x, b, beta):
    """h_i'/h_i with respect to p_i."""
    return -beta * b * s / (s * s + (2.0 - beta) * x * s + (1.0 - beta) * x * x)


def sep_gradient(stats, p):
    """dP_e/dp_i for the N relay powers; every entry is <= 0."""
    p = _as_power(stats, p)
    b = stats.relay_b[None, :]
    beta = stats.relay_beta[None, :]

    def f(theta):
        h, s, x = _factors(theta, stats, p)
        g = h.prod(axis=1, keepdims=True)
        return g * _log_derivative(s, x[:, 1:], b, beta)

    if stats.n_relays == 0:
        return np.zeros(0)
    val = integrate(f, 0.0, upper_angle(stats.M), points=_break_points(stats.M))
    return np.asarray(val, dtype=float).reshape(-1) / math.pi


def _hessian_integrand(stats, p):
    n = stats.n_relays
    b = stats.relay_b[None, :]
    beta = stats.relay_beta[None, :]
    iu = np.triu_indices(n)

    def f(theta):
        h, s, x = _factors(theta, stats, p)
        g = h.prod(axis=1)
        xr = x[:, 1:]
        d1 = _log_derivative(s, xr, b, beta)
        h2 = 2.0 * beta * b * b * s / (s + xr) ** 3
        outer = d1[:, :, None] * d1[:, None, :]
        idx = np.arange(n)
        outer[:, idx, idx] = h2 / h[:, 1:]
        return g[:, None] * outer[:, iu[0], iu[1]]

    return f, iu


def sep_hessian(stats, p):
    """Symmetric N x N Hessian of P_e with respect to the relay powers."""
    p = _as_power(stats, p)
    n = stats.n_relays
    if n == 0:
        return np.zeros((0, 0))
    f, iu = _hessian_integrand(stats, p)
    vals = integrate(f, 0.0, upper_angle(stats.M), points=_break_points(stats.M))
    H = np.zeros((n, n))
    H[iu] = np.asarray(vals).reshape(-1) / math.pi
    H[(iu[1], iu[0])] = H[iu]
    return H


def sep_value_gradient_hessian(stats, p):
    """P_e, gradient and Hessian from a single vector-valued integral."""
    p = _as_power(stats, p)
    n = stats.n_relays
    b = stats.relay_b[None, :]
    beta = stats.relay_beta[None, :]
    hess_f, iu = _hessian_integrand(stats, p)

    def f(theta):
        h, s, x = _factors(theta, stats, p)
        g = h.prod(axis=1, keepdims=True)
        grad = g * _log_derivative(s, x[:, 1:], b, beta)
        return np.concatenate([g, grad, hess_f(theta)], axis=1)

    vals = integrate(f, 0.0, upper_angle(stats.M), points=_break_points(stats.M))
    vals = np.asarray(vals).reshape(-1) / math.pi
    H = np.zeros((n, n))
    H[iu] = vals[1 + n:]
    H[(iu[1], iu[0])] = H[iu]
    return float(vals[0]), vals[1:1 + n], H


def sep_enumerated(stats, p):
    """Sum over all 2^N decoding states of P(state) times its state SEP.

    The per-state integrals are evaluated separately (as one vector-valued
    integral); this is the expanded form that the product integral collapses.
    """
    p = _as_power(stats, p)
    n = stats.n_relays
    x = stats.scaled_snr(p)
    beta = stats.relay_beta
    states = np.array(list(itertools.product((0, 1), repeat=n)), dtype=bool).reshape(-1, n)
    weights = np.where(states, beta[None, :], 1.0 - beta[None, :]).prod(axis=1)
    # the direct link is always part of the combined signal
    member = np.concatenate([np.ones((states.shape[0], 1), dtype=bool), states], axis=1)

    def f(theta):
        s = np.sin(theta)[:, None] ** 2
        ratio = s / (s + x[None, :])
        logs = np.log(ratio)
        return np.exp(logs @ member.T.astype(float))

    vals = integrate(f, 0.0, upper_angle(stats.M), points=_break_points(stats.M))
    per_state = np.asarray(vals).reshape(-1) / math.pi
    return float(np.dot(weights, per_state))


def conditional_sep(gamma_D, M):
    """M-PSK error probability at instantaneous SNR gamma_D, by quadrature."""
    if gamma_D < 0:
        raise ValueError("gamma_D must be nonnegative")
    a = g_psk(M) * gamma_D

    def f(theta):
        with np.errstate(over="ignore"):
            return np.exp(-a / np.sin(theta) ** 2)

    return integrate(f, 0.0, upper_angle(M), points=_break_points(M)) / math.pi


def conditional_sep_vec(gamma_D, M):
    """Vectorised conditional SEP.

    The Craig integral splits at pi/2 into Q(h) plus 2*T(h, cot(pi/M)) with
    h = sqrt(2 g_PSK gamma_D) and T Owen's T function.
    """
    gamma_D = np.asarray(gamma_D, dtype=float)
    h = np.sqrt(2.0 * g_psk(M) * gamma_D)
    out = ndtr(-h)
    if M == 4:
        # T(h, 1) = Q(h)(1 - Q(h))/2
        return out * (2.0 - out)
    if M > 2:
        a = math.cos(math.pi / M) / math.sin(math.pi / M)
        out = out + 2.0 * owens_t(h, a)
    return out
