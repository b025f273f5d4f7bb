"""Relay power allocation minimising the average SEP.

Problem: minimise P_e(p) subject to sum_i beta_i p_i = p_R and
0 <= p_i <= p_max_i.  Three allocators are provided:

* :func:`allocate_exact` -- log-barrier interior-point method with
  equality-constrained Newton centering;
* :func:`allocate_approx` -- closed-form per-relay powers driven by a single
  multiplier nu' found by bisection on the budget;
* :func:`allocate_equal` -- the p_i = p_R / sum(beta) baseline.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .sep import SepEstimate, sep_closed_form, sep_gradient, sep_quadrature, sep_value_gradient_hessian

FEASIBLE = "feasible"
TRIVIAL_ALL_CAPS = "trivial_all_caps"
INFEASIBLE = "infeasible"

EXACT_BARRIER = "exact_barrier"
APPROX_KKT = "approx_kkt"
EQUAL_POWER = "equal_power"

BUDGET_RTOL = 1e-9
# Half squared Newton decrement below which full steps are taken.
QUADRATIC_PHASE = 1e-3
# Below this distance from 1 the water-filling limit replaces the general formula.
BETA_ONE_TOL = 1e-9


class InfeasibleError(ValueError):
    """Constraints admit no allocation."""


class ConvergenceError(RuntimeError):
    """Newton centering hit its iteration cap; ``result`` holds the last iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class Constraints:
    p_R: float
    p_max: np.ndarray

    def __post_init__(self):
        p_max = np.asarray(self.p_max, dtype=float).reshape(-1)
        object.__setattr__(self, "p_max", p_max)
        if not (math.isfinite(self.p_R) and self.p_R > 0):
            raise ValueError("p_R must be positive and finite")
        if np.any(~(p_max > 0)):
            raise ValueError("per-relay caps must be positive")

    @classmethod
    def uniform(cls, p_R, n, cap=math.inf):
        return cls(p_R, np.full(n, cap))


@dataclass(frozen=True)
class SolverConfig:
    t0: float = 1.0
    mu: float = 15.0
    eps: float = 1e-8
    newton_eps: float = 1e-10
    backtrack_alpha: float = 0.25
    backtrack_beta: float = 0.5
    max_outer: int = 100
    max_newton: int = 200

    def __post_init__(self):
        if not self.t0 > 0 or not self.mu > 1 or not self.eps > 0 or not self.newton_eps > 0:
            raise ValueError("t0, eps, newton_eps must be positive and mu > 1")
        if not 0 < self.backtrack_alpha < 0.5 or not 0 < self.backtrack_beta < 1:
            raise ValueError("backtracking parameters out of range")


@dataclass
class AllocationResult:
    p: np.ndarray
    multiplier: float
    sep: SepEstimate
    kkt_residual: float
    solver: str
    duality_gap: float = 0.0
    diagnostics: dict = field(default_factory=dict)


def _check_sizes(stats, cons):
    if cons.p_max.size != stats.n_relays:
        raise ValueError(f"{cons.p_max.size} caps given for {stats.n_relays} relays")


def check_feasibility(stats, cons, rtol=1e-12):
    _check_sizes(stats, cons)
    cap_budget = float(np.dot(stats.relay_beta, cons.p_max))
    if math.isinf(cap_budget):
        return FEASIBLE
    if abs(cap_budget - cons.p_R) <= rtol * max(cap_budget, cons.p_R):
        return TRIVIAL_ALL_CAPS
    return FEASIBLE if cap_budget > cons.p_R else INFEASIBLE


def _require_feasible(stats, cons):
    status = check_feasibility(stats, cons)
    if status == INFEASIBLE:
        raise InfeasibleError(
            f"sum(beta * p_max) = {np.dot(stats.relay_beta, cons.p_max):.6g} "
            f"< p_R = {cons.p_R:.6g}")
    return status


def _evaluate_sep(stats, p):
    return sep_closed_form(stats, p)


# -- approximate closed-form solution ---------------------------------------

def unclamped_power(nu_prime, b_i, beta_i):
    """Root of the approximate stationarity condition before clamping.

    Rationalised form of (-beta + sqrt(beta^2 + 4(1-beta) b/nu)) / (2 b (1-beta))
    - 1/b, which stays accurate as beta -> 1.
    """
    if b_i == 0:
        return -math.inf
    if 1.0 - beta_i < BETA_ONE_TOL:
        return 1.0 / nu_prime - 1.0 / b_i
    disc = beta_i * beta_i + 4.0 * (1.0 - beta_i) * b_i / nu_prime
    return 2.0 / (nu_prime * (beta_i + math.sqrt(disc))) - 1.0 / b_i


def clamped_power(nu_prime, b_i, beta_i, p_max_i):
    """Approximate optimal power of one relay, clamped to [0, p_max_i]."""
    if not nu_prime > 0:
        raise ValueError("nu_prime must be positive")
    if b_i == 0:
        return 0.0
    if b_i <= nu_prime:
        return 0.0
    return min(max(unclamped_power(nu_prime, b_i, beta_i), 0.0), p_max_i)


def approx_powers(nu_prime, b, beta, p_max):
    return np.array([clamped_power(nu_prime, bi, be, pm)
                     for bi, be, pm in zip(b, beta, p_max)])


def approx_marginal(p, b, beta):
    """beta b / (beta (1 + b p) + (1 - beta)(1 + b p)^2), the approximate -dP/dp."""
    u = 1.0 + b * p
    return beta * b / (beta * u + (1.0 - beta) * u * u)


def approx_kkt_residual(stats, cons, p, nu_prime):
    """Largest violation of the approximate KKT system at (p, nu').

    Multipliers are set to their best values given (p, nu'): gamma' only on
    capped relays, lambda' only on relays at zero.
    """
    b, beta, p_max = stats.relay_b, stats.relay_beta, cons.p_max
    phi = approx_marginal(p, b, beta)
    lam = np.zeros_like(p)
    gam = np.zeros_like(p)
    at_zero = p <= 0
    at_cap = (p >= p_max) & ~at_zero
    lam[at_zero] = np.maximum(beta[at_zero] * nu_prime - phi[at_zero], 0.0)
    gam[at_cap] = np.maximum(phi[at_cap] - beta[at_cap] * nu_prime, 0.0)
    stationarity = -phi + beta * nu_prime - lam + gam
    return _residual_max(p, p_max, cons.p_R, beta, stationarity, lam, gam, nu_prime)


def _residual_max(p, p_max, p_R, beta, stationarity, lam, gam, nu=None):
    parts = [
        np.max(np.abs(stationarity), initial=0.0),
        np.max(np.maximum(-lam, 0.0), initial=0.0),
        np.max(np.maximum(-gam, 0.0), initial=0.0),
        np.max(np.abs(lam * p), initial=0.0),
        np.max(np.abs(gam * np.where(np.isfinite(p_max), p - p_max, 0.0)), initial=0.0),
        np.max(np.maximum(-p, 0.0), initial=0.0),
        np.max(np.maximum(p - p_max, 0.0), initial=0.0),
        abs(float(np.dot(beta, p)) - p_R),
    ]
    return float(max(parts))


def _approx_budget(nu, stats, cons):
    return float(np.dot(stats.relay_beta,
                        approx_powers(nu, stats.relay_b, stats.relay_beta, cons.p_max)))


def allocate_approx(stats, cons, max_iter=200, nu_tol=1e-12, budget_rtol=1e-10):
    """Closed-form allocation with nu' chosen by bisection on the budget."""
    status = _require_feasible(stats, cons)
    if status == TRIVIAL_ALL_CAPS:
        return _trivial(stats, cons)
    b, beta = stats.relay_b, stats.relay_beta
    if not np.any(b > 0):
        raise InfeasibleError("no relay has a usable link to the destination")

    lo, hi = 1e-12, float(np.max(b)) + 1.0
    f_lo = _approx_budget(lo, stats, cons) - cons.p_R
    f_hi = _approx_budget(hi, stats, cons) - cons.p_R
    while f_lo < 0 and lo > 1e-300:
        # uncapped relays need a smaller multiplier to absorb a large budget
        lo *= 1e-6
        f_lo = _approx_budget(lo, stats, cons) - cons.p_R
    if not f_lo >= 0 >= f_hi:
        # cannot happen for a feasible instance
        raise ConvergenceError("budget root of nu' not bracketed")

    best_nu, best_gap = (lo, f_lo) if abs(f_lo) <= abs(f_hi) else (hi, f_hi)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        # geometric midpoint while the bracket spans decades
        mid = math.sqrt(lo * hi) if hi > 4 * lo else 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        f_mid = _approx_budget(mid, stats, cons) - cons.p_R
        if abs(f_mid) < abs(best_gap):
            best_nu, best_gap = mid, f_mid
        if abs(f_mid) <= budget_rtol * cons.p_R:
            break
        if f_mid > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= nu_tol * hi and abs(best_gap) <= BUDGET_RTOL * cons.p_R:
            break

    nu = best_nu
    p = approx_powers(nu, b, beta, cons.p_max)
    return AllocationResult(
        p=p,
        multiplier=nu,
        sep=_evaluate_sep(stats, p),
        kkt_residual=approx_kkt_residual(stats, cons, p, nu),
        solver=APPROX_KKT,
        diagnostics={"iterations": iterations, "budget_gap": best_gap},
    )


def _trivial(stats, cons):
    p = cons.p_max.copy()
    return AllocationResult(p=p, multiplier=0.0, sep=_evaluate_sep(stats, p),
                            kkt_residual=abs(float(np.dot(stats.relay_beta, p)) - cons.p_R),
                            solver=TRIVIAL_ALL_CAPS)


# -- equal power baseline -----------------------------------------------------

def allocate_equal(stats, cons):
    _check_sizes(stats, cons)
    beta = stats.relay_beta
    level = cons.p_R / float(beta.sum())
    if np.any(level > cons.p_max * (1 + 1e-12)):
        raise InfeasibleError(
            f"equal power {level:.6g} exceeds the smallest cap {cons.p_max.min():.6g}")
    p = np.full(stats.n_relays, level)
    grad = sep_gradient(stats, p)
    nu, lam, gam = multipliers_from_gradient(grad, p, cons.p_max, beta)
    return AllocationResult(p=p, multiplier=nu, sep=_evaluate_sep(stats, p),
                            kkt_residual=kkt_residual(stats, p, nu, lam, gam, cons, grad=grad),
                            solver=EQUAL_POWER)


# -- KKT verification of the true problem ------------------------------------

def kkt_residual(stats, p, nu, lambdas, gammas, cons, grad=None):
    """Largest violation of the exact KKT conditions.

    Covers multiplier signs, complementary slackness, stationarity
    grad P_e + nu beta - lambda + gamma = 0, box and budget feasibility.
    """
    p = np.asarray(p, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    gam = np.asarray(gammas, dtype=float)
    if grad is None:
        grad = sep_gradient(stats, p)
    beta = stats.relay_beta
    stationarity = grad + nu * beta - lam + gam
    return _residual_max(p, cons.p_max, cons.p_R, beta, stationarity, lam, gam)


def multipliers_from_gradient(grad, p, p_max, beta):
    """Best-effort multipliers for an arbitrary allocation.

    nu is fitted on relays strictly inside the box; lambda and gamma absorb
    the remaining stationarity error with the sign they are allowed.
    """
    interior = (p > 0) & (p < p_max)
    pool = interior if np.any(interior) else np.ones_like(p, dtype=bool)
    nu = float(np.median(-grad[pool] / beta[pool]))
    r = grad + nu * beta
    lam = np.maximum(r, 0.0)
    gam = np.maximum(-r, 0.0)
    return nu, lam, gam


# -- exact barrier method ------------------------------------------------------

class _BarrierObjective:
    """H(p) = t P_e(p) / scale - sum log p_i - sum log(p_max_i - p_i).

    ``scale`` is the SEP at the start point, so the duality gap m/t bounds
    the SEP suboptimality relative to it (and absolutely, since scale <= 1).
    """

    def __init__(self, stats, cons, scale=1.0):
        self.stats = stats
        self.p_max = cons.p_max
        self.capped = np.isfinite(cons.p_max)
        self.scale = scale

    def inside(self, p):
        return bool(np.all(p > 0) and np.all(p[self.capped] < self.p_max[self.capped]))

    def barrier(self, p):
        val = -np.sum(np.log(p))
        gap = self.p_max[self.capped] - p[self.capped]
        return val - np.sum(np.log(gap))

    def value(self, p, t):
        return t * sep_quadrature(self.stats, p).value / self.scale + self.barrier(p)

    def derivatives(self, p, t):
        P, g, H = sep_value_gradient_hessian(self.stats, p)
        g, H = g / self.scale, H / self.scale
        gap = np.where(self.capped, self.p_max - p, np.inf)
        grad = t * g - 1.0 / p + 1.0 / gap
        hess = t * H + np.diag(1.0 / p ** 2 + 1.0 / gap ** 2)
        return P, g, grad, hess


def _newton_system(hess, grad, a):
    n = a.size
    K = np.zeros((n + 1, n + 1))
    K[:n, :n] = hess
    K[:n, n] = a
    K[n, :n] = a
    rhs = np.concatenate([-grad, [0.0]])
    sol = np.linalg.solve(K, rhs)
    return sol[:n], float(sol[n])


def newton_centering(p, t, stats, cons, sc, objective=None, trace=None):
    """Minimise the barrier objective on the budget hyperplane from ``p``.

    Returns ``(p, w, info)`` where ``w`` is the multiplier of the equality
    row in the last Newton system.  ``trace`` (a list) receives one dict per
    iteration with the squared decrement, a^T dp and the accepted step.
    """
    obj = objective or _BarrierObjective(stats, cons)
    a = stats.relay_beta
    p = np.array(p, dtype=float)
    if not obj.inside(p):
        raise ValueError("centering must start strictly inside the box")
    w = 0.0
    for it in range(1, sc.max_newton + 1):
        _, _, grad, hess = obj.derivatives(p, t)
        dp, w = _newton_system(hess, grad, a)
        lam2 = float(dp @ hess @ dp)
        entry = {"t": t, "decrement_sq": lam2, "a_dot_dp": float(a @ dp), "step": 0.0}
        if trace is not None:
            trace.append(entry)
        if lam2 / 2.0 < sc.newton_eps:
            # the step is already computed; taking it tightens the barrier
            # certificates on coordinates pressed against a bound
            if obj.inside(p + dp):
                p = p + dp
            return p, w, {"newton_iterations": it, "decrement_sq": lam2}
        s = 1.0
        # stay strictly inside the box before evaluating anything
        while not obj.inside(p + s * dp):
            s *= sc.backtrack_beta
        if lam2 / 2.0 > QUADRATIC_PHASE:
            # Armijo only while damped: near the centre the predicted decrease
            # falls below the resolution of t * P_e in double precision
            h0 = obj.value(p, t)
            slope = float(grad @ dp)
            while obj.value(p + s * dp, t) > h0 + sc.backtrack_alpha * s * slope:
                s *= sc.backtrack_beta
                if s < 1e-14:
                    return p, w, {"newton_iterations": it, "decrement_sq": lam2, "stalled": True}
        entry["step"] = s
        p = p + s * dp
    raise ConvergenceError(f"Newton centering did not converge in {sc.max_newton} iterations",
                           result=(p, w))


def allocate_exact(stats, cons, sc=None, trace=None):
    """Interior-point solution with duality gap below ``sc.eps``."""
    sc = sc or SolverConfig()
    status = _require_feasible(stats, cons)
    if status == TRIVIAL_ALL_CAPS:
        return _trivial(stats, cons)
    beta = stats.relay_beta

    # cap-proportional start; an uncapped relay is treated as capped at
    # twice the power that would spend the whole budget on it
    caps = np.where(np.isfinite(cons.p_max), cons.p_max, 2.0 * cons.p_R / beta)
    p = caps * cons.p_R / float(np.dot(beta, caps))
    obj = _BarrierObjective(stats, cons, scale=sep_quadrature(stats, p).value)

    t = sc.t0
    outer = 0
    newton_total = 0
    w = 0.0
    while True:
        outer += 1
        try:
            p, w, info = newton_centering(p, t, stats, cons, sc, objective=obj, trace=trace)
        except ConvergenceError as exc:
            last_p, last_w = exc.result
            res = _exact_result(stats, cons, last_p, last_w, t / obj.scale, outer, newton_total)
            raise ConvergenceError(str(exc), result=res) from None
        newton_total += info["newton_iterations"]
        if _n_inequalities(cons) / t < sc.eps or outer >= sc.max_outer:
            break
        t *= sc.mu

    # in units of the unscaled SEP the barrier weight is t / scale
    return _exact_result(stats, cons, p, w, t / obj.scale, outer, newton_total)


def _n_inequalities(cons):
    return cons.p_max.size + int(np.sum(np.isfinite(cons.p_max)))


def _exact_result(stats, cons, p, w, t, outer, newton_total):
    beta = stats.relay_beta
    # remove floating-point drift off the budget hyperplane
    p = p + beta * (cons.p_R - float(beta @ p)) / float(beta @ beta)
    p = np.clip(p, 0.0, cons.p_max)
    nu = w / t
    lam = 1.0 / (t * p)
    gam = np.where(np.isfinite(cons.p_max), 1.0 / (t * (cons.p_max - p)), 0.0)
    grad = sep_gradient(stats, p)
    return AllocationResult(
        p=p,
        multiplier=nu,
        sep=_evaluate_sep(stats, p),
        kkt_residual=kkt_residual(stats, p, nu, lam, gam, cons, grad=grad),
        solver=EXACT_BARRIER,
        duality_gap=_n_inequalities(cons) / t,
        diagnostics={"outer_iterations": outer, "newton_iterations": newton_total,
                     "t": t, "lambda": lam, "gamma": gam},
    )
