"""Experiment specs, sweeps, presets and CSV output.

A spec is a YAML (or JSON) document::

    network:
      constellation_size: 4        # M-PSK order, power of two
      noise_power: 1.0             # N_0, linear
      source_power: 1.0            # p_0 when source_power_rule is fixed
      direct_link: true            # false sets m_sd = 0
      geometry:                    # either geometry ...
        relay_positions: [0.0117, 0.1365, 0.2844, 0.4692, 0.8938]
        path_loss_exponent: 3
      # ... or explicit variances:
      # var_source_dest: 1.0
      # var_source_relay: [...]
      # var_relay_dest: [...]
    relay_sets: [[1, 3, 5], [1, 2, 3, 4, 5]]   # 1-based; default: all relays
    sweep:
      db: {start: 0, stop: 35, num: 8}         # or values: [linear, ...]
    source_power_rule: fixed                   # fixed | equal_split_total
    equal_split: instantaneous                 # instantaneous | average
    constraints:
      p_max_ratio: [1.0, 0.5]                  # caps as multiples of p_R
      # p_max: [..]                            # or absolute caps per relay
    solvers: [exact, approx, equal]
    solver_config: {t0: 1, mu: 15, eps: 1.0e-8}
    validation: {trials: 1000000, seed: 1, estimator: semi_analytic, shards: 1}
    output: {path: out.csv, format: csv}
    timing: false

With ``source_power_rule: fixed`` the sweep value is the total average
relay power p_R.  With ``equal_split_total`` it is the total power P shared
by the source and the N relays of each set: p_0 = P/(N+1) and either
p_i = P/(N+1) (``instantaneous``) or beta_i p_i = P/(N+1) (``average``).
Those rows carry the solver label ``equal_split``; any listed solvers then
allocate p_R = N P/(N+1) at that source power.
"""

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import allocator as alloc
from .model import REFERENCE_POSITIONS, Geometry, NetworkConfig, derive_stats
from .montecarlo import SEMI_ANALYTIC, TrialPlan, estimate_sep
from .sep import sep_closed_form, sep_quadrature

log = logging.getLogger(__name__)

SOLVERS = ("exact", "approx", "equal")
EQUAL_SPLIT = "equal_split"
FIXED = "fixed"
EQUAL_SPLIT_TOTAL = "equal_split_total"


class ConfigError(ValueError):
    """Malformed experiment spec; the message names the field and line."""


@dataclass
class ExperimentSpec:
    network: NetworkConfig
    sweep_values: list
    relay_sets: list
    solvers: list = field(default_factory=list)
    p_max_ratios: list = field(default_factory=lambda: [math.inf])
    p_max_abs: list = None
    validation: TrialPlan = None
    source_power_rule: str = FIXED
    equal_split: str = "instantaneous"
    solver_config: alloc.SolverConfig = field(default_factory=alloc.SolverConfig)
    output_path: str = None
    timing: bool = False

    def __post_init__(self):
        if not self.solvers and self.validation is None and self.source_power_rule == FIXED:
            raise ConfigError("select at least one solver or a validation plan")
        if not self.sweep_values:
            raise ConfigError("sweep: list of values is empty")


# -- config parsing -------------------------------------------------------------

def _line_map(text):
    """Map each key path of a YAML document to its 1-based line."""
    lines = {}

    def walk(node, path):
        lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                walk(v, path + (k.value,))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return lines
    if root is not None:
        walk(root, ())
    return lines


class _Fields:
    """Access to the parsed document that reports errors with field paths."""

    def __init__(self, data, lines):
        self.data = data
        self.lines = lines

    def error(self, path, msg):
        name = ".".join(str(p) if not isinstance(p, int) else f"[{p}]" for p in path)
        name = name.replace(".[", "[")
        line = None
        for k in range(len(path), -1, -1):
            if path[:k] in self.lines:
                line = self.lines[path[:k]]
                break
        where = f" (line {line})" if line is not None else ""
        return ConfigError(f"{name or '<root>'}{where}: {msg}")

    def get(self, path, default=None, required=False):
        node = self.data
        for key in path:
            if isinstance(node, dict) and key in node:
                node = node[key]
            elif isinstance(node, list) and isinstance(key, int) and key < len(node):
                node = node[key]
            else:
                if required:
                    raise self.error(path, "required field is missing")
                return default
        return node

    def number(self, path, default=None, required=False, positive=False, nonneg=False):
        v = self.get(path, default, required)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.error(path, f"expected a number, got {v!r}")
        v = float(v)
        if positive and not v > 0:
            raise self.error(path, "must be positive")
        if nonneg and not v >= 0:
            raise self.error(path, "must be nonnegative")
        return v

    def numbers(self, path, required=False):
        v = self.get(path, None, required)
        if v is None:
            return None
        if not isinstance(v, list) or not v:
            raise self.error(path, "expected a nonempty list of numbers")
        return [self.number(path + (i,)) for i in range(len(v))]


def load_spec(text, seed=None, trials=None):
    """Parse a spec document (YAML or JSON text) into an :class:`ExperimentSpec`."""
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"cannot parse config at {where}: {exc.problem}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    f = _Fields(data, _line_map(text))
    return _build_spec(f, seed, trials)


def load_spec_file(path, seed=None, trials=None):
    with open(path, encoding="utf-8") as fh:
        return load_spec(fh.read(), seed=seed, trials=trials)


def _build_network(f):
    net = ("network",)
    if not isinstance(f.get(net), dict):
        raise f.error(net, "required mapping is missing")
    M = f.get(net + ("constellation_size",), 4)
    if isinstance(M, bool) or not isinstance(M, int):
        raise f.error(net + ("constellation_size",), "must be an integer")
    n0 = f.number(net + ("noise_power",), 1.0, positive=True)
    p0 = f.number(net + ("source_power",), 1.0, nonneg=True)
    direct = f.get(net + ("direct_link",), True)
    if not isinstance(direct, bool):
        raise f.error(net + ("direct_link",), "must be true or false")
    try:
        if f.get(net + ("geometry",)) is not None:
            g = net + ("geometry",)
            positions = f.numbers(g + ("relay_positions",), required=True)
            for i, d in enumerate(positions):
                if not 0 < d < 1:
                    raise f.error(g + ("relay_positions", i), "relay position must lie in (0, 1)")
            nu = f.number(g + ("path_loss_exponent",), 3.0)
            geom = Geometry(tuple(positions), nu)
            return NetworkConfig.from_geometry(geom, M, p0, n0, direct_link=direct)
        m_sr = f.numbers(net + ("var_source_relay",), required=True)
        m_rd = f.numbers(net + ("var_relay_dest",), required=True)
        m_sd = f.number(net + ("var_source_dest",), 1.0, nonneg=True)
        return NetworkConfig(len(m_sr), M, p0, n0, m_sd if direct else 0.0, m_sr, m_rd)
    except ConfigError:
        raise
    except ValueError as exc:
        raise f.error(net, str(exc)) from None


def _build_sweep(f):
    sw = ("sweep",)
    if f.get(sw + ("values",)) is not None:
        values = f.numbers(sw + ("values",))
    elif f.get(sw + ("db",)) is not None:
        db = sw + ("db",)
        start = f.number(db + ("start",), required=True)
        stop = f.number(db + ("stop",), required=True)
        num = f.get(db + ("num",), None)
        if isinstance(num, bool) or not isinstance(num, int) or num < 1:
            raise f.error(db + ("num",), "must be a positive integer")
        values = [10 ** (x / 10) for x in np.linspace(start, stop, num)]
    else:
        raise f.error(sw, "give either values or db {start, stop, num}")
    for i, v in enumerate(values):
        if not v > 0:
            raise f.error(sw + ("values", i), "sweep values must be positive")
    return values


def _build_spec(f, seed, trials):
    network = _build_network(f)
    values = _build_sweep(f)

    sets = f.get(("relay_sets",))
    if sets is None:
        relay_sets = [list(range(1, network.n_relays + 1))]
    else:
        if not isinstance(sets, list) or not sets:
            raise f.error(("relay_sets",), "expected a nonempty list of relay index lists")
        relay_sets = []
        for i, s in enumerate(sets):
            if not isinstance(s, list) or not s or any(
                    isinstance(r, bool) or not isinstance(r, int) or not 1 <= r <= network.n_relays
                    for r in s):
                raise f.error(("relay_sets", i),
                              f"expected relay indices in 1..{network.n_relays}")
            relay_sets.append(list(s))

    solvers = f.get(("solvers",), [])
    if not isinstance(solvers, list):
        raise f.error(("solvers",), "expected a list")
    for i, s in enumerate(solvers):
        if s not in SOLVERS:
            raise f.error(("solvers", i), f"unknown solver {s!r}; choose from {SOLVERS}")

    ratios = f.get(("constraints", "p_max_ratio"))
    p_max_abs = f.numbers(("constraints", "p_max"))
    if ratios is None:
        ratios = [math.inf]
    elif not isinstance(ratios, list):
        ratios = [f.number(("constraints", "p_max_ratio"), positive=True)]
    else:
        ratios = [f.number(("constraints", "p_max_ratio", i), positive=True) for i in range(len(ratios))]
    if p_max_abs is not None:
        if len(p_max_abs) != network.n_relays:
            raise f.error(("constraints", "p_max"), f"expected {network.n_relays} caps")
        if any(not v > 0 for v in p_max_abs):
            raise f.error(("constraints", "p_max"), "caps must be positive")

    rule = f.get(("source_power_rule",), FIXED)
    if rule not in (FIXED, EQUAL_SPLIT_TOTAL):
        raise f.error(("source_power_rule",), f"must be {FIXED!r} or {EQUAL_SPLIT_TOTAL!r}")
    split = f.get(("equal_split",), "instantaneous")
    if split not in ("instantaneous", "average"):
        raise f.error(("equal_split",), "must be 'instantaneous' or 'average'")

    plan = None
    if f.get(("validation",)) is not None:
        v = ("validation",)
        n_trials = trials if trials is not None else f.get(v + ("trials",), 10 ** 6)
        plan_seed = seed if seed is not None else f.get(v + ("seed",), 0)
        try:
            plan = TrialPlan(trials=n_trials, seed=plan_seed,
                             estimator=f.get(v + ("estimator",), SEMI_ANALYTIC),
                             shards=f.get(v + ("shards",), 1))
        except (TypeError, ValueError) as exc:
            raise f.error(v, str(exc)) from None

    sc_fields = f.get(("solver_config",), {}) or {}
    if not isinstance(sc_fields, dict):
        raise f.error(("solver_config",), "expected a mapping")
    try:
        sc = alloc.SolverConfig(**sc_fields)
    except (TypeError, ValueError) as exc:
        raise f.error(("solver_config",), str(exc)) from None

    timing = f.get(("timing",), False)
    if not isinstance(timing, bool):
        raise f.error(("timing",), "must be true or false")
    return ExperimentSpec(
        network=network,
        sweep_values=values,
        relay_sets=relay_sets,
        solvers=list(solvers),
        p_max_ratios=ratios,
        p_max_abs=p_max_abs,
        validation=plan,
        source_power_rule=rule,
        equal_split=split,
        solver_config=sc,
        output_path=f.get(("output", "path")),
        timing=timing,
    )


# -- presets ------------------------------------------------------------------

def _reference_network(source_power=1.0):
    return {
        "constellation_size": 4,
        "noise_power": 1.0,
        "source_power": source_power,
        "direct_link": True,
        "geometry": {"relay_positions": list(REFERENCE_POSITIONS), "path_loss_exponent": 3},
    }


PRESETS = {
    # SEP versus total power shared equally by source and relays, with
    # Monte-Carlo validation of the closed form.
    "fig1": {
        "network": _reference_network(),
        "relay_sets": [[1, 3, 5], [1, 2, 3, 4, 5]],
        "sweep": {"db": {"start": 0, "stop": 15, "num": 6}},
        "source_power_rule": EQUAL_SPLIT_TOTAL,
        "equal_split": "instantaneous",
        "solvers": [],
        "validation": {"trials": 1000000, "seed": 20100, "estimator": SEMI_ANALYTIC, "shards": 4},
        "output": {"path": "fig1.csv", "format": "csv"},
    },
    # Exact, approximate and equal allocation with relays 1, 3, 5.
    "fig2": {
        "network": _reference_network(),
        "relay_sets": [[1, 3, 5]],
        "sweep": {"db": {"start": 0, "stop": 35, "num": 8}},
        "source_power_rule": FIXED,
        "constraints": {"p_max_ratio": [1.0, 0.5]},
        "solvers": ["exact", "approx", "equal"],
        "output": {"path": "fig2.csv", "format": "csv"},
    },
    # Same with all five relays.
    "fig3": {
        "network": _reference_network(),
        "relay_sets": [[1, 2, 3, 4, 5]],
        "sweep": {"db": {"start": 0, "stop": 35, "num": 8}},
        "source_power_rule": FIXED,
        "constraints": {"p_max_ratio": [1.0, 0.5]},
        "solvers": ["exact", "approx", "equal"],
        "output": {"path": "fig3.csv", "format": "csv"},
    },
}


def preset_text(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return yaml.safe_dump(PRESETS[name], sort_keys=False, default_flow_style=None)


def preset_spec(name, seed=None, trials=None):
    return load_spec(preset_text(name), seed=seed, trials=trials)


# -- sweep ----------------------------------------------------------------------

def _set_label(relays, ratio, n_ratios):
    label = ";".join(str(r) for r in relays)
    if n_ratios > 1:
        label += f"@pmax={ratio:g}pR"
    return label


def _row(sweep_value, label, solver, n_total):
    row = {"sweep_value": sweep_value, "relay_set": label, "solver": solver}
    for k in range(1, n_total + 1):
        row[f"p_{k}"] = None
    for key in ("nu_prime", "sep_closed_form", "sep_quadrature", "mc_estimate", "mc_stderr",
                "kkt_residual", "duality_gap", "wall_ms"):
        row[key] = None
    return row


def _fill_powers(row, relays, p):
    for r, v in zip(relays, p):
        row[f"p_{r}"] = float(v)


def _validate(row, cfg, p, plan):
    if plan is None:
        return
    est = estimate_sep(cfg, p, plan)
    row["mc_estimate"] = est.value
    row["mc_stderr"] = est.std_error


def _split_powers(total, relays, stats, mode):
    share = total / (len(relays) + 1)
    if mode == "average":
        return share / stats.relay_beta
    return np.full(len(relays), share)


def run_sweep(spec, strict=False):
    """One row per (sweep point, relay set, cap ratio, solver), in that order.

    An infeasible or non-converged point is logged and leaves its row's
    numeric fields empty; with ``strict`` the exception propagates instead.
    """
    if spec.source_power_rule == FIXED and not spec.solvers:
        raise ConfigError("validation without solvers needs source_power_rule: equal_split_total")
    rows = []
    n_total = spec.network.n_relays
    solver_fns = {"exact": lambda st, c: alloc.allocate_exact(st, c, spec.solver_config),
                  "approx": alloc.allocate_approx,
                  "equal": alloc.allocate_equal}
    for value in spec.sweep_values:
        for relays in spec.relay_sets:
            sub = spec.network.subset(relays)
            if spec.source_power_rule == EQUAL_SPLIT_TOTAL:
                p0 = value / (len(relays) + 1)
                sub = sub.with_source_power(p0)
                p_R = value - p0
            else:
                p_R = value
            stats = derive_stats(sub)

            if spec.source_power_rule == EQUAL_SPLIT_TOTAL:
                t0 = time.perf_counter()
                p = _split_powers(value, relays, stats, spec.equal_split)
                row = _row(value, _set_label(relays, 0, 1), EQUAL_SPLIT, n_total)
                _fill_powers(row, relays, p)
                row["sep_closed_form"] = sep_closed_form(stats, p).value
                row["sep_quadrature"] = sep_quadrature(stats, p).value
                _validate(row, sub, p, spec.validation)
                if spec.timing:
                    row["wall_ms"] = 1e3 * (time.perf_counter() - t0)
                rows.append(row)

            for ratio in spec.p_max_ratios:
                label = _set_label(relays, ratio, len(spec.p_max_ratios))
                if spec.p_max_abs is not None:
                    caps = np.array([spec.p_max_abs[r - 1] for r in relays])
                else:
                    caps = np.full(len(relays), ratio * p_R)
                cons = alloc.Constraints(p_R, caps)
                for name in spec.solvers:
                    row = _row(value, label, name, n_total)
                    t0 = time.perf_counter()
                    try:
                        res = solver_fns[name](stats, cons)
                    except (alloc.InfeasibleError, alloc.ConvergenceError) as exc:
                        if strict:
                            raise
                        kind = ("infeasible" if isinstance(exc, alloc.InfeasibleError)
                                else "did not converge")
                        log.warning("sweep value %.6g, relays %s, %s %s: %s",
                                    value, label, name, kind, exc)
                        rows.append(row)
                        continue
                    _fill_powers(row, relays, res.p)
                    if res.solver == alloc.APPROX_KKT:
                        row["nu_prime"] = res.multiplier
                    if res.solver == alloc.EXACT_BARRIER:
                        row["duality_gap"] = res.duality_gap
                    row["sep_closed_form"] = res.sep.value
                    row["sep_quadrature"] = sep_quadrature(stats, res.p).value
                    row["kkt_residual"] = res.kkt_residual
                    _validate(row, sub, res.p, spec.validation)
                    if spec.timing:
                        row["wall_ms"] = 1e3 * (time.perf_counter() - t0)
                    rows.append(row)
    return rows


# -- CSV ----------------------------------------------------------------------------

def columns(n_relays):
    return (["sweep_value", "relay_set", "solver"]
            + [f"p_{k}" for k in range(1, n_relays + 1)]
            + ["nu_prime", "sep_closed_form", "sep_quadrature", "mc_estimate", "mc_stderr",
               "kkt_residual", "duality_gap", "wall_ms"])


_TEXT = ("relay_set", "solver")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return f"{float(v):.12g}"


def format_csv(table, n_relays):
    if not table:
        raise ValueError("table is empty")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    cols = columns(n_relays)
    w.writerow(cols)
    for row in table:
        w.writerow([_fmt(row.get(c)) for c in cols])
    return buf.getvalue()


def emit_csv(table, path, n_relays):
    text = format_csv(table, n_relays)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def parse_csv(text):
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {}
        for k, v in rec.items():
            if k in _TEXT:
                row[k] = v
            else:
                row[k] = float(v) if v != "" else None
        rows.append(row)
    return rows

