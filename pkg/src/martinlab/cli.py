"""Config-driven experiment runner emitting deterministic CSV/SVG artifacts.

A run is described by one JSON file:

    {
      "group": "Z * Z",
      "measure": {"kind": "adapted", "weights": [0.5, 0.5]},
      "kind": "green",
      "params": {"r": [0.5], "x": ["e"], "y": ["a^2"]},
      "budgets": {"wall_seconds": 600, "memory_mb": 4096},
      "seed": 0
    }

The group block is either a spec string or {"factors": ["Z^2", "F_1"]}.
Parameter keys mirror the library's symbols (r, eta, delta, a).  Artifacts
are byte-stable: rows are emitted in grid order regardless of the worker
pool size (MARTINLAB_THREADS), floats are printed with shortest round-trip
repr, and every file embeds the config hash.  Wall-clock timings go to
stderr only, never into artifacts.

Exit codes: 0 success, 2 config/schema error, 3 resource budget exhausted,
4 numerical failure.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, ancona, floyd, groups, measures, parabolic, potential
from .groups import ConfigError, NumericalError, ResourceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RESOURCE = 3
EXIT_NUMERICAL = 4

# subcommand -> canonical experiment kind
COMMAND_KINDS = {
    "green": "green",
    "restricted": "restricted",
    "radius": "spectral-radius",
    "floyd": "floyd",
    "ancona": "ancona",
    "parabolic": "parabolic",
    "degenerate": "degenerate",
    "llt": "llt",
    "derivative": "derivative",
    "spheres": "sphere-sum",
}

PLOT_KINDS = {
    "green": "decay",
    "restricted": "decay",
    "spectral-radius": "decay",
    "floyd": "decay",
    "ancona": "decay",
    "parabolic": "lambda-slice",
    "degenerate": "lambda-slice",
    "llt": "llt-fit",
    "derivative": "decay",
    "sphere-sum": "decay",
}

_ALLOWED_TOP = {"group", "measure", "kind", "params", "budgets", "seed", "out"}
_ALLOWED_BUDGETS = {"wall_seconds", "memory_mb"}
_ALLOWED_PARAMS = {
    "green": {"r", "x", "y", "n_max"},
    "restricted": {"r", "x", "y", "window", "method"},
    "spectral-radius": {"n_max"},
    "floyd": {"a", "radius", "pairs"},
    "ancona": {"r_factors", "lengths", "defect_n", "delta", "floyd_a"},
    "parabolic": {"factor", "eta", "r", "r_frac", "box_radius", "ball_radius",
                  "defect_budget"},
    "degenerate": {"factor", "eta", "eps_ladder", "ball_radius",
                   "defect_budget"},
    "llt": {"factor", "r", "n_max", "laziness"},
    "derivative": {"r", "r_frac", "x", "y", "fd_step", "ball_radius"},
    "sphere-sum": {"r", "r_frac", "k"},
}


@dataclass
class RunReport:
    """In-memory result of one experiment; artifacts derive from it.

    Everything that reaches a file is deterministic for a fixed effective
    config; wall_seconds stays in memory / on stderr.
    """

    kind: str
    config_hash: str
    columns: tuple
    rows: list
    verdicts: list
    summary: dict = field(default_factory=dict)
    plot: dict = field(default_factory=dict)
    wall_seconds: float = 0.0
    version: str = __version__


def config_digest(cfg):
    """Hash of the effective config; embedded in every artifact."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _fail(msg):
    raise ConfigError(msg)


def _require_list(params, key, kind, types):
    if key not in params:
        _fail(f"{kind}: params.{key} is required")
    val = params[key]
    if not isinstance(val, list) or not val:
        _fail(f"{kind}: params.{key} must be a nonempty list")
    for item in val:
        if not isinstance(item, types):
            _fail(f"{kind}: params.{key} entries must be {types}")
    return val


def _opt_list(params, key, kind, types, default):
    if key not in params:
        return default
    val = params[key]
    if not isinstance(val, list) or not val:
        _fail(f"{kind}: params.{key} must be a nonempty list")
    for item in val:
        if not isinstance(item, types):
            _fail(f"{kind}: params.{key} entries must be {types}")
    return val


def validate_config(cfg):
    """Schema check; raises ConfigError before any work or file output."""
    if not isinstance(cfg, dict):
        _fail("config must be a JSON object")
    unknown = set(cfg) - _ALLOWED_TOP
    if unknown:
        _fail(f"unknown config keys: {sorted(unknown)}")
    for key in ("group", "measure", "kind"):
        if key not in cfg:
            _fail(f"config key '{key}' is required")
    kind = cfg["kind"]
    if kind not in _ALLOWED_PARAMS:
        _fail(f"unknown experiment kind {kind!r}; "
              f"expected one of {sorted(_ALLOWED_PARAMS)}")
    group = cfg["group"]
    if isinstance(group, dict):
        factors = group.get("factors")
        if set(group) - {"factors"} or not isinstance(factors, list) \
                or not factors:
            _fail("group block must be a spec string or "
                  "{\"factors\": [...]} with a nonempty list")
    elif not isinstance(group, str):
        _fail("group block must be a spec string or {\"factors\": [...]}")
    m = cfg["measure"]
    if not isinstance(m, dict) or "kind" not in m:
        _fail("measure block must be an object with a 'kind' key")
    params = cfg.get("params", {})
    if not isinstance(params, dict):
        _fail("params must be an object")
    unknown = set(params) - _ALLOWED_PARAMS[kind]
    if unknown:
        _fail(f"{kind}: unknown params {sorted(unknown)}; "
              f"allowed: {sorted(_ALLOWED_PARAMS[kind])}")
    budgets = cfg.get("budgets", {})
    if not isinstance(budgets, dict) or set(budgets) - _ALLOWED_BUDGETS:
        _fail(f"budgets keys must be within {sorted(_ALLOWED_BUDGETS)}")
    for key, val in budgets.items():
        if not isinstance(val, (int, float)) or not val > 0:
            _fail(f"budget {key} must be positive")
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int):
        _fail("seed must be an integer")


def _group_string(group):
    if isinstance(group, str):
        return group
    return " * ".join(group["factors"])


def _make_measure(spec, block):
    kwargs = dict(block)
    kind = kwargs.pop("kind")
    try:
        return measures.make_measure(spec, kind=kind, **kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad measure block: {exc}") from exc


def _threads():
    raw = os.environ.get("MARTINLAB_THREADS", "1") or "1"
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"MARTINLAB_THREADS={raw!r} is not an integer") from exc


def _grid_eval(cells, fn, ctx):
    """Evaluate fn over cells; output order is grid order, not completion
    order.  The wall budget is checked before each cell starts."""

    def guarded(item):
        if time.monotonic() > ctx["deadline"]:
            raise ResourceError("wall-time budget exhausted")
        return fn(*item)

    indexed = list(enumerate(cells))
    threads = _threads()
    if threads == 1 or len(indexed) <= 1:
        return [guarded(item) for item in indexed]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(guarded, indexed))


def _word(spec, text):
    if not isinstance(text, str):
        _fail(f"expected a word string, got {text!r}")
    return groups.str_to_word(spec, text)


def _resolve_r(params, ctx, kind, default=None):
    """Absolute r grid, or r_frac grid scaled by the radius lower bound."""
    if "r" in params and "r_frac" in params:
        _fail(f"{kind}: give either r or r_frac, not both")
    if "r" in params:
        return [float(v) for v in
                _require_list(params, "r", kind, (int, float))]
    if "r_frac" in params:
        fracs = _require_list(params, "r_frac", kind, (int, float))
        if ctx.get("R_lower") is None:
            ctx["R_lower"] = potential.spectral_radius(ctx["mu"]).lower
        return [float(f) * ctx["R_lower"] for f in fracs]
    if default is not None:
        return default
    _fail(f"{kind}: params.r (or r_frac) is required")


# ---------------------------------------------------------------------------
# experiment runners: each returns (columns, rows, verdicts, summary, plot)


def _run_green(ctx):
    spec, mu, params = ctx["spec"], ctx["mu"], ctx["params"]
    rs = [float(v) for v in _require_list(params, "r", "green", (int, float))]
    xs = _opt_list(params, "x", "green", str, ["e"])
    ys = _opt_list(params, "y", "green", str, ["e"])
    n_max = params.get("n_max")
    cells = [(r, x, y) for r in rs for x in xs for y in ys]

    def fn(_, cell):
        r, x, y = cell
        est = potential.green(mu, r, _word(spec, x), _word(spec, y),
                              n_max=n_max)
        return (r, x, y, est.lower, est.upper, est.width,
                est.n_truncation, est.certified)

    rows = _grid_eval(cells, fn, ctx)
    width = max(row[5] for row in rows)
    summary = {"max_width": width, "all_certified": all(row[7] for row in rows)}
    verdicts = [f"green: {len(rows)} brackets, max width {width:.3g}"]
    plot = {"x": [row[0] for row in rows],
            "y": [math.log10(max(0.5 * (row[3] + row[4]), 1e-300))
                  for row in rows],
            "xlabel": "r", "ylabel": "log10 G", "title": "Green brackets"}
    return (("r", "x", "y", "lower", "upper", "width", "n_truncation",
             "certified"), rows, verdicts, summary, plot)


def _run_restricted(ctx):
    spec, mu, params = ctx["spec"], ctx["mu"], ctx["params"]
    rs = [float(v) for v in
          _require_list(params, "r", "restricted", (int, float))]
    xs = _opt_list(params, "x", "restricted", str, ["e"])
    ys = _opt_list(params, "y", "restricted", str, ["e"])
    windows = _require_list(params, "window", "restricted", int)
    method = params.get("method", "solve")
    balls = {w: groups.ball_elements(spec, w) for w in sorted(set(windows))}
    cells = [(r, x, y, w) for r in rs for x in xs for y in ys for w in windows]

    def fn(_, cell):
        r, x, y, w = cell
        est = potential.green_restricted(mu, r, _word(spec, x),
                                         _word(spec, y), balls[w],
                                         method=method)
        return (r, x, y, w, est.lower, est.upper, est.certified)

    rows = _grid_eval(cells, fn, ctx)
    summary = {"n_rows": len(rows)}
    verdicts = [f"restricted: {len(rows)} brackets over "
                f"{len(windows)} windows"]
    plot = {"x": [row[3] for row in rows],
            "y": [math.log10(max(row[4], 1e-300)) for row in rows],
            "xlabel": "window", "ylabel": "log10 G_restricted",
            "title": "Restricted Green"}
    return (("r", "x", "y", "window", "lower", "upper", "certified"),
            rows, verdicts, summary, plot)


def _run_radius(ctx):
    mu, params = ctx["mu"], ctx["params"]
    n_list = _opt_list(params, "n_max", "spectral-radius", int, [60])
    cells = [(n,) for n in n_list]

    def fn(_, cell):
        (n,) = cell
        est = potential.spectral_radius(mu, n_max=n)
        return (n, est.lower, est.upper, est.upper - est.lower,
                est.rho_lower, est.meta.get("route", ""))

    rows = _grid_eval(cells, fn, ctx)
    best = min(row[3] for row in rows)
    summary = {"best_width": best}
    verdicts = [f"spectral-radius: best bracket width {best:.3g}"]
    plot = {"x": [float(row[0]) for row in rows],
            "y": [row[2] for row in rows],
            "xlabel": "n_max", "ylabel": "R upper",
            "title": "Spectral radius bracket"}
    return (("n_max", "lower", "upper", "width", "rho_lower", "route"),
            rows, verdicts, summary, plot)


def _run_floyd(ctx):
    spec, params = ctx["spec"], ctx["params"]
    a_list = [float(v) for v in
              _opt_list(params, "a", "floyd", (int, float), [2.0])]
    radius = params.get("radius", 8)
    if not isinstance(radius, int) or radius < 1:
        _fail("floyd: params.radius must be a positive integer")
    pairs = _require_list(params, "pairs", "floyd", list)
    for pair in pairs:
        if len(pair) != 2 or not all(isinstance(p, str) for p in pair):
            _fail("floyd: params.pairs entries must be [x, y] word strings")
    cells = [(a, x, y) for a in a_list for x, y in pairs]

    def fn(_, cell):
        a, x, y = cell
        cfg = floyd.FloydConfig(spec, a=a, radius=radius)
        wx, wy = _word(spec, x), _word(spec, y)
        fv = floyd.floyd_distance(cfg, wx, wy)
        lhs, rhs = floyd.visibility_bound_check(cfg, wx, wy)
        return (a, x, y, fv.value, fv.exact, fv.crossing_bound,
                lhs, rhs, lhs <= rhs + 1e-12)

    rows = _grid_eval(cells, fn, ctx)
    ok = all(row[8] for row in rows)
    summary = {"visibility_all_ok": ok,
               "exact_fraction": sum(row[4] for row in rows) / len(rows)}
    verdicts = [f"floyd: visibility bound "
                f"{'holds on all' if ok else 'VIOLATED on some'} "
                f"{len(rows)} rows"]
    plot = {"x": list(range(len(rows))),
            "y": [row[3] for row in rows],
            "xlabel": "row", "ylabel": "Floyd distance",
            "title": "Floyd distances"}
    return (("a", "x", "y", "value", "exact", "crossing_bound",
             "visibility_lhs", "visibility_rhs", "visibility_ok"),
            rows, verdicts, summary, plot)


def _run_ancona(ctx):
    params = ctx["params"]
    scan_cfg = {"group": ctx["group_str"], "measure": ctx["measure_block"]}
    for key in ("r_factors", "lengths", "defect_n", "delta", "floyd_a"):
        if key in params:
            scan_cfg[key] = params[key]
    if time.monotonic() > ctx["deadline"]:
        raise ResourceError("wall-time budget exhausted")
    report = ancona.relative_ancona_scan(scan_cfg)
    rows = [(row["config"], row["kind"], row["r"], row["param"],
             row["lower"], row["upper"], row["certified"])
            for row in report.rows]
    summary = dict(report.summary)
    verdicts = []
    if "C_bound" in summary:
        verdicts.append(f"ancona: weak constant C <= {summary['C_bound']:.4g}")
    if "defect_slope" in summary:
        verdicts.append(
            f"ancona: strong defect log-slope {summary['defect_slope']:.4g}")
    strong = [(row[3], row[5]) for row in rows
              if row[1] == "strong" and row[5] > 0]
    plot = {"x": [float(n) for n, _ in strong],
            "y": [math.log10(d) for _, d in strong],
            "xlabel": "fellow-travel n", "ylabel": "log10 defect",
            "title": "Strong Ancona decay"}
    return (("config", "kind", "r", "param", "lower", "upper", "certified"),
            rows, verdicts, summary, plot)


def _run_parabolic(ctx):
    spec, mu, params = ctx["spec"], ctx["mu"], ctx["params"]
    factor = params.get("factor", 0)
    etas = _opt_list(params, "eta", "parabolic", int, [0])
    rs = _resolve_r(params, ctx, "parabolic")
    kw = {k: params[k] for k in ("box_radius", "ball_radius", "defect_budget")
          if k in params}
    cells = [(r, eta) for r in rs for eta in etas]
    stash = {}

    def fn(i, cell):
        r, eta = cell
        kern = parabolic.first_return_kernel(mu, factor, eta, r, **kw)
        row_mass = float(kern.p.reshape(kern.n_sheets, -1).sum(axis=1).max())
        rel_defect = float(kern.defect.max() / max(row_mass, 1e-300))
        lm = parabolic.lambda_min(kern)
        if i == 0:
            stash["kern"] = kern
        u_star = ";".join(repr(float(c)) for c in lm.u)
        return (factor, eta, r, kern.n_sheets, row_mass, rel_defect,
                kern.certified, lm.value, u_star, lm.grad_norm,
                lm.hessian_pd)

    rows = _grid_eval(cells, fn, ctx)
    lam_max = max(row[7] for row in rows)
    summary = {"lambda_min_max": lam_max,
               "max_rel_defect": max(row[5] for row in rows)}
    verdicts = [f"parabolic: {len(rows)} kernels, "
                f"largest min-lambda {lam_max:.6f}"]
    xs, ys = [], []
    kern = stash.get("kern")
    if kern is not None:
        for s in np.linspace(-1.0, 1.0, 41):
            u = np.zeros(kern.d)
            u[0] = s
            try:
                ys.append(parabolic.lambda_at(kern, u, order=0).value)
                xs.append(float(s))
            except (ConfigError, NumericalError):
                continue
    plot = {"x": xs, "y": ys, "xlabel": "u along first axis",
            "ylabel": "lambda(u)", "title": "Eigenvalue slice"}
    return (("factor", "eta", "r", "n_sheets", "row_mass", "rel_defect",
             "certified", "lambda_min", "u_star", "grad_norm", "hessian_pd"),
            rows, verdicts, summary, plot)


def _run_degenerate(ctx):
    mu, params = ctx["mu"], ctx["params"]
    factors = _opt_list(params, "factor", "degenerate", int, [0])
    etas = _opt_list(params, "eta", "degenerate", int, [0])
    ladder = params.get("eps_ladder")
    if ladder is not None:
        ladder = tuple(float(e) for e in ladder)
        if not all(0 < e < 1 for e in ladder):
            _fail("degenerate: eps_ladder entries must lie in (0, 1)")
    kw = {k: params[k] for k in ("ball_radius", "defect_budget")
          if k in params}
    cells = [(f, eta) for f in factors for eta in etas]

    def fn(_, cell):
        f, eta = cell
        kwargs = dict(kw)
        if ladder is not None:
            kwargs["eps_ladder"] = ladder
        v = parabolic.is_spectrally_degenerate(mu, f, eta, **kwargs)
        rung = "|".join(
            f"{eps!r}:{lam!r}:{def_!r}" for eps, _, lam, def_ in v.ladder)
        return (f, eta, v.factor_rank, v.verdict, v.extrapolated,
                v.tolerance, 1.0 - v.extrapolated, rung)

    rows = _grid_eval(cells, fn, ctx)
    worst = min(row[6] for row in rows)
    summary = {"verdicts": sorted({row[3] for row in rows}),
               "smallest_margin": worst}
    verdicts = [f"degenerate: factor {row[0]} eta {row[1]} rank {row[2]} "
                f"-> {row[3]}" for row in rows]
    first = rows[0]
    xs = [math.sqrt(float(part.split(":")[0]))
          for part in first[7].split("|")]
    ys = [float(part.split(":")[1]) for part in first[7].split("|")]
    plot = {"x": xs, "y": ys, "xlabel": "sqrt(eps)",
            "ylabel": "min lambda", "title": "Degenerescence ladder"}
    return (("factor", "eta", "rank", "verdict", "extrapolated",
             "tolerance", "margin", "ladder"),
            rows, verdicts, summary, plot)


def _run_llt(ctx):
    mu, params = ctx["mu"], ctx["params"]
    factor = params.get("factor", 0)
    r = params.get("r", 1.0)
    if not isinstance(r, (int, float)) or not r > 0:
        _fail("llt: params.r must be a positive number")
    n_list = _opt_list(params, "n_max", "llt", int, [400])
    lz_list = [float(v) for v in
               _opt_list(params, "laziness", "llt", (int, float), [0.5])]
    cells = [(n, lz) for n in n_list for lz in lz_list]
    stash = {}

    def fn(i, cell):
        n, lz = cell
        kern = parabolic.first_return_kernel(mu, factor, 0, float(r))
        fit = parabolic.local_limit_exponent(kern, n_max=n, laziness=lz)
        if i == 0:
            stash["fit"] = fit
        return (n, lz, fit.exponent, fit.band, fit.intercept, fit.route,
                fit.leak, fit.n_range[0], fit.n_range[1])

    rows = _grid_eval(cells, fn, ctx)
    summary = {"exponents": [row[2] for row in rows]}
    verdicts = [f"llt: n_max {row[0]} laziness {row[1]} -> "
                f"exponent {row[2]:.4f} (band {row[3]:.4f})" for row in rows]
    fit = stash.get("fit")
    xs, ys = [], []
    fit_line = None
    annotation = ""
    if fit is not None:
        diag = np.asarray(fit.diagonal)
        ns = np.arange(len(diag))
        keep = (ns >= 1) & (diag > 0)
        ns, dvals = ns[keep], diag[keep]
        stride = max(1, len(ns) // 160)
        xs = [math.log(float(n)) for n in ns[::stride]]
        ys = [math.log(float(v)) for v in dvals[::stride]]
        fit_line = (fit.exponent, fit.intercept)
        annotation = f"slope {fit.exponent:.4f}"
    plot = {"x": xs, "y": ys, "xlabel": "log n", "ylabel": "log p_n(e,e)",
            "title": "Local limit fit", "fit": fit_line,
            "annotation": annotation}
    return (("n_max", "laziness", "exponent", "band", "intercept", "route",
             "leak", "n_lo", "n_hi"), rows, verdicts, summary, plot)


def _run_derivative(ctx):
    spec, mu, params = ctx["spec"], ctx["mu"], ctx["params"]
    rs = _resolve_r(params, ctx, "derivative")
    x = params.get("x", "e")
    y = params.get("y", "e")
    kw = {}
    if "fd_step" in params:
        kw["fd_step"] = float(params["fd_step"])
    if "ball_radius" in params:
        kw["ball_radius"] = params["ball_radius"]
    cells = [(r,) for r in rs]

    def fn(_, cell):
        (r,) = cell
        pair = potential.green_derivative(mu, r, _word(spec, x),
                                          _word(spec, y), **kw)
        fd, ds = pair.finite_difference, pair.double_sum
        return (r, x, y, fd.lower, fd.upper, ds.lower, ds.upper,
                pair.overlap, pair.gap)

    rows = _grid_eval(cells, fn, ctx)
    all_overlap = all(row[7] for row in rows)
    summary = {"all_overlap": all_overlap,
               "max_gap": max(row[8] for row in rows)}
    verdicts = [f"derivative: identity brackets "
                f"{'overlap on all' if all_overlap else 'FAIL on some'} "
                f"{len(rows)} rows"]
    plot = {"x": [row[0] for row in rows],
            "y": [0.5 * (row[5] + row[6]) for row in rows],
            "xlabel": "r", "ylabel": "d/dr (r G_r)",
            "title": "Green derivative identity"}
    return (("r", "x", "y", "fd_lower", "fd_upper", "sum_lower",
             "sum_upper", "overlap", "gap"), rows, verdicts, summary, plot)


def _run_spheres(ctx):
    mu, params = ctx["mu"], ctx["params"]
    rs = _resolve_r(params, ctx, "sphere-sum")
    ks = _opt_list(params, "k", "sphere-sum", int, list(range(1, 11)))
    cells = [(r, k) for r in rs for k in ks]

    def fn(_, cell):
        r, k = cell
        est = potential.sphere_green_sum(mu, r, k)
        return (r, k, est.lower, est.upper)

    rows = _grid_eval(cells, fn, ctx)
    verdicts = []
    summary = {}
    for r in rs:
        pts = [(row[1], row[3]) for row in rows if row[0] == r and row[3] > 0]
        if len(pts) >= 2:
            ks_f = [float(k) for k, _ in pts]
            logs = [math.log(u) for _, u in pts]
            n = len(ks_f)
            mx = sum(ks_f) / n
            my = sum(logs) / n
            den = sum((k - mx) ** 2 for k in ks_f)
            slope = sum((k - mx) * (v - my)
                        for k, v in zip(ks_f, logs)) / den
            summary[f"log_slope_r={r!r}"] = slope
            verdicts.append(f"sphere-sum: r {r:.6g} log-slope {slope:.4g}")
    plot = {"x": [float(row[1]) for row in rows],
            "y": [math.log10(max(row[3], 1e-300)) for row in rows],
            "xlabel": "k", "ylabel": "log10 u_k",
            "title": "Sphere Green sums"}
    return (("r", "k", "lower", "upper"), rows, verdicts, summary, plot)


RUNNERS = {
    "green": _run_green,
    "restricted": _run_restricted,
    "spectral-radius": _run_radius,
    "floyd": _run_floyd,
    "ancona": _run_ancona,
    "parabolic": _run_parabolic,
    "degenerate": _run_degenerate,
    "llt": _run_llt,
    "derivative": _run_derivative,
    "sphere-sum": _run_spheres,
}


def run_experiment(cfg):
    """Validate, dispatch over the grid, and collect a RunReport."""
    validate_config(cfg)
    t0 = time.monotonic()
    digest = config_digest(cfg)
    group_str = _group_string(cfg["group"])
    spec = groups.GroupSpec.parse(group_str)
    mu = _make_measure(spec, cfg["measure"])
    budgets = cfg.get("budgets", {})
    ctx = {
        "spec": spec,
        "mu": mu,
        "params": cfg.get("params", {}),
        "group_str": group_str,
        "measure_block": cfg["measure"],
        "seed": cfg.get("seed", 0),
        "deadline": t0 + float(budgets.get("wall_seconds", 600.0)),
        "R_lower": None,
    }
    columns, rows, verdicts, summary, plot = RUNNERS[cfg["kind"]](ctx)
    return RunReport(kind=cfg["kind"], config_hash=digest, columns=columns,
                     rows=rows, verdicts=verdicts, summary=summary,
                     plot=plot, wall_seconds=time.monotonic() - t0)


# ---------------------------------------------------------------------------
# artifacts


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(report, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config {report.config_hash}\n")
        fh.write(f"# martinlab {report.version}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(report.columns)
        for row in report.rows:
            writer.writerow([_fmt(v) for v in row])


def _json_safe(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    return value


def write_summary(report, path):
    doc = {
        "kind": report.kind,
        "config": report.config_hash,
        "version": report.version,
        "n_rows": len(report.rows),
        "verdicts": report.verdicts,
        "summary": _json_safe(report.summary),
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _svg_header(config_hash, title):
    return [
        '<svg xmlns="http://www.w3.org/2000/svg" width="640" height="420" '
        'viewBox="0 0 640 420" font-family="monospace" font-size="12">',
        f"<!-- config {config_hash} -->",
        '<rect x="0" y="0" width="640" height="420" fill="white"/>',
        f'<text x="320" y="22" text-anchor="middle" font-size="14">'
        f"{title}</text>",
    ]


def _render_svg(plot, config_hash, plot_kind):
    xs = [float(v) for v in plot.get("x", [])]
    ys = [float(v) for v in plot.get("y", [])]
    title = plot.get("title", plot_kind)
    out = _svg_header(config_hash, title)
    left, right, top, bottom = 70.0, 610.0, 40.0, 370.0
    out.append(f'<line x1="{left}" y1="{bottom}" x2="{right}" '
               f'y2="{bottom}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" '
               f'y2="{bottom}" stroke="black"/>')
    out.append(f'<text x="{0.5 * (left + right):.2f}" y="405" '
               f'text-anchor="middle">{plot.get("xlabel", "")}</text>')
    out.append(f'<text x="16" y="{0.5 * (top + bottom):.2f}" '
               f'text-anchor="middle" transform="rotate(-90 16 '
               f'{0.5 * (top + bottom):.2f})">{plot.get("ylabel", "")}'
               f"</text>")
    if not xs or not ys:
        out.append(f'<text x="{0.5 * (left + right):.2f}" '
                   f'y="{0.5 * (top + bottom):.2f}" text-anchor="middle" '
                   f'fill="gray">no rows</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi - x_lo < 1e-12:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5

    def px(x):
        return left + (x - x_lo) / (x_hi - x_lo) * (right - left)

    def py(y):
        return bottom - (y - y_lo) / (y_hi - y_lo) * (bottom - top)

    for t in range(5):
        xv = x_lo + t * (x_hi - x_lo) / 4
        yv = y_lo + t * (y_hi - y_lo) / 4
        out.append(f'<line x1="{px(xv):.2f}" y1="{bottom}" '
                   f'x2="{px(xv):.2f}" y2="{bottom + 5:.2f}" stroke="black"/>')
        out.append(f'<text x="{px(xv):.2f}" y="{bottom + 18:.2f}" '
                   f'text-anchor="middle">{xv:.4g}</text>')
        out.append(f'<line x1="{left - 5:.2f}" y1="{py(yv):.2f}" '
                   f'x2="{left}" y2="{py(yv):.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8:.2f}" y="{py(yv) + 4:.2f}" '
                   f'text-anchor="end">{yv:.4g}</text>')
    pairs = sorted(zip(xs, ys))
    if plot_kind != "llt-fit" and len(pairs) > 1:
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pairs)
        out.append(f'<polyline points="{pts}" fill="none" '
                   f'stroke="steelblue" stroke-width="1.5"/>')
    for x, y in pairs:
        out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" '
                   f'fill="steelblue"/>')
    fit = plot.get("fit")
    if fit is not None:
        slope, intercept = fit
        y0, y1 = intercept + slope * x_lo, intercept + slope * x_hi
        out.append(f'<line x1="{px(x_lo):.2f}" y1="{py(y0):.2f}" '
                   f'x2="{px(x_hi):.2f}" y2="{py(y1):.2f}" '
                   f'stroke="firebrick" stroke-dasharray="6 3"/>')
    annotation = plot.get("annotation", "")
    if annotation:
        out.append(f'<text x="{right:.2f}" y="{top + 14:.2f}" '
                   f'text-anchor="end" fill="firebrick">{annotation}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plots(report, path, plot_kind=None):
    """Render the report's plot payload as a static SVG."""
    expected = PLOT_KINDS[report.kind]
    if plot_kind is not None and plot_kind != expected:
        raise ConfigError(
            f"plot kind {plot_kind!r} does not match report kind "
            f"{report.kind!r} (expected {expected!r})")
    svg = _render_svg(report.plot, report.config_hash, expected)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(svg)


# ---------------------------------------------------------------------------
# entry point


def _load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def build_parser():
    parser = argparse.ArgumentParser(
        prog="martinlab",
        description="random-walk potential theory experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMAND_KINDS:
        p = sub.add_parser(command, help=f"run a {COMMAND_KINDS[command]} "
                                         f"experiment")
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--svg", action="store_true",
                       help="also render the SVG plot")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    kind = COMMAND_KINDS[args.command]
    try:
        cfg = _load_config(args.config)
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        cfg.setdefault("kind", kind)
        if cfg["kind"] != kind:
            raise ConfigError(
                f"config kind {cfg['kind']!r} does not match "
                f"subcommand {args.command!r} ({kind!r})")
        if args.seed is not None:
            cfg["seed"] = args.seed
        report = run_experiment(cfg)
        out_dir = args.out
        os.makedirs(out_dir, exist_ok=True)
        base = os.path.join(out_dir, args.command)
        write_csv(report, base + ".csv")
        write_summary(report, base + "_summary.json")
        if args.svg:
            emit_plots(report, base + ".svg")
        for line in report.verdicts:
            print(line)
        print(f"# {args.command}: {len(report.rows)} rows in "
              f"{report.wall_seconds:.2f}s", file=sys.stderr)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
