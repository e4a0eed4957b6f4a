"""Command-line front end.

Every command reads one JSON config (unknown fields are rejected), writes
``report.json`` (byte-identical across reruns with the same config) and,
for tabular results, ``report.csv``.  Run metadata such as the timestamp
and the kernel backend goes to ``meta.json``.

Exit status: 0 when the command's checks pass, 1 when a hard check fails,
2 for an invalid config.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .coupling import PlanError, build_plan
from .estimate import (Estimate, girsanov_identity_check, gradient_report, make_functional)
from .matops import GramianError, gramian, kalman_rank
from .model import ModelFileError, Segment, load_model
from .simulate import SimGrid, simulate_many
from . import verify

SCHEMA_VERSION = "1.0"

COMMON = {"model", "T", "r0", "dt", "n_paths", "seed", "xi", "h", "f"}
COMMANDS = {
    "gramian": {"model", "T", "r0", "dt", "quad_step"},
    "plan": {"model", "T", "r0", "dt", "h"},
    "simulate": COMMON,
    "gradient": COMMON | {"eps_fd", "control_variate"},
    "girsanov-check": COMMON | {"eps"},
    "verify-assumptions": {"model", "r0", "assumptions", "grid", "lambda", "eps_param", "n_segments",
                           "segment_seed"},
    "moment-bound": {"model", "r0", "dt", "n_paths", "seed", "xi", "t_list"},
    "log-harnack": COMMON | {"h_scales"},
    "harnack": COMMON | {"p", "p_list"},
    "gradient-bound-sweep": {"model", "r0", "dt", "n_paths", "seed", "xi", "h", "f", "taus", "T",
                             "r_values"},
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---------------------------------------------------------------------------
# Config parsing


def _get(cfg, key, kind, default=None, required=False):
    if key not in cfg:
        if required:
            raise ConfigError(f"config.{key}", "missing field")
        return default
    value = cfg[key]
    try:
        if kind is int:
            if isinstance(value, bool) or int(value) != value:
                raise ValueError
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise ValueError
            out = float(value)
            if not math.isfinite(out):
                raise ValueError
            return out
        if kind is bool:
            if not isinstance(value, bool):
                raise ValueError
            return value
    except (TypeError, ValueError):
        raise ConfigError(f"config.{key}", f"expected {kind.__name__}, got {value!r}") from None
    return value


def _float_list(cfg, key, default):
    value = cfg.get(key, default)
    if not isinstance(value, list) or not value:
        raise ConfigError(f"config.{key}", "expected a non-empty list of numbers")
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"config.{key}", "expected numbers") from None


def _segment(spec, r0, n_hist, dim, path):
    """``[v...]`` or ``{"constant": [v...]}`` or ``{"values": [[...], ...]}`` (uniform grid)."""
    try:
        if isinstance(spec, (int, float)) and not isinstance(spec, bool):
            spec = [spec] * dim
        if isinstance(spec, list):
            spec = {"constant": spec}
        if not isinstance(spec, dict):
            raise ValueError("expected a list or an object")
        extra = set(spec) - {"constant", "values"}
        if extra:
            raise ConfigError(f"{path}.{sorted(extra)[0]}", "unknown field")
        if ("constant" in spec) == ("values" in spec):
            raise ValueError("give exactly one of 'constant' or 'values'")
        if "constant" in spec:
            vec = np.asarray(spec["constant"], dtype=float).reshape(-1)
            if vec.size != dim:
                raise ValueError(f"expected {dim} components")
            return Segment.constant(r0, n_hist, vec)
        vals = np.asarray(spec["values"], dtype=float)
        if vals.ndim != 2 or vals.shape[1] != dim or vals.shape[0] < 2:
            raise ValueError(f"expected a (k, {dim}) array with k >= 2")
        seg = Segment(r0, vals)
        return seg.resample(n_hist)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def _functional(spec):
    if spec is None:
        return make_functional("y_T")
    if isinstance(spec, str):
        spec = {"name": spec}
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError("config.f", "expected a name or {\"name\": ..., params}")
    params = {k: v for k, v in spec.items() if k != "name"}
    try:
        return make_functional(spec["name"], **params)
    except KeyError as exc:
        raise ConfigError("config.f", str(exc.args[0])) from None


class Context:
    """Validated config plus the objects built from it."""

    def __init__(self, command: str, cfg: dict):
        if not isinstance(cfg, dict):
            raise ConfigError("config", "expected a JSON object")
        allowed = COMMANDS[command]
        extra = set(cfg) - allowed
        if extra:
            raise ConfigError(f"config.{sorted(extra)[0]}", f"unknown field for '{command}'")
        self.cfg = cfg
        model_src = cfg.get("model")
        if model_src is None:
            raise ConfigError("config.model", "missing field")
        r0 = _get(cfg, "r0", float)
        if r0 is not None and isinstance(model_src, str) and model_src in ("4.1", "4.2", "ou"):
            model_src = {"example": model_src, "r0": r0}
        try:
            self.model, self.suite = load_model(model_src, "config.model")
        except ModelFileError as exc:
            raise ConfigError(exc.path, str(exc).split(": ", 1)[-1]) from None
        if r0 is not None and not math.isclose(r0, self.model.r0):
            raise ConfigError("config.r0", "does not match the model's r0")
        self.r0 = self.model.r0
        self.dt = _get(cfg, "dt", float, 0.005)
        if not self.dt > 0:
            raise ConfigError("config.dt", "must be positive")
        self.n_hist = self._multiple(self.r0, "r0")
        self.T = _get(cfg, "T", float)
        if self.T is not None:
            if not self.T > self.r0:
                raise ConfigError("config.T", "must exceed r0")
            self._multiple(self.T, "T")
        self.n_paths = _get(cfg, "n_paths", int, 1000)
        if self.n_paths < 2:
            raise ConfigError("config.n_paths", "must be >= 2")
        self.seed = _get(cfg, "seed", int, 0)
        if self.seed < 0:
            raise ConfigError("config.seed", "must be non-negative")
        dim = self.model.dim
        self.xi = _segment(cfg.get("xi", [1.0] * dim), self.r0, self.n_hist, dim, "config.xi")
        self.h = _segment(cfg.get("h", [1.0] * dim), self.r0, self.n_hist, dim, "config.h")
        self.f = _functional(cfg.get("f"))

    def _multiple(self, value, name):
        n = int(round(value / self.dt))
        if n < 1 or abs(n * self.dt - value) > 1e-9 * max(1.0, value):
            raise ConfigError(f"config.{name}", f"{value} is not an integer multiple of dt={self.dt}")
        return n

    def require_T(self):
        if self.T is None:
            raise ConfigError("config.T", "missing field")
        return self.T

    def grid(self, T=None):
        return SimGrid.from_times(T if T is not None else self.require_T(), self.r0, self.dt)


# ---------------------------------------------------------------------------
# Commands: each returns (results dict, csv (header, rows) or None, passed)


def cmd_gramian(ctx: Context, threads: int):
    T = ctx.require_T()
    tau = T - ctx.r0
    step = _get(ctx.cfg, "quad_step", float, ctx.dt)
    kr = kalman_rank(ctx.model.a, ctx.model.mm)
    out = {"model": ctx.model.describe(), "tau": tau, "quad_step": step,
           "kalman": {"rank": kr.rank, "k_star": kr.k_star, "satisfied": kr.satisfied}}
    try:
        g = gramian(ctx.model.a, ctx.model.mm, tau, tau, step)
    except GramianError as exc:
        out["error"] = str(exc)
        return out, None, False
    except ValueError as exc:
        raise ConfigError("config.quad_step", str(exc)) from None
    out.update({"q": g.q.tolist(), "inverse": g.inverse.tolist(),
                "condition_estimate": g.condition_estimate, "bound_ratio": g.bound_ratio})
    return out, None, True


def cmd_plan(ctx: Context, threads: int):
    T = ctx.require_T()
    try:
        plan = build_plan(ctx.model, T, ctx.h, ctx.grid())
    except (PlanError, GramianError) as exc:
        return {"model": ctx.model.describe(), "error": str(exc)}, None, False
    out = {"model": ctx.model.describe(), "plan": plan.to_dict()}
    ok = (plan.v[0] == 1.0 and np.all(plan.alpha[0] == 0.0)
          and plan.theta_terminal_max <= 1e-8 * (1 + ctx.h.sup_norm()))
    out["checks"] = {"v0": float(plan.v[0]), "alpha0": plan.alpha[0].tolist(),
                     "constraint_residual": plan.constraint_residual, "theta_terminal_max": plan.theta_terminal_max,
                     "passed": bool(ok)}
    return out, plan.table(), bool(ok)


def cmd_simulate(ctx: Context, threads: int):
    grid = ctx.grid()
    _, term, bad = simulate_many(ctx.model, ctx.xi, grid, ctx.n_paths, ctx.seed, threads, keep_states=False)
    ok = bad < 0
    final = term[:, -1]
    stats = []
    for i in range(ctx.model.dim):
        e = Estimate.from_samples(final[ok, i], int(np.sum(~ok))) if ok.sum() >= 2 else None
        stats.append({"component": i, "terminal": e.to_dict() if e else None})
    fvals = ctx.f.batch(term[ok], ctx.model.m)
    out = {"model": ctx.model.describe(), "n_paths": ctx.n_paths, "n_rejected": int(np.sum(~ok)),
           "terminal_stats": stats,
           "functional": {"name": ctx.f.name,
                          "estimate": Estimate.from_samples(fvals, int(np.sum(~ok))).to_dict()
                          if fvals.size >= 2 else None}}
    header = ["path_id", "rejected"] + [f"z{i}_T" for i in range(ctx.model.dim)]
    rows = [[i, bool(not ok[i])] + final[i].tolist() for i in range(ctx.n_paths)]
    return out, (header, rows), bool(ok.all())


def cmd_gradient(ctx: Context, threads: int):
    T = ctx.require_T()
    eps_fd = _get(ctx.cfg, "eps_fd", float)
    cv = _get(ctx.cfg, "control_variate", bool, True)
    rep = gradient_report(ctx.model, ctx.xi, ctx.h, ctx.f, T, ctx.n_paths, ctx.seed, ctx.grid(),
                          eps_fd=eps_fd, control_variate=cv, threads=threads)
    out = {"estimator": "bismut+fd", "model": ctx.model.describe(), "f": ctx.f.name, **rep.to_dict()}
    passed = rep.z_score <= 3.0 and rep.bismut.n_rejected == 0 and rep.fd.n_rejected == 0
    return out, None, passed


def cmd_girsanov(ctx: Context, threads: int):
    T = ctx.require_T()
    eps = _get(ctx.cfg, "eps", float, 0.5)
    chk = girsanov_identity_check(ctx.model, ctx.xi, ctx.h, ctx.f, T, eps, ctx.n_paths, ctx.seed,
                                  ctx.grid(), threads=threads)
    out = {"model": ctx.model.describe(), "f": ctx.f.name, "eps": eps, **chk.to_dict()}
    return out, None, chk.valid and chk.z_score <= 3.0 and chk.r_z_score <= 3.0


def cmd_verify(ctx: Context, threads: int):
    cfg = ctx.cfg
    if ctx.suite is None:
        raise ConfigError("config.model", "model has no Lyapunov data; use a built-in example")
    names = cfg.get("assumptions", ["A1"])
    if not isinstance(names, list) or not names:
        raise ConfigError("config.assumptions", "expected a non-empty list")
    gspec = cfg.get("grid", {})
    if not isinstance(gspec, dict) or set(gspec) - {"lo", "hi", "step"}:
        raise ConfigError("config.grid", "expected {lo, hi, step}")
    try:
        grid = verify.GridSpec(**{k: float(v) for k, v in gspec.items()})
        grid.axis()
    except (TypeError, ValueError) as exc:
        raise ConfigError("config.grid", str(exc)) from None
    lam = _get(cfg, "lambda", float)
    n_seg = _get(cfg, "n_segments", int, verify.N_SEGMENTS)
    seg_seed = _get(cfg, "segment_seed", int, verify.SEGMENT_SEED)
    reports = []
    for i, name in enumerate(names):
        if name == "exp-drift-explicit":
            eps_param = _get(cfg, "eps_param", float, 0.1)
            try:
                reports.append(verify.check_exp_drift_grid(grid, eps_param))
            except ValueError as exc:
                raise ConfigError("config.eps_param", str(exc)) from None
            continue
        if name not in verify.ASSUMPTIONS:
            raise ConfigError(f"config.assumptions[{i}]", f"unknown assumption {name!r}")
        try:
            reports.append(verify.check_assumption_grid(ctx.suite, name, grid, lam, ctx.model, n_seg, seg_seed))
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"config.assumptions[{i}]", str(exc)) from None
    out = {"model": ctx.model.describe(), "reports": [r.to_dict() for r in reports]}
    header = ["assumption", "n_checked", "n_violations", "worst_margin", "passed"]
    rows = [[r.assumption, r.n_checked, r.n_violations, r.worst_margin, r.passed] for r in reports]
    return out, (header, rows), all(r.passed for r in reports)


def _need_suite(ctx, keys=()):
    if ctx.suite is None:
        raise ConfigError("config.model", "model has no Lyapunov data; use a built-in example")
    for k in keys:
        if k not in ctx.suite.constants:
            raise ConfigError("config.model", f"model's Lyapunov data lacks '{k}'")


def cmd_moment(ctx: Context, threads: int):
    _need_suite(ctx, ("lyap_alpha",))
    t_list = _float_list(ctx.cfg, "t_list", [0.5, 1.0])
    for i, t in enumerate(t_list):
        if t < 0 or abs(round(t / ctx.dt) * ctx.dt - t) > 1e-9:
            raise ConfigError(f"config.t_list[{i}]", "must be a non-negative multiple of dt")
    rep = verify.check_moment_bound(ctx.model, ctx.suite, ctx.xi, t_list, ctx.n_paths, ctx.seed, ctx.dt,
                                    threads)
    header = ["t", "mean_w", "std_err", "bound"]
    rows = [[p.t, p.estimate.mean, p.estimate.std_err, p.bound] for p in rep.points]
    return {"model": ctx.model.describe(), **rep.to_dict()}, (header, rows), rep.passed


def _ineq_rows(reports, param_name, params):
    header = ["parameter", "lhs", "rhs_shape", "fitted_c"]
    rows = [[p, r.lhs.mean, r.rhs_shape_value, r.fitted_c] for p, r in zip(params, reports)]
    return header, rows


def _positive(ctx):
    if not ctx.f.positivity:
        raise ConfigError("config.f", f"functional {ctx.f.name!r} is not positive")


def cmd_log_harnack(ctx: Context, threads: int):
    _positive(ctx)
    T = ctx.require_T()
    grid = ctx.grid()
    scales = _float_list(ctx.cfg, "h_scales", [1.0])
    zero = verify.check_log_harnack(ctx.model, ctx.xi, 0.0 * ctx.h, ctx.f, T, ctx.n_paths, ctx.seed, grid,
                                    ctx.suite, threads)
    reports = [verify.check_log_harnack(ctx.model, ctx.xi, s * ctx.h, ctx.f, T, ctx.n_paths, ctx.seed, grid,
                                        ctx.suite, threads) for s in scales]
    jensen_ok = zero.lhs.mean <= 3 * zero.lhs.std_err + 1e-15
    out = {"model": ctx.model.describe(), "f": ctx.f.name, "h_zero": zero.to_dict(),
           "sweep": [dict(r.to_dict(), h_scale=s) for s, r in zip(scales, reports)]}
    passed = jensen_ok and zero.passed_structural and all(r.passed_structural for r in reports)
    return out, _ineq_rows(reports, "h_scale", scales), passed


def cmd_harnack(ctx: Context, threads: int):
    _positive(ctx)
    T = ctx.require_T()
    grid = ctx.grid()
    p_list = _float_list(ctx.cfg, "p_list", [_get(ctx.cfg, "p", float, 2.0)])
    for i, p in enumerate(p_list):
        if not p > 1:
            raise ConfigError(f"config.p_list[{i}]" if "p_list" in ctx.cfg else "config.p", "p must exceed 1")
    zero = [verify.check_power_harnack(ctx.model, ctx.xi, 0.0 * ctx.h, ctx.f, T, p, ctx.n_paths, ctx.seed,
                                       grid, ctx.suite, threads) for p in p_list]
    reports = [verify.check_power_harnack(ctx.model, ctx.xi, ctx.h, ctx.f, T, p, ctx.n_paths, ctx.seed, grid,
                                          ctx.suite, threads) for p in p_list]
    out = {"model": ctx.model.describe(), "f": ctx.f.name,
           "h_zero": [r.to_dict() for r in zero], "sweep": [r.to_dict() for r in reports]}
    passed = all(r.passed_structural for r in zero + reports)
    return out, _ineq_rows(reports, "p", p_list), passed


def cmd_gradient_bound_sweep(ctx: Context, threads: int):
    taus = _float_list(ctx.cfg, "taus", [0.1, 0.2, 0.4, 0.8])
    for i, tau in enumerate(taus):
        if not tau > 0:
            raise ConfigError(f"config.taus[{i}]", "must be positive")
        ctx._multiple(ctx.r0 + tau, f"taus[{i}]")
    reports = verify.gradient_bound_sweep(ctx.model, ctx.xi, ctx.h, ctx.f, taus, ctx.n_paths, ctx.seed,
                                          ctx.dt, ctx.suite, threads)
    out = {"model": ctx.model.describe(), "f": ctx.f.name,
           "sweep": [dict(r.to_dict(), tau=t) for t, r in zip(taus, reports)]}
    if ctx.suite is not None and ctx.f.positivity and ctx.T is not None:
        r_values = ctx.cfg.get("r_values")
        if r_values is not None:
            r_values = _float_list(ctx.cfg, "r_values", None)
        out["entropy_gradient"] = verify.entropy_gradient_report(
            ctx.model, ctx.xi, ctx.h, ctx.f, ctx.T, ctx.n_paths, ctx.seed, ctx.grid(), ctx.suite,
            r_values=r_values, threads=threads)
    return out, _ineq_rows(reports, "tau", taus), all(r.passed_structural for r in reports)


HANDLERS = {
    "gramian": cmd_gramian,
    "plan": cmd_plan,
    "simulate": cmd_simulate,
    "gradient": cmd_gradient,
    "girsanov-check": cmd_girsanov,
    "verify-assumptions": cmd_verify,
    "moment-bound": cmd_moment,
    "log-harnack": cmd_log_harnack,
    "harnack": cmd_harnack,
    "gradient-bound-sweep": cmd_gradient_bound_sweep,
}


# ---------------------------------------------------------------------------
# Output


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def write_reports(out_dir: Path, command: str, cfg: dict, results: dict, table, passed: bool,
                  fmt: str, threads: int):
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {"schema_version": SCHEMA_VERSION, "command": command, "config": cfg,
              "passed": bool(passed), "results": results}
    if fmt in ("json", "both") or table is None:
        (out_dir / "report.json").write_text(json.dumps(_clean(report), indent=2, sort_keys=True) + "\n")
    if table is not None and fmt in ("csv", "both"):
        header, rows = table
        with open(out_dir / "report.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_csv_cell(v) for v in row])
    meta = {"schema_version": SCHEMA_VERSION, "version": __version__, "command": command,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "backend": kernels.BACKEND, "threads": threads}
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _csv_cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.bool_, bool)):
        return str(bool(v)).lower()
    if isinstance(v, np.integer):
        return int(v)
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="degsde", description="Degenerate delay SDE laboratory.")
    parser.add_argument("command", choices=sorted(HANDLERS))
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads; never changes results")
    parser.add_argument("--format", choices=("json", "csv", "both"), default="both")
    return parser


def run(command: str, cfg: dict, out_dir, threads: int = 1, fmt: str = "both") -> int:
    ctx = Context(command, cfg)
    results, table, passed = HANDLERS[command](ctx, threads)
    write_reports(Path(out_dir), command, cfg, results, table, passed, fmt, threads)
    return 0 if passed else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = json.loads(Path(args.config).read_text())
    except OSError as exc:
        print(f"error: config: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: config: invalid JSON: {exc}", file=sys.stderr)
        return 2
    try:
        status = run(args.command, cfg, args.out, args.threads, args.format)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{args.command}: {'pass' if status == 0 else 'FAIL'} -> {args.out}")
    return status


if __name__ == "__main__":
    sys.exit(main())
