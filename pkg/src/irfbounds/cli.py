"""Config-driven experiment runner.

Usage: ``irfbounds <subcommand> [--config PATH] [--out DIR] [--threads K] [--seed S]``.
The config is ``key = value`` lines under ``[section]`` headers; values are
Python/TOML literals (numbers, quoted strings, lists, true/false).
"""

from __future__ import annotations

import argparse
import ast
import configparser
import csv
import datetime as _dt
import io
import json
import math
import sys
import time
import traceback
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import acceptance, envelopes as env
from .chains import InitSpec, derive_constants, make_model
from .coefficients import (
    BoundKind,
    MomentConstants,
    asymptotics_report,
    compute_K,
    constants_bernstein,
    constants_fuk_nagaev,
    constants_hoeffding,
    constants_mcdiarmid,
    constants_mz,
    constants_semiexp,
    constants_vbe,
    constants_vbe_moment,
    constants_weak,
)
from .envelopes import InitialTailSpec, NotApplicableError
from .erm import ERMProblem, erm_csv, excess_risk_experiment
from .moments import mz_moment_bound, vbe_moment_bound
from .montecarlo import check_domination, enumerate_exact_tail, estimate_moment_norm, estimate_tail
from .noise import NoiseSpec
from .rng import derive_seed
from .sa import SARun, bias_constant_C0, exact_average_bias, sa_csv, slope_experiment
from .schedules import Regime, make_schedule

__all__ = ["ConfigError", "load_config", "run", "main"]

SUBCOMMANDS = ("coeffs", "bound", "verify", "moments", "sa", "erm", "selftest")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _literal(raw: str, where: str) -> Any:
    text = raw.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        raise ConfigError(f"{where}: cannot parse value {text!r}") from None


class Config:
    """Parsed sections with typed accessors that name the offending field."""

    def __init__(self, sections: dict[str, dict[str, Any]]):
        self.sections = sections

    def section(self, name: str) -> dict[str, Any]:
        return self.sections.get(name, {})

    def has(self, name: str) -> bool:
        return name in self.sections

    def get(self, section: str, key: str, default: Any = ..., kind=None) -> Any:
        sec = self.section(section)
        if key not in sec:
            if default is ...:
                raise ConfigError(f"[{section}] {key}: required field missing")
            return default
        value = sec[key]
        if kind is not None:
            try:
                value = kind(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
        return value


def load_config(path: Optional[str]) -> Config:
    if path is None:
        return Config({})
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#",))
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    sections = {}
    for name in parser.sections():
        sections[name] = {k: _literal(v, f"[{name}] {k}") for k, v in parser.items(name)}
    return Config(sections)


# ---------------------------------------------------------------------------
# builders


def _noise(cfg: Config) -> NoiseSpec:
    kind = cfg.get("noise", "kind", "GaussianIid")
    d = cfg.get("noise", "d", 1, int)
    try:
        if kind == "GaussianIid":
            return NoiseSpec.gaussian(cfg.get("noise", "sigma", 1.0, float), d)
        if kind == "UniformPM1":
            return NoiseSpec.uniform_pm1(d)
        if kind == "TwoAtom":
            return NoiseSpec.two_atom(
                cfg.get("noise", "a", -1.0, float), cfg.get("noise", "b", 1.0, float), cfg.get("noise", "pr", 0.5, float)
            )
        if kind == "BoundedUniform":
            return NoiseSpec.bounded_uniform(cfg.get("noise", "lo", kind=float), cfg.get("noise", "hi", kind=float), d)
    except ValueError as exc:
        raise ConfigError(f"[noise] {exc}") from None
    raise ConfigError(f"[noise] kind: unknown noise law {kind!r}")


def _init(cfg: Config, d: int) -> InitSpec:
    kind = cfg.get("model", "init", "point")
    x1 = cfg.get("model", "x1", [0.0] * d)
    try:
        if kind == "point":
            return InitSpec.point(x1)
        if kind == "box":
            return InitSpec.box(x1, cfg.get("model", "init_radius", kind=float))
        if kind == "gaussian":
            return InitSpec.gaussian(x1, cfg.get("model", "init_sd", kind=float))
    except ValueError as exc:
        raise ConfigError(f"[model] init: {exc}") from None
    raise ConfigError(f"[model] init: unknown initial law {kind!r}")


_MODEL_KEYS = {"example", "p", "init", "x1", "init_radius", "init_sd"}


def _model(cfg: Config):
    if not cfg.has("model"):
        raise ConfigError("[model]: section required for this subcommand")
    noise = _noise(cfg)
    params = {k: v for k, v in cfg.section("model").items() if k not in _MODEL_KEYS}
    try:
        return make_model(
            cfg.get("model", "example"), noise, _init(cfg, noise.d), p=cfg.get("model", "p", 2.0, float), **params
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[model] {exc}") from None


def _schedule(cfg: Config, n: int, model=None):
    if model is not None and cfg.get("schedule", "source", "model") == "model":
        return model.schedule(n)
    if not cfg.has("schedule"):
        raise ConfigError("[schedule]: section required when no model is given")
    s = cfg.section("schedule")
    custom = None
    if "custom_rho" in s:
        custom = (s["custom_rho"], cfg.get("schedule", "custom_tau"), s.get("custom_xi"))
    try:
        return make_schedule(
            cfg.get("schedule", "regime"),
            s.get("alpha"),
            s.get("rho"),
            s.get("eta"),
            custom=custom,
            with_xi=s.get("with_xi", True),
        )
    except ValueError as exc:
        raise ConfigError(f"[schedule] {exc}") from None


def _init_tail(cfg: Config) -> InitialTailSpec:
    kind = cfg.get("bounds", "init_tail", "deterministic")
    c = cfg.get("bounds", "init_c", None)
    q = cfg.get("bounds", "init_q", None)
    makers = {
        "deterministic": lambda: InitialTailSpec.deterministic(),
        "exp": lambda: InitialTailSpec.exp_tail(c),
        "semiexp": lambda: InitialTailSpec.semiexp_tail(c, q),
        "poly": lambda: InitialTailSpec.poly_tail(c, q),
        "bounded": lambda: InitialTailSpec.bounded(cfg.get("bounds", "init_T0", kind=float)),
    }
    if kind not in makers:
        raise ConfigError(f"[bounds] init_tail: unknown kind {kind!r}")
    try:
        return makers[kind]()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[bounds] init_tail: {exc}") from None


def _given_constants(cfg: Config) -> MomentConstants:
    b = cfg.section("bounds")
    keys = ("H1", "A1", "T", "T1", "A1_semi", "Eexp_q", "semi_q")
    kw = {k: float(b[k]) for k in keys if k in b}
    for name in ("noise_moments", "weak_moments", "init_moments"):
        if name in b:
            if not isinstance(b[name], dict):
                raise ConfigError(f"[bounds] {name}: expected a mapping such as {{2: 1.0}}")
            kw[name] = b[name]
    try:
        return MomentConstants(init_tail=_init_tail(cfg), **kw)
    except ValueError as exc:
        raise ConfigError(f"[bounds] {exc}") from None


_ALL_TAIL_KINDS = ["Bernstein", "FukNagaev", "VBE", "WeakMoment", "McDiarmid", "Hoeffding", "SemiExp"]


def _envelopes(cfg: Config, n: int, model=None) -> list:
    """Envelopes named in [bounds] kinds, with constants derived from the
    model or given explicitly."""
    kinds = cfg.get("bounds", "kinds", _ALL_TAIL_KINDS)
    source = cfg.get("bounds", "constants", "derived" if model is not None else "given")
    if source == "derived" and model is None:
        raise ConfigError("[bounds] constants: 'derived' needs a [model] section")
    if source == "derived":
        if model.init.kind.value == "gaussian" and model.d > 1:
            raise ConfigError("[bounds] constants: this model cannot certify its initial tail; give constants")
        return acceptance.model_envelopes(model, n, kinds, cfg.get("bounds", "semi_q", 0.5, float))
    table = compute_K(_schedule(cfg, n, model), n)
    mc = _given_constants(cfg)
    d = cfg.get("bounds", "d", model.d if model else 1, int)
    p = cfg.get("bounds", "p", model.p if model else 2.0, float)
    init, K1 = mc.init_tail, table.K1n
    out = []
    try:
        for kind in kinds:
            k = BoundKind(kind)
            if k is BoundKind.BERNSTEIN:
                bc = constants_bernstein(table, mc)
                out += [env.bernstein_envelope(bc, d, p, K1, init, f) for f in ("refined", "relaxed")]
            elif k is BoundKind.FUK_NAGAEV:
                for q in cfg.get("bounds", "fn_q", [2.0, 4.0]):
                    out.append(env.fuk_nagaev_envelope(constants_fuk_nagaev(table, mc, q), d, p, K1, init))
            elif k is BoundKind.VBE:
                for q in cfg.get("bounds", "vbe_q", [1.5, 2.0]):
                    out.append(env.vbe_envelope(constants_vbe(table, mc, q), d, p, K1, init))
            elif k is BoundKind.WEAK:
                for q in cfg.get("bounds", "weak_q", [1.5]):
                    out.append(env.weak_envelope(constants_weak(table, mc, q), d, p, K1, init))
            elif k is BoundKind.MCDIARMID:
                bc = constants_mcdiarmid(table, mc)
                out += [env.mcdiarmid_envelope(bc, d, p, K1, init, form=f) for f in ("rio", "power", "gauss")]
            elif k is BoundKind.HOEFFDING:
                if mc.T is None:
                    raise ConfigError("[bounds] T: the Hoeffding bound with given constants needs T")
                bc = constants_hoeffding(table, mc)
                out += [env.hoeffding_envelope(bc, d, p, K1, init, T=mc.T, form=f) for f in ("H", "bennett", "bernstein")]
            elif k is BoundKind.SEMIEXP:
                q = mc.semi_q if mc.semi_q is not None else 0.5
                try:
                    out.append(env.semiexp_envelope(constants_semiexp(table, mc, q), d, p, K1, init))
                except NotApplicableError:
                    pass
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[bounds] {exc}") from None
    return out


def _u_grid(cfg: Config, default=None):
    if "u" in cfg.section("grid"):
        return np.asarray(cfg.get("grid", "u"), dtype=float)
    if "u_max" in cfg.section("grid"):
        lo = cfg.get("grid", "u_min", 0.0, float)
        hi = cfg.get("grid", "u_max", kind=float)
        pts = cfg.get("grid", "points", 50, int)
        return np.linspace(lo, hi, pts)
    return default


# ---------------------------------------------------------------------------
# output


class Output:
    def __init__(self, out_dir: Path, stamp: str):
        self.dir = out_dir
        self.stamp = stamp
        self.files: list[str] = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def csv_text(self, name: str, body: str) -> None:
        path = self.dir / name
        path.write_text(f"# generated {self.stamp}\n" + body, encoding="utf-8")
        self.files.append(name)

    def csv_rows(self, name: str, header: list, rows: list) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        self.csv_text(name, buf.getvalue())


def _safe(tag: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in tag)


# ---------------------------------------------------------------------------
# subcommands; each returns a list of (name, passed, detail)


def cmd_coeffs(cfg, out, seed, threads):
    n = cfg.get("run", "n", 100, int)
    model = _model(cfg) if cfg.has("model") else None
    s = _schedule(cfg, n, model)
    out.csv_text("coeffs.csv", compute_K(s, n).to_csv())
    verdicts = [("schedule", True, f"regime {s.regime.value} valid up to n={n}")]
    grid = cfg.get("run", "asymptotics_grid", None)
    if grid and s.regime is not Regime.CUSTOM:
        rep = asymptotics_report(s, grid)
        lo, hi = rep.ratio_range()
        verdicts.append(("log_product", rep.log_product_ok, f"{rep.statistic_name} ratio [{lo:.4g}, {hi:.4g}]"))
        out.csv_rows(
            "asymptotics.csv",
            ["n", "K_1n", "statistic"],
            [[int(a), float(b), float(c)] for a, b, c in zip(rep.n_grid, rep.K1n, rep.statistic)],
        )
    return verdicts


def cmd_bound(cfg, out, seed, threads):
    n = cfg.get("run", "n", 100, int)
    model = _model(cfg) if cfg.has("model") else None
    envs = _envelopes(cfg, n, model)
    u = _u_grid(cfg, np.linspace(0.0, 10.0, 51))
    for e in envs:
        out.csv_text(f"envelope_{_safe(e.tag)}.csv", e.to_csv(u))
    return [(f"envelope {e.tag}", True, "computed") for e in envs]


def _fake_envelope(tail):
    def fake(u):
        return 0.5 * np.interp(u, tail.x_grid, tail.p_hat)

    fake.__name__ = "FakeHalfTail"
    return fake


def cmd_verify(cfg, out, seed, threads):
    model = _model(cfg)
    n = cfg.get("run", "n", 12, int)
    method = cfg.get("verify", "method", "mc")
    u = _u_grid(cfg)
    if method == "exact":
        if u is None:
            top = enumerate_exact_tail(model, n, [0.0]).meta["max_norm"]
            u = np.linspace(top / 50.0, 1.05 * top, 50)
        tail = enumerate_exact_tail(model, n, u)
    elif method == "mc":
        tail = estimate_tail(model, n, cfg.get("run", "N", 20000, int), seed, x_grid=u, threads=threads)
    else:
        raise ConfigError(f"[verify] method: expected 'mc' or 'exact', got {method!r}")
    envs = _envelopes(cfg, n, model)
    if cfg.get("verify", "fake", False):
        envs.append(_fake_envelope(tail))
    reports = [check_domination(tail, e) for e in envs]
    header, rows = tail.to_csv_rows(envs)
    out.csv_rows("tails.csv", header, rows)
    return [
        (
            f"domination {r.kind}",
            r.passed,
            f"{len(r.violations)} violations, max p_lcb/bound {r.max_ratio:.4g}",
        )
        for r in reports
    ]


def cmd_moments(cfg, out, seed, threads):
    model = _model(cfg)
    n = cfg.get("run", "n", 200, int)
    N = cfg.get("run", "N", 10**4, int)
    qs = cfg.get("moments", "q", [1.0, 2.0, 4.0])
    table = compute_K(model.schedule(n), n)
    rows, verdicts = [], []
    for q in qs:
        q = float(q)
        est = estimate_moment_norm(model, n, N, q, derive_seed(seed, f"moments-{q}"), threads=threads)
        bounds = []
        if q >= 2:
            bc = constants_mz(table, derive_constants(model, "MZ", q), q)
            bounds.append(("MZ", mz_moment_bound(bc.Tq, model.d, q)))
        if 1 <= q <= 2:
            bc = constants_vbe_moment(table, derive_constants(model, "VBEMoment", q), q)
            bounds.append(("VBE", vbe_moment_bound(bc.Vq, model.d, q)))
        for tag, b in bounds:
            rows.append([q, float(b), est.estimate, est.ucb_99])
            verdicts.append((f"{tag} q={q:g}", est.ucb_99 <= b, f"mc_ucb {est.ucb_99:.4g} vs bound {b:.4g}"))
    out.csv_rows("moments.csv", ["q", "bound", "mc_estimate", "mc_ucb"], rows)
    return verdicts


def cmd_sa(cfg, out, seed, threads):
    model = _model(cfg)
    if cfg.has("sa") and "x_star" in cfg.section("sa"):
        run = SARun(model, tuple(cfg.get("sa", "x_star")))
    else:
        run = SARun.linear(model)
    grid = cfg.get("sa", "n_grid", acceptance.SLOPE_GRID)
    N = cfg.get("sa", "N", 2000, int)
    rep = slope_experiment(run, grid, N, seed, threads)
    out.csv_text("sa.csv", sa_csv(run, rep))
    lo, hi = cfg.get("sa", "slope_window", [-0.6, -0.4])
    verdicts = [
        ("slope uniform", lo <= rep.slope_uniform <= hi, f"{rep.slope_uniform:.4f}"),
        ("slope suffix", lo <= rep.slope_suffix <= hi, f"{rep.slope_suffix:.4f}"),
    ]
    n_check = cfg.get("sa", "bias_horizon", 1000, int)
    C0 = bias_constant_C0(run)
    bias = exact_average_bias(run, n_check)
    k = np.arange(1, n_check + 1)
    ok = bool(np.all(bias <= C0 / k * (1 + 1e-12)))
    verdicts.append(("bias C0/n", ok, f"max bias*n/C0 {float(np.max(bias * k / C0)) if C0 > 0 else 0.0:.4f}"))
    return verdicts


def cmd_erm(cfg, out, seed, threads):
    e = cfg.section("erm")
    try:
        problem = ERMProblem(
            **{k: float(e[k]) for k in ("alpha", "theta0", "theta_lo", "theta_hi", "sigma", "x1") if k in e}
        )
    except ValueError as exc:
        raise ConfigError(f"[erm] {exc}") from None
    grid = cfg.get("erm", "n_grid", [250, 1000, 4000])
    reps = cfg.get("erm", "reps", 20, int)
    rep = excess_risk_experiment(problem, grid, reps, seed, threads)
    out.csv_text("erm.csv", erm_csv(rep))
    need = cfg.get("erm", "min_dominated", math.ceil(0.9 * reps), int)
    return [
        ("median decreasing", rep.median_decreasing, ", ".join(f"{m:.3e}" for m in rep.median)),
        ("fitted envelope", rep.n_dominated >= need, f"{rep.n_dominated}/{reps} repetitions dominated"),
    ]


def cmd_selftest(cfg, out, seed, threads):
    crits = acceptance.run_all(seed=seed if cfg.get("run", "vary_seed", False) else None, threads=threads)
    out.csv_rows(
        "acceptance.csv",
        ["criterion", "name", "verdict", "detail"],
        [[c.number, c.name, "PASS" if c.ok else "FAIL", c.detail] for c in crits],
    )
    return [(f"criterion {c.number}", c.ok, c.detail) for c in crits]


COMMANDS = {
    "coeffs": cmd_coeffs,
    "bound": cmd_bound,
    "verify": cmd_verify,
    "moments": cmd_moments,
    "sa": cmd_sa,
    "erm": cmd_erm,
    "selftest": cmd_selftest,
}


def run(subcommand: str, cfg: Config, out_dir: str, threads: int = 1, seed: Optional[int] = None) -> int:
    """Run one subcommand; returns the exit status (0 iff all verdicts pass)."""
    if subcommand not in COMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    seed = cfg.get("run", "master_seed", 0, int) if seed is None else seed
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    out = Output(Path(out_dir), stamp)
    t0 = time.perf_counter()
    verdicts = COMMANDS[subcommand](cfg, out, seed, threads)
    elapsed = time.perf_counter() - t0
    summary = {
        "subcommand": subcommand,
        "verdicts": [{"name": n, "verdict": "PASS" if ok else "FAIL", "detail": d} for n, ok, d in verdicts],
        "timings": {"total_seconds": round(elapsed, 3), "generated": stamp},
        "files": out.files,
    }
    (out.dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    for n, ok, d in verdicts:
        print(f"[{'PASS' if ok else 'FAIL'}] {n}: {d}")
    return 0 if all(ok for _, ok, _ in verdicts) else 1


def _provenance(exc: BaseException) -> str:
    mod = "irfbounds"
    for frame in traceback.extract_tb(exc.__traceback__):
        if "irfbounds" in frame.filename:
            mod = "irfbounds." + Path(frame.filename).stem
    return mod


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="irfbounds", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="experiment config (key = value under [section] headers)")
    ap.add_argument("--out", default="out", help="output directory (default: ./out)")
    ap.add_argument("--threads", type=int, default=None, help="worker threads")
    ap.add_argument("--seed", type=int, default=None, help="master seed, overrides the config")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config)
        threads = args.threads if args.threads else cfg.get("run", "threads", 1, int)
        return run(args.subcommand, cfg, args.out, threads, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime fault
        print(f"runtime fault in {_provenance(exc)}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
