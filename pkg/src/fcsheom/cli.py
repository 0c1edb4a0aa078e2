"""
Batch front end and the run workflows it orchestrates.

Configuration (YAML)::

    model:
      two_level: {omega0: 1.0, J: 0.0}      # or h_sys / couplings / rho0
      baths:
        - {family: ohmic, lam: 0.1, omega_c: 3.0, T: 10.0, counted: true}
        - {family: ohmic, lam: 0.1, omega_c: 3.0, T: 10.0}
    numerics:
      n_max: 4          # initial depth
      n_step: 2         # escalation step
      n_cap: 8          # largest depth tried
      conv_tol: 1.0e-3  # relative change accepted between depths
      dt: 0.002
      t_end: 10.0
      m_max: 2
      n_terms: 8        # exponentials per continuum bath
      fit_rtol: 1.0e-4  # accepted fit residual relative to |C(0)|
      dbeta_rel: 0.01   # relative beta step of the finite-bias route
      method: rk4       # or rk4-halving
    mode: transient     # transient | conductance_scan | chi_scan | oracle_compare
    transient: {schemes: [TwoPoint, Single]}
    conductance_scan: {param: lam, values: [0.01, 0.1]}
    chi_scan: {chis: [-0.2, 0.2], scheme: TwoPoint}
    oracle_compare: {fock_cutoff: 5, chis: [-1, -0.5, 0, 0.5, 1], eq5_draws: 10}
    output: {dir: out, stride: 0.01}

Every flag has an environment variable with prefix ``FCSHEOM_``
(``FCSHEOM_CONFIG``, ``FCSHEOM_MODE``, ``FCSHEOM_NMAX``, ``FCSHEOM_DT``,
``FCSHEOM_TMAX``, ``FCSHEOM_OUT``, ``FCSHEOM_WORKERS``, ``FCSHEOM_SEED``);
flags win over the environment.

Exit status: 0 ok, 1 comparison failed, 2 configuration parse error,
3 validation error, 4 numerical abort, 5 hierarchy depth not converged.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .correlation import FitError, decompose_shared
from .model import Scheme, SystemModel, ValidationError, model_from_config
from .propagator import (ChiResolved, MomentCascade, NumericalAbort, Propagator,
                         cgf_sample, converge_depth, integrate)
from .statistics import (CumulantSeries, config_hash, detect_steady_state, kappa_finite_bias,
                         kappa_from_fluctuations, read_table_csv, write_series_csv,
                         write_table_csv)

log = logging.getLogger("fcsheom")

EXIT_OK, EXIT_COMPARE_FAIL, EXIT_PARSE, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_NOT_CONVERGED = \
    0, 1, 2, 3, 4, 5

MODES = ("transient", "conductance_scan", "chi_scan", "oracle_compare")

DEFAULT_NUMERICS = {
    "n_max": 4, "n_step": 2, "n_cap": 8, "conv_tol": 1e-3, "dt": 0.002, "t_end": 10.0,
    "m_max": 2, "n_terms": 8, "fit_rtol": 1e-4, "dbeta_rel": 0.01, "method": "rk4",
    "steady_window": 2.0, "steady_rtol": 1e-4, "field_cap": 2_000_000,
}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# numerics and workflows


@dataclass
class Numerics:
    n_max: int = 4
    n_step: int = 2
    n_cap: int = 8
    conv_tol: float = 1e-3
    dt: float = 0.002
    t_end: float = 10.0
    m_max: int = 2
    n_terms: int = 8
    fit_rtol: float = 1e-4
    dbeta_rel: float = 0.01
    method: str = "rk4"
    stride: float = 0.01
    steady_window: float = 2.0
    steady_rtol: float = 1e-4
    field_cap: int = 2_000_000

    @classmethod
    def from_config(cls, cfg: dict, stride=None):
        vals = dict(DEFAULT_NUMERICS)
        unknown = set(cfg) - set(vals) - {"stride"}
        if unknown:
            raise ConfigError(f"unknown numerics keys: {sorted(unknown)}")
        vals.update(cfg)
        if stride is not None:
            vals["stride"] = stride
        out = cls(**vals)
        for name in ("conv_tol", "fit_rtol", "dt", "t_end", "dbeta_rel", "stride", "steady_window",
                     "steady_rtol"):
            if not getattr(out, name) > 0:
                raise ValidationError(f"numerics.{name} must be positive")
        if out.n_max < 0 or out.n_cap < out.n_max or out.n_step < 1:
            raise ValidationError("need 0 <= n_max <= n_cap and n_step >= 1")
        if out.method not in ("rk4", "rk4-halving"):
            raise ValidationError(f"unknown integration method {out.method!r}")
        ratio = out.stride / out.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValidationError("output stride must be a multiple of dt")
        return out


def shared_exponents(baths, num: Numerics):
    """Exponents fitted once for the continuum baths, reused for shifted temperatures."""
    cont = [b for b in baths if b.modes is None and b.spectral.lam > 0
            and b.spectral.family == "ohmic"]
    if not cont:
        return None
    return decompose_shared(cont, n_terms=num.n_terms, q_max=0,
                            rtol=num.fit_rtol)[0].exponents


def _bases_for(baths, scheme, q_max, num, exponents):
    bs = [b.with_scheme(scheme) for b in baths]
    return decompose_shared(bs, n_terms=num.n_terms, q_max=q_max, exponents=exponents,
                            rtol=num.fit_rtol)


def cascade_series(model: SystemModel, bases, scheme, m_max: int, n_max: int,
                   num: Numerics, beta=float("nan")):
    """One moment-cascade run; returns ``(CumulantSeries, Trajectory)``."""
    prop = Propagator.build(model, bases, MomentCascade(m_max), n_max, cap=num.field_cap)
    traj = integrate(prop, prop.initial_state(model.rho0), num.t_end, dt=num.dt,
                     method=num.method, stride=num.stride)
    counted = [i for i, b in enumerate(bases) if b.counted]
    series = CumulantSeries.from_trajectory(traj, m_max, Scheme.parse(scheme),
                                            bath=counted[0] if counted else 0, beta=beta)
    return series, traj


@dataclass
class RunResult:
    value: object
    n_max: int
    converged: bool
    history: list = field(default_factory=list)


def converged_cascade(model, baths, scheme, m_max, num: Numerics, exponents=None,
                      observe=None) -> RunResult:
    """Cascade run with hierarchy-depth escalation; observes all cumulants by default."""
    bases = _bases_for(baths, scheme, max(m_max, 1), num, exponents)
    counted = [b for b in baths if b.counted][0]

    def run(n):
        return cascade_series(model, bases, scheme, m_max, n, num, beta=counted.beta)[0]
    observe = observe or (lambda s: s.cumulants[1:])
    res = converge_depth(run, num.n_max, num.n_step, num.n_cap, num.conv_tol, observe)
    return RunResult(res.value, res.n_max, res.converged, res.history)


def kappa_fluctuation_run(model, baths, num: Numerics, exponents=None) -> RunResult:
    """``kappa_R(t)`` from second cumulants of both schemes at equal temperatures."""
    counted = [b for b in baths if b.counted][0]
    beta = counted.beta
    b_tp = _bases_for(baths, Scheme.TWO_POINT, 2, num, exponents)
    b_s = _bases_for(baths, Scheme.SINGLE, 2, num, exponents)

    def run(n):
        tp = cascade_series(model, b_tp, Scheme.TWO_POINT, 2, n, num, beta)[0]
        s = cascade_series(model, b_s, Scheme.SINGLE, 2, n, num, beta)[0]
        return {"kappa": kappa_from_fluctuations(tp, s, beta), "two_point": tp, "single": s}
    res = converge_depth(run, num.n_max, num.n_step, num.n_cap, num.conv_tol,
                         lambda r: r["kappa"])
    return RunResult(res.value, res.n_max, res.converged, res.history)


def kappa_bias_run(model, baths, num: Numerics, exponents=None, offsets=(-1, 1)) -> RunResult:
    """``kappa_R(t)`` from runs at ``beta_R + k dbeta`` (other baths fixed)."""
    ic = [i for i, b in enumerate(baths) if b.counted][0]
    beta = baths[ic].beta
    db = num.dbeta_rel * beta
    offs = sorted(set(offsets) | {0})
    variants = {}
    for k in offs:
        bs = list(baths)
        bs[ic] = baths[ic].with_beta(beta + k * db)
        variants[k] = _bases_for(bs, Scheme.TWO_POINT, 1, num, exponents)

    def run(n):
        ser = {k: cascade_series(model, variants[k], Scheme.TWO_POINT, 1, n, num,
                                 beta + k * db)[0] for k in offs}
        kap, err = kappa_finite_bias(ser, db, beta)
        return {"kappa": kap, "error": err, "series": ser}
    res = converge_depth(run, num.n_max, num.n_step, num.n_cap, num.conv_tol,
                         lambda r: r["kappa"])
    return RunResult(res.value, res.n_max, res.converged, res.history)


def steady_value(times, series, window):
    sel = np.asarray(times) >= times[-1] - window - 1e-12
    return float(np.mean(np.asarray(series)[sel]))


def chi_grid(model, baths, chis, scheme, n_max, num: Numerics, exponents=None):
    """``G(chi, t)`` for each chi; returns ``(times, array (n_chi, n_t))``."""
    bases = _bases_for(baths, scheme, 0, num, exponents)
    out = []
    times = None
    for chi in chis:
        prop = Propagator.build(model, bases, ChiResolved(float(chi), scheme), n_max,
                                cap=num.field_cap)
        traj = integrate(prop, prop.initial_state(model.rho0), num.t_end, dt=num.dt,
                         method=num.method, stride=num.stride)
        out.append(cgf_sample(traj))
        times = traj.times
    return times, np.array(out)


# --------------------------------------------------------------------------
# configuration


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a mapping")
    if "model" not in cfg or not isinstance(cfg["model"], dict):
        raise ConfigError("configuration lacks a 'model' section")
    return cfg


def _env(name, default=None):
    return os.environ.get(f"FCSHEOM_{name}", default)


def resolve(args) -> tuple[dict, dict]:
    """Merge config file, environment and flags; returns ``(config, settings)``."""
    path = args.config or _env("CONFIG")
    if not path:
        raise ConfigError("no configuration given (--config or FCSHEOM_CONFIG)")
    cfg = load_config(path)
    num = dict(cfg.get("numerics") or {})
    for flag, env, key, conv in (("nmax", "NMAX", "n_max", int), ("dt", "DT", "dt", float),
                                 ("tmax", "TMAX", "t_end", float)):
        val = getattr(args, flag)
        if val is None:
            val = _env(env)
        if val is not None:
            try:
                num[key] = conv(val)
            except ValueError:
                raise ConfigError(f"bad value for {key}: {val!r}") from None
            if key == "n_max":
                num["n_cap"] = max(int(num.get("n_cap", DEFAULT_NUMERICS["n_cap"])), num[key])
    cfg["numerics"] = num
    mode = args.mode or _env("MODE") or cfg.get("mode", "transient")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    cfg["mode"] = mode
    out = (cfg.get("output") or {})
    settings = {
        "out": args.out or _env("OUT") or out.get("dir", "out"),
        "workers": int(args.workers or _env("WORKERS") or 1),
        "seed": int(args.seed if args.seed is not None else _env("SEED", 0)),
        "stride": float(out.get("stride", 0.01)),
    }
    return cfg, settings


def validate_config(cfg: dict, settings: dict):
    model, baths = model_from_config(cfg["model"])
    num = Numerics.from_config(cfg["numerics"], settings["stride"])
    mode = cfg["mode"]
    section = cfg.get(mode) or {}
    if mode == "conductance_scan":
        if section.get("param", "lam") not in ("lam", "omega_c", "T"):
            raise ValidationError("conductance_scan.param must be lam, omega_c or T")
        if not section.get("values"):
            raise ValidationError("conductance_scan.values must be a non-empty list")
    if mode == "chi_scan" and not section.get("chis"):
        raise ValidationError("chi_scan.chis must be a non-empty list")
    if mode == "oracle_compare" and any(b.modes is None for b in baths):
        raise ValidationError("oracle_compare needs discrete-mode baths")
    return model, baths, num


# --------------------------------------------------------------------------
# modes


def _meta(cfg, settings, **extra):
    doc = {"config_hash": config_hash(cfg), "config": cfg, "workers": settings["workers"],
           "seed": settings["seed"]}
    doc.update(extra)
    return doc


def _scan_point(args):
    cfg, settings, param, value = args
    cfg = copy.deepcopy(cfg)
    for b in cfg["model"]["baths"]:
        if param == "lam":
            b["lam"] = value
        elif param == "omega_c":
            b["omega_c"] = value
        else:
            b.pop("beta", None)
            b["T"] = value
    model, baths, num = validate_config(cfg, settings)
    exps = shared_exponents(baths, num)
    fl = kappa_fluctuation_run(model, baths, num, exps)
    # the bias route reuses the depth selected by the fluctuation route
    bi = kappa_bias_run(model, baths, replace(num, n_max=fl.n_max, n_cap=fl.n_max), exps)
    times = fl.value["two_point"].times
    kf = steady_value(times, fl.value["kappa"], num.steady_window)
    kb = steady_value(times, bi.value["kappa"], num.steady_window)
    steady, drift = detect_steady_state(times, fl.value["two_point"].rates()[1:],
                                        num.steady_window, num.steady_rtol)
    return {"value": value, "kappa_fluct": kf, "kappa_bias": kb,
            "rel_diff": abs(kf - kb) / max(abs(kb), 1e-300),
            "n_max": fl.n_max, "converged": bool(fl.converged), "steady": bool(steady),
            "drift": drift, "history": fl.history}


def run_transient(cfg, settings, model, baths, num, outdir):
    schemes = (cfg.get("transient") or {}).get("schemes", ["TwoPoint", "Single"])
    exps = shared_exponents(baths, num)
    status, files = [], []
    for sch in schemes:
        res = converged_cascade(model, baths, Scheme.parse(sch), num.m_max, num, exps)
        path = os.path.join(outdir, f"transient_{Scheme.parse(sch).value}.csv")
        write_series_csv(path, res.value, _meta(cfg, settings, n_max=res.n_max,
                                                converged=res.converged,
                                                history=res.history))
        status.append(res.converged)
        files.append(path)
    return all(status), files


def run_conductance(cfg, settings, model, baths, num, outdir):
    sec = cfg.get("conductance_scan") or {}
    param = sec.get("param", "lam")
    jobs = [(cfg, settings, param, float(v)) for v in sec["values"]]
    if settings["workers"] > 1:
        with ProcessPoolExecutor(settings["workers"]) as ex:
            results = list(ex.map(_scan_point, jobs))
    else:
        results = [_scan_point(j) for j in jobs]
    cols = {param: [r["value"] for r in results],
            "kappa_fluct": [r["kappa_fluct"] for r in results],
            "kappa_bias": [r["kappa_bias"] for r in results],
            "rel_diff": [r["rel_diff"] for r in results],
            "n_max": [r["n_max"] for r in results],
            "converged": [r["converged"] for r in results],
            "steady": [r["steady"] for r in results]}
    path = os.path.join(outdir, "conductance.csv")
    ok = all(r["converged"] for r in results)
    write_table_csv(path, cols, _meta(cfg, settings, converged=ok,
                                      history=[r["history"] for r in results]))
    return ok, [path]


def run_chi_scan(cfg, settings, model, baths, num, outdir):
    sec = cfg.get("chi_scan") or {}
    chis = [float(c) for c in sec["chis"]]
    scheme = Scheme.parse(sec.get("scheme", "TwoPoint"))
    exps = shared_exponents(baths, num)

    def observe(r):
        return np.concatenate([r[1].real.ravel(), r[1].imag.ravel()])
    res = converge_depth(lambda n: chi_grid(model, baths, chis, scheme, n, num, exps),
                         num.n_max, num.n_step, num.n_cap, num.conv_tol, observe)
    times, G = res.value
    cols = {"time": np.repeat(times[None], len(chis), 0).ravel(),
            "chi": np.repeat(chis, len(times)), "re_G": G.real.ravel(), "im_G": G.imag.ravel()}
    path = os.path.join(outdir, f"cgf_{scheme.value}.csv")
    write_table_csv(path, cols, _meta(cfg, settings, n_max=res.n_max,
                                      converged=res.converged, history=res.history))
    return res.converged, [path]


def run_oracle_compare(cfg, settings, model, baths, num, outdir):
    from .oracle import FiniteModeSystem, exact_cgf
    sec = cfg.get("oracle_compare") or {}
    chis = [float(c) for c in sec.get("chis", [-1.0, -0.5, 0.0, 0.5, 1.0])]
    fm = FiniteModeSystem.from_baths(model, baths, int(sec.get("fock_cutoff", 5)))
    files, ok = [], True
    for sch in sec.get("schemes", ["TwoPoint", "Single"]):
        scheme = Scheme.parse(sch)

        def observe(r):
            return np.concatenate([r[1].real.ravel(), r[1].imag.ravel()])
        res = converge_depth(lambda n: chi_grid(model, baths, chis, scheme, n, num),
                             num.n_max, num.n_step, num.n_cap, num.conv_tol, observe)
        times, G = res.value
        ex = np.array([exact_cgf(fm, c, times, scheme) for c in chis])
        cols = {"time": np.repeat(times[None], len(chis), 0).ravel(),
                "chi": np.repeat(chis, len(times)),
                "re_G_heom": G.real.ravel(), "im_G_heom": G.imag.ravel(),
                "re_G_exact": ex.real.ravel(), "im_G_exact": ex.imag.ravel(),
                "abs_err": np.abs(G - ex).ravel()}
        path = os.path.join(outdir, f"oracle_{scheme.value}.csv")
        write_table_csv(path, cols, _meta(cfg, settings, n_max=res.n_max,
                                          converged=res.converged,
                                          max_abs_err=float(np.max(np.abs(G - ex))),
                                          leakage=fm.flags.get("leakage")))
        files.append(path)
        ok &= res.converged
    draws = int(sec.get("eq5_draws", 0))
    if draws:
        files.append(_eq5_draws(cfg, settings, fm, draws, chis, outdir))
    return ok, files


def _eq5_draws(cfg, settings, fm, draws, chis, outdir):
    """Exact two-scheme identity residual on randomly perturbed oracle systems."""
    from .oracle import FiniteModeSystem, identity_check_eq5
    rng = np.random.default_rng(settings["seed"])
    cols = {"draw": [], "beta_scale": [], "gamma_scale": [], "residual": []}
    times = np.linspace(0.0, 10.0, 21)
    for i in range(draws):
        bs, gs = rng.uniform(0.5, 2.0), rng.uniform(0.5, 1.5)
        modes = [[(w, g * gs) for w, g in ms] for ms in fm.modes]
        sys_i = FiniteModeSystem(fm.model, [b * bs for b in fm.betas], modes,
                                 fm.fock_cutoff, fm.counted)
        cols["draw"].append(i)
        cols["beta_scale"].append(float(bs))
        cols["gamma_scale"].append(float(gs))
        cols["residual"].append(identity_check_eq5(sys_i, chis, times))
    path = os.path.join(outdir, "eq5_identity.csv")
    write_table_csv(path, cols, _meta(cfg, settings, max_residual=max(cols["residual"])))
    return path


RUNNERS = {"transient": run_transient, "conductance_scan": run_conductance,
           "chi_scan": run_chi_scan, "oracle_compare": run_oracle_compare}


def run(args) -> int:
    try:
        cfg, settings = resolve(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    try:
        model, baths, num = validate_config(cfg, settings)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    except (ValidationError, TypeError, KeyError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_VALIDATION
    outdir = settings["out"]
    os.makedirs(outdir, exist_ok=True)
    try:
        ok, files = RUNNERS[cfg["mode"]](cfg, settings, model, baths, num, outdir)
    except (NumericalAbort, FloatingPointError, FitError) as exc:
        log.error("numerical abort: %s", exc)
        return EXIT_NUMERICAL
    for f in files:
        log.info("wrote %s", f)
    if not ok:
        log.warning("hierarchy depth did not converge within n_cap; results flagged")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


# --------------------------------------------------------------------------
# compare


def compare_tables(path_a, path_b, rtol: float, columns=None, keys=("time", "chi"),
                   atol: float = 0.0):
    """Per-column max relative deviation; returns ``(passed, rows)``."""
    a = read_table_csv(path_a)
    b = read_table_csv(path_b)
    if set(a) != set(b):
        raise ValueError("tables have different columns")
    for k in keys:
        if k in a and (len(a[k]) != len(b[k]) or not np.allclose(a[k], b[k])):
            raise ValueError(f"grid mismatch in column {k!r}")
    n = {len(v) for v in a.values()} | {len(v) for v in b.values()}
    if len(n) != 1:
        raise ValueError("grid mismatch: different row counts")
    cols = columns or [c for c in a if c not in keys and np.issubdtype(a[c].dtype, np.number)]
    rows = []
    for c in cols:
        x, y = np.asarray(a[c]), np.asarray(b[c])
        scale = max(np.max(np.abs(y)), np.max(np.abs(x)), 1e-300)
        dev = float(np.max(np.abs(x - y)) / scale) if len(x) else 0.0
        rows.append({"quantity": c, "max_rel_dev": dev,
                     "pass": bool(dev <= rtol or np.max(np.abs(x - y), initial=0) <= atol)})
    return all(r["pass"] for r in rows), rows


def compare_columns(path, col_a, col_b, rtol):
    """Point-wise relative agreement of two columns of one table."""
    t = read_table_csv(path)
    x, y = np.asarray(t[col_a], float), np.asarray(t[col_b], float)
    dev = np.abs(x - y) / np.maximum(np.abs(y), 1e-300)
    return bool(np.all(dev <= rtol)), [{"quantity": f"{col_a} vs {col_b}",
                                        "max_rel_dev": float(np.max(dev)),
                                        "pass": bool(np.all(dev <= rtol))}]


def compare(args) -> int:
    try:
        if args.columns and len(args.reports) == 1:
            ca, cb = args.columns.split(",")
            ok, rows = compare_columns(args.reports[0], ca, cb, args.rtol)
        else:
            if len(args.reports) != 2:
                raise ValueError("compare needs two reports (or one with --columns a,b)")
            cols = args.columns.split(",") if args.columns else None
            ok, rows = compare_tables(args.reports[0], args.reports[1], args.rtol, cols,
                                      atol=args.atol)
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    print(f"{'quantity':<24} {'max_rel_dev':>12}  verdict")
    for r in rows:
        print(f"{r['quantity']:<24} {r['max_rel_dev']:>12.3e}  {'pass' if r['pass'] else 'FAIL'}")
    print(json.dumps({"pass": ok, "rows": rows}))
    return EXIT_OK if ok else EXIT_COMPARE_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="fcsheom", description=__doc__.split("\n")[1])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a configured computation")
    r.add_argument("--config")
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--nmax", type=int)
    r.add_argument("--dt", type=float)
    r.add_argument("--tmax", type=float)
    r.add_argument("--out")
    r.add_argument("--workers", type=int)
    r.add_argument("--seed", type=int)
    r.set_defaults(func=run)
    c = sub.add_parser("compare", help="compare two reports")
    c.add_argument("reports", nargs="+")
    c.add_argument("--rtol", type=float, default=1e-3)
    c.add_argument("--atol", type=float, default=0.0)
    c.add_argument("--columns")
    c.set_defaults(func=compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    warnings.simplefilter("default")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
