"""Command line interface and the end-to-end pipeline.

    stripstab [--config run.toml] [--out DIR] [--n N] [--profile KIND] <command> [flags]

Commands: spectrum, neutral, audit-h, green-check, hopf, simulate, roll,
pipeline, sweep.  Numeric tables go to CSV (first line ``# config_hash: ...``),
reports to JSON carrying a ``config_hash`` field.  STRIPSTAB_THREADS caps the
BLAS thread pool.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .amplitude import integrate, limit_cycle, reconstruct_roll
from .config import RunConfig, load_config
from .errors import ConfigurationError, PipelineError, StripStabError
from .greenfn import verify_resolvent_bound
from .hopf import hopf_coefficients
from .neutral import audit_H, find_critical_point, locate_neutral, trace_neutral_curve
from .orrsomm import assemble, eigen_spectrum
from .profiles import check_admissibility, make_profile
from .specgrid import build_discretization

log = logging.getLogger("stripstab")


def thread_limit():
    n = os.environ.get("STRIPSTAB_THREADS")
    if not n:
        return nullcontext()
    try:
        n = int(n)
    except ValueError as exc:
        raise ConfigurationError(f"STRIPSTAB_THREADS must be an integer, got {n!r}") from exc
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=max(n, 1))


class Writer:
    """Writes artifacts into one directory, stamping each with the config hash."""

    def __init__(self, out_dir, config_hash):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.hash = config_hash
        self.files = []

    def csv(self, name, header, rows, comments=()):
        path = self.dir / name
        with path.open("w", newline="") as fh:
            fh.write(f"# config_hash: {self.hash}\n")
            for c in comments:
                fh.write(f"# {c}\n")
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        self.files.append(name)
        return path

    def json(self, name, payload):
        path = self.dir / name
        body = dict(payload)
        body["config_hash"] = self.hash
        path.write_text(json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n")
        self.files.append(name)
        return path


def _fmt(v):
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if hasattr(obj, "value") and not isinstance(obj, (int, float, str)):
        return obj.value
    return obj


def _profile(cfg: RunConfig):
    p = cfg.profile
    opts = {"beta": p["beta"]}
    if p["path"] is not None:
        opts["path"] = p["path"]
    return make_profile(p["kind"], **opts)


def _auto_mu(hopf, fraction):
    """Offset |mu| = fraction * nu, signed so that a limit cycle exists."""
    mag = fraction * hopf.neutral.nu
    sign = 1.0 if hopf.c3.real > 0 else -1.0
    return sign * mag


# commands -------------------------------------------------------------------

def cmd_spectrum(cfg: RunConfig, w: Writer):
    s = cfg.spectrum
    prof = _profile(cfg)
    disc = build_discretization(cfg.N)
    pairs = eigen_spectrum(assemble(prof, s["alpha"], s["nu"], disc))
    rows = [(p.lam.real, p.lam.imag, p.c.real, p.c.imag, p.residual, p.gap) for p in pairs]
    w.csv("eigenvalues.csv", ["re_lambda", "im_lambda", "re_c", "im_c", "residual", "gap"], rows,
          [f"alpha={s['alpha']!r} nu={s['nu']!r} N={cfg.N}"])
    if s["eigenfunction"] and pairs:
        p = pairs[0]
        d = disc.D1 @ p.psi
        w.csv("eigenfunction.csv", ["y", "re_psi", "im_psi", "re_dpsi", "im_dpsi"],
              zip(disc.nodes, p.psi.real, p.psi.imag, d.real, d.imag))
    lead = pairs[0] if pairs else None
    return {"count": len(pairs),
            "leading_lambda": lead.lam if lead else None,
            "leading_c": lead.c if lead else None}


def cmd_neutral(cfg: RunConfig, w: Writer):
    s = cfg.neutral
    curve = trace_neutral_curve(_profile(cfg), (s["nu_min"], s["nu_max"]), int(s["points"]),
                                s["branch"], build_discretization(cfg.N))
    w.csv("neutral_curve.csv", ["nu", "alpha_plus", "omega_plus", "d_re_lambda_d_nu"],
          [(p.nu, p.alpha_plus, p.omega_plus, p.d_re_lambda_d_nu) for p in curve],
          [f"branch={s['branch']}"] + [f"failed nu={n!r}: {m}" for n, m in curve.failures])
    return {"points": len(curve), "failures": len(curve.failures)}


def _audit(cfg, nu, w):
    a = cfg.audit
    rep = audit_H(_profile(cfg), nu, build_discretization(cfg.N),
                  alpha_range=(a["alpha_min"], a["alpha_max"]), scan_points=int(a["scan_points"]),
                  seed=int(cfg.seed))
    w.json("h_audit.json", rep.as_dict())
    return rep


def cmd_audit(cfg: RunConfig, w: Writer):
    rep = _audit(cfg, cfg.audit["nu"], w)
    return {"passed": rep.passed, "alpha_plus": rep.alpha_plus, "sigma": rep.spectral_gap_sigma}


def cmd_green(cfg: RunConfig, w: Writer):
    g = cfg.green
    lams = 1j * np.geomspace(g["lambda_min"], g["lambda_max"], int(g["samples"]))
    rep = verify_resolvent_bound(_profile(cfg), g["alpha"], g["nu"], lams,
                                 build_discretization(cfg.N), n_forcings=int(g["forcings"]),
                                 seed=int(cfg.seed))
    w.csv("bound_report.csv", ["abs_lambda", "quotient", "quotient_h2", "norm"],
          zip(rep.magnitudes, rep.quotients, rep.h2_quotients, rep.norms),
          [f"slope={rep.slope!r} constant={rep.constant!r}",
           f"slope_h2={rep.slope_h2!r} constant_h2={rep.constant_h2!r}",
           f"slope_norm={rep.slope_norm!r} constant_norm={rep.constant_norm!r}"])
    print(f"fitted slope {rep.slope:.4f} (L2 quotient), {rep.slope_h2:.4f} (H2 quotient), "
          f"{rep.slope_norm:.4f} (operator norm)")
    return {"slope": rep.slope, "constant": rep.constant, "slope_h2": rep.slope_h2,
            "constant_h2": rep.constant_h2, "slope_norm": rep.slope_norm,
            "constant_norm": rep.constant_norm}


def _hopf(cfg, nu, w, point=None):
    prof = _profile(cfg)
    disc = build_discretization(cfg.N)
    if point is None:
        point = locate_neutral(prof, nu, disc).point
        if point is None:
            raise StripStabError(f"no neutral point at nu={nu!r}")
    h = hopf_coefficients(prof, point, disc, cfg.hopf["gauge"])
    w.json("hopf.json", h.as_dict())
    y = disc.nodes
    w.csv("psi1.csv", ["y", "re_psi1", "im_psi1"], zip(y, h.psi1.real, h.psi1.imag))
    w.csv("psi_adj.csv", ["y", "re_psi_adj", "im_psi_adj"], zip(y, h.psi_adj.real, h.psi_adj.imag))
    w.csv("psi2.csv", ["y", "re_psi2", "im_psi2"], zip(y, h.psi2.real, h.psi2.imag))
    w.csv("phi0.csv", ["y", "phi0", "u0"], zip(y, h.phi0, disc.D1 @ h.phi0),
          [f"gauge={h.gauge.value}"])
    return h


def cmd_hopf(cfg: RunConfig, w: Writer):
    h = _hopf(cfg, cfg.hopf["nu"], w)
    return {"classification": h.classification.value, "c1": h.c1, "c3": h.c3}


def _simulate(cfg, h, w):
    s = cfg.simulate
    mu = s["mu"] if s["mu"] is not None else _auto_mu(h, cfg.pipeline["mu_fraction"])
    lc = limit_cycle(h, mu)
    a0 = s["a0_re"]
    if a0 is None:
        a0 = 0.5 * lc.radius if lc is not None else 1e-3
    A0 = complex(a0, s["a0_im"])
    traj = integrate(h, mu, A0, float(s["t_final"]), float(s["dt"]), stride=int(s["stride"]))
    w.csv("amplitude.csv", ["t", "re_A", "im_A", "abs_A"],
          [(st.t, st.A.real, st.A.imag, abs(st.A)) for st in traj],
          [f"mu={mu!r} A0={A0!r} dt={s['dt']!r}", "terms O(|A|(mu^2 + |A|^4)) dropped"])
    return {"mu": mu, "final_abs_A": abs(traj[-1].A)}


def cmd_simulate(cfg: RunConfig, w: Writer):
    h = _hopf(cfg, cfg.hopf["nu"], w)
    return _simulate(cfg, h, w)


def _roll(cfg, h, w):
    r = cfg.roll
    mu = r["mu"] if r["mu"] is not None else _auto_mu(h, cfg.pipeline["mu_fraction"])
    field_ = reconstruct_roll(h, mu, int(r["nx"]), int(r["nt"]))
    X, Y = np.meshgrid(field_.x, field_.y)
    for k, t in enumerate(field_.t):
        w.csv(f"roll_t{k}.csv", ["x", "y", "u", "v"],
              zip(X.ravel(), Y.ravel(), field_.u[k].ravel(), field_.v[k].ravel()),
              [f"t={t!r}", field_.metadata["omitted"]])
    meta = dict(field_.metadata)
    meta["times"] = list(field_.t)
    w.json("metadata.json", meta)
    return {"mu": mu, "radius": field_.radius, "cycle_stable": meta["cycle_stable"]}


def cmd_roll(cfg: RunConfig, w: Writer):
    h = _hopf(cfg, cfg.hopf["nu"], w)
    return _roll(cfg, h, w)


# pipeline -------------------------------------------------------------------

@dataclass
class PipelineReport:
    headline: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    status: str = "ok"
    failed_stage: str | None = None
    out_dir: str = ""


def _versions():
    return {"stripstab": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def _manifest(cfg, w, rep):
    return w.json("manifest.json", {
        "config": cfg.to_dict(), "versions": _versions(), "timings": rep.timings,
        "headline": rep.headline, "artifacts": sorted(set(w.files) | {"manifest.json"}),
        "status": rep.status, "failed_stage": rep.failed_stage})


def run_pipeline(cfg: RunConfig, out_dir=None) -> PipelineReport:
    """critical point -> audit -> Hopf coefficients -> limit cycle -> roll at pipeline.nu."""
    w = Writer(out_dir or cfg.output_dir, cfg.hash())
    rep = PipelineReport(out_dir=str(w.dir))
    nu = float(cfg.pipeline["nu"])
    state = {}

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except Exception as exc:
            rep.status, rep.failed_stage = "failed", name
            rep.timings[name] = time.perf_counter() - t0
            rep.artifacts = list(w.files)
            _manifest(cfg, w, rep)
            raise PipelineError(name, exc) from exc
        rep.timings[name] = time.perf_counter() - t0
        log.info("stage %s done in %.2fs", name, rep.timings[name])
        return out

    def profile_stage():
        prof = _profile(cfg)
        adm = check_admissibility(prof)
        rep.headline["profile"] = prof.describe()
        rep.headline["admissible"] = adm.admissible
        rep.headline["concavity"] = adm.concavity.value
        return prof

    prof = stage("profile", profile_stage)
    disc = build_discretization(cfg.N)

    if cfg.pipeline["critical"]:
        p = cfg.pipeline

        def critical_stage():
            cp = find_critical_point(prof, disc, (p["critical_nu_min"], p["critical_nu_max"]),
                                     (p["critical_alpha_min"], p["critical_alpha_max"]))
            rep.headline["critical"] = {"nu": cp.nu, "alpha": cp.alpha, "omega": cp.omega,
                                        "reynolds_channel": cp.reynolds_channel,
                                        "alpha_channel": cp.alpha_channel}
            return cp

        stage("critical", critical_stage)

    def audit_stage():
        r = _audit(cfg, nu, w)
        rep.headline["audit"] = {"passed": r.passed, "alpha_plus": r.alpha_plus,
                                 "omega_plus": r.omega_plus, "sigma": r.spectral_gap_sigma,
                                 "transversality": r.transversality}
        if r.point is None:
            raise StripStabError(f"no neutral point at nu={nu!r}")
        return r

    audit = stage("audit", audit_stage)

    def hopf_stage():
        h = _hopf(cfg, nu, w, point=audit.point)
        d = h.as_dict()
        rep.headline["hopf"] = {k: d[k] for k in ("alpha_plus", "omega_plus", "c1", "c1_fd", "c3",
                                                   "c3_error_bar", "classification", "gauge")}
        return h

    h = stage("hopf", hopf_stage)

    def cycle_stage():
        mu = cfg.roll["mu"] if cfg.roll["mu"] is not None else _auto_mu(h, cfg.pipeline["mu_fraction"])
        lc = limit_cycle(h, mu)
        rep.headline["limit_cycle"] = None if lc is None else {
            "mu": mu, "radius": lc.radius, "frequency": lc.frequency, "stable": lc.stable}
        state["mu"] = mu

    stage("limit_cycle", cycle_stage)
    stage("simulate", lambda: rep.headline.__setitem__("simulate", _simulate(cfg, h, w)))
    stage("roll", lambda: rep.headline.__setitem__("roll", _roll(cfg, h, w)))
    rep.artifacts = sorted(set(w.files) | {"manifest.json"})
    _manifest(cfg, w, rep)
    return rep


def _sweep_one(args):
    data, base_dir, nu, out = args
    cfg = RunConfig(data, base_dir).override("pipeline", nu=nu)
    try:
        rep = run_pipeline(cfg, out)
        h = rep.headline.get("hopf", {})
        return (nu, "ok", h.get("alpha_plus"), h.get("omega_plus"), h.get("c1"), h.get("c3"),
                h.get("classification"))
    except PipelineError as exc:
        return (nu, f"failed:{exc.stage}", None, None, None, None, None)


def cmd_sweep(cfg: RunConfig, w: Writer):
    s = cfg.sweep
    jobs = [(cfg.to_dict(), str(cfg.base_dir), float(nu), str(w.dir / f"nu_{i:03d}"))
            for i, nu in enumerate(s["nus"])]
    workers = max(int(s["workers"]), 1)
    if workers == 1:
        results = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_one, jobs))
    rows = []
    for nu, status, a, om, c1, c3, cl in results:
        c1 = c1 or [None, None]
        c3 = c3 or [None, None]
        rows.append((nu, status, a, om, c1[0], c1[1], c3[0], c3[1], cl))
    w.csv("sweep.csv", ["nu", "status", "alpha_plus", "omega_plus", "re_c1", "im_c1",
                        "re_c3", "im_c3", "classification"], rows)
    return {"runs": len(rows), "failed": sum(1 for r in rows if r[1] != "ok")}


COMMANDS = {
    "spectrum": cmd_spectrum, "neutral": cmd_neutral, "audit-h": cmd_audit,
    "green-check": cmd_green, "hopf": cmd_hopf, "simulate": cmd_simulate, "roll": cmd_roll,
    "sweep": cmd_sweep,
}


def _common(suppress):
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    cp = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    cp.add_argument("--config", help="TOML run configuration", **kw)
    cp.add_argument("--out", help="output directory", **kw)
    cp.add_argument("--n", type=int, help="Chebyshev degree N", **kw)
    cp.add_argument("--profile", help="poiseuille | tanh | couette | tabulated", **kw)
    cp.add_argument("--profile-path", help="CSV (y, U) for a tabulated profile", **kw)
    cp.add_argument("--seed", type=int, **kw)
    cp.add_argument("-v", "--verbose", action="store_true", **kw)
    return cp


def build_parser():
    ap = argparse.ArgumentParser(prog="stripstab", description=__doc__.splitlines()[0],
                                 parents=[_common(False)], allow_abbrev=False)
    common = _common(True)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[common], allow_abbrev=False,
                       help="filtered Orr-Sommerfeld spectrum")
    p.add_argument("--alpha", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--no-eigenfunction", action="store_true")

    p = sub.add_parser("neutral", parents=[common], allow_abbrev=False,
                       help="trace a neutral curve")
    p.add_argument("--nu-min", type=float)
    p.add_argument("--nu-max", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--branch", choices=("upper", "lower"))

    p = sub.add_parser("audit-h", parents=[common], allow_abbrev=False,
                       help="audit the spectral hypothesis at one nu")
    p.add_argument("--nu", type=float)

    p = sub.add_parser("green-check", parents=[common], allow_abbrev=False,
                       help="resolvent decay fit")
    p.add_argument("--alpha", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--lambda-min", type=float)
    p.add_argument("--lambda-max", type=float)
    p.add_argument("--samples", type=int)

    p = sub.add_parser("hopf", parents=[common], allow_abbrev=False,
                       help="normal-form coefficients")
    p.add_argument("--nu", type=float)
    p.add_argument("--gauge", choices=("pressure", "flux"))

    p = sub.add_parser("simulate", parents=[common], allow_abbrev=False,
                       help="integrate the amplitude equation")
    p.add_argument("--nu", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--a0-re", type=float)
    p.add_argument("--a0-im", type=float)
    p.add_argument("--t-final", type=float)
    p.add_argument("--dt", type=float)

    p = sub.add_parser("roll", parents=[common], allow_abbrev=False,
                       help="reconstruct the bifurcated roll")
    p.add_argument("--nu", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--nx", type=int)
    p.add_argument("--nt", type=int)

    p = sub.add_parser("pipeline", parents=[common], allow_abbrev=False,
                       help="critical point, audit, Hopf, roll")
    p.add_argument("--nu", type=float)
    p.add_argument("--no-critical", action="store_true")

    p = sub.add_parser("sweep", parents=[common], allow_abbrev=False,
                       help="pipeline over several nu")
    p.add_argument("--nus", type=float, nargs="+")
    p.add_argument("--workers", type=int)
    return ap


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = cfg.override(None, output_dir=args.out, seed=args.seed)
    cfg = cfg.override("discretization", N=args.n)
    if args.profile is not None or args.profile_path is not None:
        kind = args.profile or "tabulated"
        cfg = cfg.override("profile", kind=kind, path=args.profile_path)
    c = args.command
    if c == "spectrum":
        cfg = cfg.override("spectrum", alpha=args.alpha, nu=args.nu,
                           eigenfunction=False if args.no_eigenfunction else None)
    elif c == "neutral":
        cfg = cfg.override("neutral", nu_min=args.nu_min, nu_max=args.nu_max, points=args.points,
                           branch=args.branch)
    elif c == "audit-h":
        cfg = cfg.override("audit", nu=args.nu)
    elif c == "green-check":
        cfg = cfg.override("green", alpha=args.alpha, nu=args.nu, lambda_min=args.lambda_min,
                           lambda_max=args.lambda_max, samples=args.samples)
    elif c == "hopf":
        cfg = cfg.override("hopf", nu=args.nu, gauge=args.gauge)
    elif c == "simulate":
        cfg = cfg.override("hopf", nu=args.nu)
        cfg = cfg.override("simulate", mu=args.mu, a0_re=args.a0_re, a0_im=args.a0_im,
                           t_final=args.t_final, dt=args.dt)
    elif c == "roll":
        cfg = cfg.override("hopf", nu=args.nu)
        cfg = cfg.override("roll", mu=args.mu, nx=args.nx, nt=args.nt)
    elif c == "pipeline":
        cfg = cfg.override("pipeline", nu=args.nu, critical=False if args.no_critical else None)
    elif c == "sweep":
        cfg = cfg.override("sweep", nus=args.nus, workers=args.workers)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        with thread_limit():
            if args.command == "pipeline":
                rep = run_pipeline(cfg)
                print(json.dumps(_jsonable(rep.headline), indent=2, sort_keys=True))
                return 0
            w = Writer(cfg.output_dir, cfg.hash())
            out = COMMANDS[args.command](cfg, w)
            print(json.dumps(_jsonable(out), sort_keys=True))
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"pipeline failed in stage {exc.stage!r}: {exc.cause}", file=sys.stderr)
        return 1
    except StripStabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
