"""Command line front end.

Every command writes into an output directory (``--out``, overridden by the
``RSSKIT_OUTDIR`` environment variable):

* ``config.json``  effective configuration (after file + flag merge)
* ``report.json``  machine-readable run report (schema ``rsskit.report/1``)
* ``*.csv``        two-column histories ``t,value``
* ``*.txt``        field dumps: three header lines ``nx``, ``ny``, ``h`` then
  ``ny`` rows of ``nx`` values (x fastest)

Exit codes: 0 converged/ok, 2 not converged, 3 blow-up, 1 usage error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import cavity as cav
from . import problems as prob
from . import stability as stab
from .errors import RSSError
from .grid_ops import Grid1D, KronSumOperator, build_compact_d2, build_fd2_d2
from .solvers import FastPoissonContext, equivalence_bounds, gmres
from .timestep import Outcome, SchemeConfig, SemilinearProblem, step

SCHEMA = "rsskit.report/1"
OUTDIR_ENV = "RSSKIT_OUTDIR"

EXIT_OK, EXIT_USAGE, EXIT_NC, EXIT_BLOWUP = 0, 1, 2, 3
_EXIT = {Outcome.CONVERGED: EXIT_OK, Outcome.NOT_CONVERGED: EXIT_NC, Outcome.BLOW_UP: EXIT_BLOWUP}

# Recorded reference values for the long runs (opt-in, hours at full size).
PRESETS = {
    "re100": dict(Re=100, N=127, tau=1.0, dt=0.001, extrapolate=True, eps_stop=1e-3,
                  expected={"intensity": 0.1026, "x": 0.6172, "y": 0.7422}),
    "re400": dict(Re=400, N=127, tau=1.0, dt=0.017, extrapolate=True, eps_stop=1e-3,
                  expected={"intensity": 0.1123, "x": 0.5625, "y": 0.6094}),
    "re1000": dict(Re=1000, N=127, tau=1.0, dt=0.0005, extrapolate=True, eps_stop=1e-5,
                   expected={"intensity": 0.1158, "x": 0.5391, "y": 0.5703}),
    "re3200-nlrss": dict(Re=3200, N=127, tau=10.0, dt=0.1, kind="nlrss", eps_stop=1e-5,
                         expected={"T_c": 223.9}),
    "rect-re3200": dict(Re=3200, N=255, Ly=2, tau=1.0, dt=0.0005, extrapolate=True, eps_stop=1e-5,
                        expected={"max": 0.0196, "x": 0.4492, "y": 0.6914}),
}


# ---------------------------------------------------------------------------
# serialization


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        if math.isnan(f):
            return "nan"
        return f
    if hasattr(v, "value") and isinstance(getattr(v, "value"), str):
        return v.value
    return v


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def read_report(path) -> dict:
    d = json.loads(Path(path).read_text())
    if d.get("schema") != SCHEMA:
        raise ValueError(f"{path}: unknown report schema {d.get('schema')!r}")
    return d


def write_history(path: Path, t, values, name: str = "value") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", name])
        for a, b in zip(t, values):
            w.writerow([repr(float(a)), repr(float(b))])


def read_history(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


def write_field(path: Path, u: np.ndarray, h: float) -> None:
    ny, nx = u.shape
    with open(path, "w") as fh:
        fh.write(f"nx {nx}\nny {ny}\nh {h!r}\n")
        np.savetxt(fh, u, fmt="%.17g")


def read_field(path) -> tuple[np.ndarray, float]:
    with open(path) as fh:
        nx = int(fh.readline().split()[1])
        ny = int(fh.readline().split()[1])
        h = float(fh.readline().split()[1])
        u = np.loadtxt(fh, ndmin=2)
    if u.shape != (ny, nx):
        raise ValueError(f"{path}: header says {ny}x{nx}, data is {u.shape}")
    return u, h


TABLE_COLUMNS = ["tau", "dt", "scheme", "extrapolate", "dt_max", "T_c", "outcome", "NT", "speedup"]


def write_table(path_csv: Path, path_txt: Optional[Path], rows: list[dict]) -> None:
    with open(path_csv, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in TABLE_COLUMNS})
    if path_txt is not None:
        cells = [TABLE_COLUMNS] + [[str(r.get(k, "")) for k in TABLE_COLUMNS] for r in rows]
        widths = [max(len(c[i]) for c in cells) for i in range(len(TABLE_COLUMNS))]
        lines = ["  ".join(c[i].rjust(widths[i]) for i in range(len(widths))) for c in cells]
        path_txt.write_text("\n".join(lines) + "\n")


def read_table(path_csv) -> list[dict]:
    with open(path_csv, newline="") as fh:
        return [dict(r) for r in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# config handling


def _outdir(cfg: dict) -> Path:
    d = Path(os.environ.get(OUTDIR_ENV) or cfg["out"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _merge_config(args, parser) -> dict:
    """Defaults < config file < explicitly given flags."""
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    if getattr(args, "config", None):
        try:
            filecfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        if not isinstance(filecfg, dict):
            raise UsageError("config file must hold a flat JSON object")
        explicit = _explicit_dests(parser, sys.argv[1:] if args._argv is None else args._argv)
        for k, v in filecfg.items():
            key = k.replace("-", "_")
            if key not in cfg:
                raise UsageError(f"unknown config key {k!r}")
            if key not in explicit:
                cfg[key] = v
    cfg.pop("_argv", None)
    return cfg


def _explicit_dests(parser, argv) -> set:
    sub = None
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for a in argv:
                if a in action.choices:
                    sub = action.choices[a]
                    break
    found = set()
    if sub is None:
        return found
    for action in sub._actions:
        for opt in action.option_strings:
            if any(a == opt or a.startswith(opt + "=") for a in argv):
                found.add(action.dest)
    return found


class UsageError(Exception):
    pass


def _report(command: str, cfg: dict, **payload) -> dict:
    rep = {"schema": SCHEMA, "command": command, "config": cfg}
    rep.update(payload)
    return rep


def _finish(out: Path, cfg: dict, report: dict) -> None:
    write_json(out / "config.json", cfg)
    write_json(out / "report.json", report)


# ---------------------------------------------------------------------------
# commands


def cmd_poisson(cfg: dict, out: Path) -> int:
    dim, n = int(cfg["dim"]), int(cfg["n"])
    if dim not in (2, 3):
        raise UsageError("dim must be 2 or 3")
    shape = (n,) * dim
    size = n**dim
    g = Grid1D(n)
    if cfg["operator"] == "identity":
        matvec, precond = (lambda v: v), None
    else:
        op = build_compact_d2(g)
        A = KronSumOperator((op,) * dim, shape)
        ctx = FastPoissonContext.build(shape, (g.h,) * dim)
        matvec, precond = A.matvec, ctx.solve
    rng = np.random.default_rng(cfg["seed"])
    counts, residuals = [], []
    t0 = time.perf_counter()
    for _ in range(int(cfg["runs"])):
        b = 1.0 - 2.0 * rng.random(size)
        x, st = gmres(matvec, b, precond=precond, tol=cfg["tol"], restart=cfg["restart"], side=cfg["side"])
        counts.append(st.iterations)
        residuals.append(float(np.linalg.norm(b - matvec(x)) / np.linalg.norm(b)))
    report = _report(
        "poisson", cfg, outcome="Converged", iterations=counts, max_iterations=max(counts),
        true_relative_residuals=residuals, timing={"seconds": time.perf_counter() - t0},
    )
    _finish(out, cfg, report)
    print(f"poisson dim={dim} n={n}: max iterations {max(counts)} over {len(counts)} runs")
    return EXIT_OK


def _heat_run(cfg: dict, tau: float, out: Path) -> dict:
    p = prob.heat_problem(int(cfg["n"]), dim=int(cfg["dim"]), preconditioner=cfg["preconditioner"])
    sc = SchemeConfig(kind=cfg["scheme"], tau=tau, dt=cfg["dt"], extrapolate=cfg["extrapolate"])
    steps = int(round(cfg["T_final"] / cfg["dt"]))
    u = p.exact(0.0)
    ts, errs, norms = [0.0], [0.0], [float(np.linalg.norm(u))]
    outcome = Outcome.CONVERGED
    with np.errstate(all="ignore"):
        for k in range(1, steps + 1):
            u = step(p, u, sc)
            t = k * sc.dt
            nu = float(np.linalg.norm(u))
            if not np.isfinite(nu) or np.max(np.abs(u)) > 1e10:
                outcome = Outcome.BLOW_UP
                break
            ts.append(t)
            norms.append(nu)
            errs.append(float(np.max(np.abs(u - p.exact(t)))))
    tag = f"tau{tau:g}"
    write_history(out / f"error_{tag}.csv", ts, errs, "max_error")
    write_history(out / f"norm_{tag}.csv", ts, norms, "norm")
    return {"tau": tau, "outcome": outcome, "final_norm": norms[-1], "final_error": errs[-1], "max_error": max(errs)}


def cmd_heat(cfg: dict, out: Path) -> int:
    taus = cfg["tau"] if isinstance(cfg["tau"], list) else [cfg["tau"]]
    t0 = time.perf_counter()
    runs = [_heat_run(cfg, float(t), out) for t in taus]
    worst = Outcome.BLOW_UP if any(r["outcome"] is Outcome.BLOW_UP for r in runs) else Outcome.CONVERGED
    report = _report("heat", cfg, outcome=worst, runs=runs, timing={"seconds": time.perf_counter() - t0})
    _finish(out, cfg, report)
    for r in runs:
        print(f"heat tau={r['tau']:g}: {r['outcome'].value}, final |u| {r['final_norm']:.3e}, max error {r['max_error']:.3e}")
    return _EXIT[worst]


def cmd_allen_cahn(cfg: dict, out: Path) -> int:
    p = prob.allen_cahn_problem(cfg["eps"], n=int(cfg["n"]))
    A = p.A.toarray()
    B = np.diag(np.diag(A)) if cfg["stabilizer"] == "diagonal" else A
    _, beta = equivalence_bounds(A, B)
    rho = float(np.max(np.linalg.eigvalsh(A)))
    tau = beta if cfg["tau"] is None else float(cfg["tau"])
    L = p.L_margin if cfg["L"] is None else float(cfg["L"])
    bound = stab.dtmax_allen_cahn(tau, beta, 0.0, rho, L, cfg["eps"])
    dt = cfg["dt"] if cfg["dt"] is not None else (0.9 * bound.dt_max if not bound.unconditional else 1e-2)
    sc = SchemeConfig(kind="rss", tau=tau, dt=dt)
    t0 = time.perf_counter()
    with np.errstate(all="ignore"):
        u, rec = prob.run_allen_cahn(
            p, sc, int(cfg["steps"]), seed=cfg["seed"], B=cfg["stabilizer"], scheme=cfg["scheme"], S=cfg["S"]
        )
    blown = not np.all(np.isfinite(rec.energy))
    outcome = Outcome.BLOW_UP if blown else Outcome.CONVERGED
    write_history(out / "energy.csv", rec.times, rec.energy, "energy")
    report = _report(
        "allen-cahn", cfg, outcome=outcome, tau=tau, dt=dt, beta=beta, L=L,
        bound=bound.to_dict(), energy_non_increasing=rec.is_non_increasing(1e-10),
        max_energy_increment=float(np.max(rec.increments())) if not blown else "nan",
        final_energy=float(rec.energy[-1]), timing={"seconds": time.perf_counter() - t0},
    )
    _finish(out, cfg, report)
    print(f"allen-cahn eps={cfg['eps']}: dt={dt:.4g} tau={tau:.4g}, energy non-increasing: {report['energy_non_increasing']}")
    return _EXIT[outcome]


def _cavity_config(cfg: dict) -> tuple[cav.CavityConfig, dict]:
    expected = {}
    base = {}
    if cfg.get("preset"):
        base = dict(PRESETS[cfg["preset"]])
        expected = base.pop("expected")
    keys = ("Re", "N", "Ly", "lid", "tau", "dt", "eps_stop", "kind", "extrapolate", "wall_order", "T_max", "refresh")
    for k in keys:
        if cfg.get(k) is not None:
            base[k] = cfg[k]
    return cav.CavityConfig(**base), expected


def cmd_cavity(cfg: dict, out: Path) -> int:
    cc, expected = _cavity_config(cfg)
    t0 = time.perf_counter()
    state0, _ = cav.stokes_init(cc)
    log_every = int(cfg.get("log_every") or 0)
    progress = (lambda k, t, r: print(f"  step {k} t={t:.4g} |dpsi/dt|={r:.3e}", flush=True)) if log_every else None
    if progress is not None:
        inner = progress
        progress = lambda k, t, r: inner(k, t, r) if k % log_every == 0 else None
    rep, state = cav.run_cavity(cc, state0, progress=progress)
    vort = cav.locate_vortices(state.psi, cc.grid)
    write_field(out / "omega.txt", state.omega, cc.h)
    write_field(out / "psi.txt", state.psi, cc.h)
    write_history(out / "residual.csv", cc.dt * np.arange(1, len(rep.residual_history) + 1), rep.residual_history, "dpsi_dt")
    report = _report(
        "cavity", cfg, outcome=rep.outcome, label=rep.label, T_c=rep.T_c, steps=rep.steps,
        NT=rep.NT, poisson_iterations=state.poisson_iterations, vortices=vort.as_dict(),
        expected=expected, timing={"seconds": time.perf_counter() - t0},
    )
    _finish(out, cfg, report)
    p = vort.primary
    print(f"cavity Re={cc.Re:g} N={cc.N}: {rep.outcome.value} T_c={rep.label} primary {p.value:.4f} at ({p.x:.4f}, {p.y:.4f})")
    return _EXIT[rep.outcome]


def _stability_pair(cfg):
    n = int(cfg["n"])
    g = Grid1D(n)
    A = build_compact_d2(g).to_dense()
    B = build_fd2_d2(g).to_dense()
    return A, B


def cmd_stability(cfg: dict, out: Path) -> int:
    A, B = _stability_pair(cfg)
    c = stab.pair_constants(A, B)
    beta, rho = c["beta"], c["rho_A"]
    fe = 2.0 / rho
    rows = []
    p = SemilinearProblem(A=A, B=B)
    t0 = time.perf_counter()
    for m in cfg["tau_beta"]:
        tau = float(m) * beta
        lin = stab.dtmax_linear(tau, beta, rho)
        ns = stab.dtmax_nonsymmetric(tau, c["alpha"], beta, c["lmin_B"], c["lmax_B"], c["delta"], strict=False)
        cap = cfg["cap"] * fe
        emp = stab.empirical_dtmax(p, SchemeConfig(kind="rss", tau=tau, dt=fe), cap) if cfg["empirical"] else None
        rows.append({
            "tau": tau, "tau_over_beta": float(m), "kappa": stab.stability_gain(tau, beta),
            "dt_max_linear": lin.dt_max, "label_linear": lin.label,
            "dt_max_nonsymmetric": ns.dt_max, "label_nonsymmetric": ns.label, "branch_nonsymmetric": ns.case_label,
            "hypothesis_nonsymmetric": ns.hypothesis_ok,
            "dt_max_empirical": emp if emp is None or emp < cap else "inf",
        })
    report = _report("stability", cfg, outcome="Converged", constants=c, forward_euler_limit=fe, rows=rows,
                     timing={"seconds": time.perf_counter() - t0})
    _finish(out, cfg, report)
    print(f"{'tau':>10} {'kappa':>8} {'linear':>12} {'nonsym':>12} {'empirical':>12}")
    for r in rows:
        k = "inf" if math.isinf(r["kappa"]) else f"{r['kappa']:.3g}"
        e = r["dt_max_empirical"]
        e = "-" if e is None else (e if isinstance(e, str) else f"{e:.4g}")
        print(f"{r['tau']:>10.4g} {k:>8} {r['label_linear']:>12} {r['label_nonsymmetric']:>12} {e:>12}")
    return EXIT_OK


def _parse_row(r) -> dict:
    if isinstance(r, str):
        parts = [x.strip() for x in r.split(",")]
    else:
        parts = list(r)
    if len(parts) < 2:
        raise UsageError(f"sweep row needs at least tau,dt: {r!r}")
    scheme = parts[2] if len(parts) > 2 else "rss"
    ex = parts[3] if len(parts) > 3 else False
    if isinstance(ex, str):
        ex = ex.lower() in ("1", "true", "yes", "extrap", "y")
    return {"tau": float(parts[0]), "dt": float(parts[1]), "scheme": str(scheme), "extrapolate": bool(ex)}


def _sweep_one(args) -> dict:
    base, row = args
    cc = base.replace(tau=row["tau"], dt=row["dt"], kind=row["scheme"], extrapolate=row["extrapolate"])
    state0, _ = cav.stokes_init(cc)
    rep, _ = cav.run_cavity(cc, state0)
    return dict(row, T_c=rep.label, outcome=rep.outcome.value, NT=rep.NT, dt_max="")


def cmd_sweep(cfg: dict, out: Path) -> int:
    cc, _ = _cavity_config(cfg)
    rows = [_parse_row(r) for r in (cfg.get("rows") or [])]
    t0 = time.perf_counter()
    jobs = int(cfg.get("jobs") or 1)
    if jobs > 1 and len(rows) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_sweep_one, [(cc, r) for r in rows]))
    else:
        results = [_sweep_one((cc, r)) for r in rows]
    ref = next((r["NT"] for r in results if r["outcome"] == Outcome.CONVERGED.value), None)
    for r in results:
        ok = r["outcome"] == Outcome.CONVERGED.value
        r["speedup"] = f"{ref / r['NT']:.2f}" if ok and ref else ""
        if not ok:
            r["NT"] = ""
    write_table(out / "sweep.csv", out / "sweep.txt", results)
    report = _report("sweep", cfg, outcome="Converged", rows=results, timing={"seconds": time.perf_counter() - t0})
    _finish(out, cfg, report)
    if results:
        print((out / "sweep.txt").read_text(), end="")
    else:
        print("sweep: no rows")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _bool(s: str) -> bool:
    v = str(s).lower()
    if v in ("1", "true", "yes", "y", "on"):
        return True
    if v in ("0", "false", "no", "n", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rsskit", description="Residual smoothing schemes: experiments and reports.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat JSON file of settings; explicit flags override it")
        p.add_argument("--out", default="rsskit-out", help=f"output directory (env {OUTDIR_ENV} overrides)")
        p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")

    p = sub.add_parser("poisson", help="random-rhs preconditioned GMRES on the compact Poisson problem")
    common(p)
    p.add_argument("--dim", type=int, default=2, help="2 or 3 (default 2)")
    p.add_argument("--n", type=int, default=15, help="interior points per direction (default 15)")
    p.add_argument("--runs", type=int, default=5, help="independent right-hand sides (default 5)")
    p.add_argument("--tol", type=float, default=1e-12, help="relative residual tolerance (default 1e-12)")
    p.add_argument("--restart", type=int, default=30, help="GMRES restart length (default 30)")
    p.add_argument("--side", choices=("left", "right"), default="left", help="preconditioning side (default left)")
    p.add_argument("--operator", choices=("compact", "identity"), default="compact", help="system matrix (default compact)")
    p.set_defaults(func=cmd_poisson)

    p = sub.add_parser("heat", help="heat equation with the manufactured solution")
    common(p)
    p.add_argument("--n", type=int, default=127, help="interior points (default 127)")
    p.add_argument("--dim", type=int, default=1, help="1 or 2 (default 1)")
    p.add_argument("--tau", type=float, nargs="+", default=[1.0], help="one or more tau values (default 1)")
    p.add_argument("--dt", type=float, default=0.004, help="time step (default 0.004)")
    p.add_argument("--T-final", dest="T_final", type=float, default=1.0, help="final time (default 1)")
    p.add_argument("--scheme", default="rss", help="forward_euler|backward_euler|theta|rss (default rss)")
    p.add_argument("--extrapolate", type=_bool, default=False, help="Richardson extrapolation (default false)")
    p.add_argument("--preconditioner", choices=("second_order", "diagonal", "identity"), default="second_order",
                   help="stabilizing operator B (default second_order)")
    p.set_defaults(func=cmd_heat)

    p = sub.add_parser("allen-cahn", help="Allen-Cahn energy history under RSS or the stabilized scheme of Shen")
    common(p)
    p.add_argument("--eps", type=float, default=0.1, help="interface width (default 0.1)")
    p.add_argument("--n", type=int, default=63, help="cells (default 63)")
    p.add_argument("--tau", type=float, default=None, help="stabilization (default beta)")
    p.add_argument("--dt", type=float, default=None, help="time step (default 0.9 x certified bound)")
    p.add_argument("--L", type=float, default=None, help="bound on |f'| (default 2.63, |u| <= 1.1)")
    p.add_argument("--steps", type=int, default=1000, help="number of steps (default 1000)")
    p.add_argument("--stabilizer", choices=("diagonal", "A"), default="diagonal", help="B for RSS (default diagonal)")
    p.add_argument("--scheme", choices=("rss", "shen"), default="rss", help="time scheme (default rss)")
    p.add_argument("--S", type=float, default=1.5, help="Shen stabilization constant (default 1.5)")
    p.set_defaults(func=cmd_allen_cahn)

    def cavity_args(p):
        p.add_argument("--preset", choices=sorted(PRESETS), default=None, help="reference configuration (long runs)")
        p.add_argument("--Re", type=float, default=None, help="Reynolds number (default 100)")
        p.add_argument("--N", type=int, default=None, help="interior points in x (default 63)")
        p.add_argument("--Ly", type=int, default=None, help="cavity height 1 or 2 (default 1)")
        p.add_argument("--lid", choices=sorted(cav.LIDS), default=None, help="lid profile A or B (default A)")
        p.add_argument("--eps-stop", dest="eps_stop", type=float, default=None, help="steady tolerance (default 1e-5)")
        p.add_argument("--wall-order", dest="wall_order", type=int, default=None, help="2 or 4 (default 4)")
        p.add_argument("--T-max", dest="T_max", type=float, default=None, help="give-up time (default 2000)")
        p.add_argument("--refresh", type=int, default=None, help="NLRSS operator refresh stride (default 1)")

    p = sub.add_parser("cavity", help="driven cavity to steady state")
    common(p)
    cavity_args(p)
    p.add_argument("--tau", type=float, default=None, help="stabilization (default 1)")
    p.add_argument("--dt", type=float, default=None, help="time step (default 0.01)")
    p.add_argument("--kind", choices=("rss", "nlrss"), default=None, help="scheme (default rss)")
    p.add_argument("--extrapolate", type=_bool, default=None, help="Richardson extrapolation (default false)")
    p.add_argument("--log-every", dest="log_every", type=int, default=0, help="print progress every k steps")
    p.set_defaults(func=cmd_cavity)

    p = sub.add_parser("stability", help="analytic vs empirical time-step limits for the compact/second-order pair")
    common(p)
    p.add_argument("--n", type=int, default=15, help="1D interior points (default 15)")
    p.add_argument("--tau-beta", dest="tau_beta", type=float, nargs="+", default=[0.0, 0.25, 0.5],
                   help="tau values as multiples of beta (default 0 0.25 0.5)")
    p.add_argument("--cap", type=float, default=1000.0, help="empirical search cap in forward-Euler limits (default 1000)")
    p.add_argument("--empirical", type=_bool, default=True, help="run the bisection (default true)")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("sweep", help="table of steady-state times over (tau, dt, scheme) rows")
    common(p)
    cavity_args(p)
    p.add_argument("--row", dest="rows", action="append", default=None,
                   help="tau,dt[,scheme[,extrapolate]]; repeatable")
    p.add_argument("--jobs", type=int, default=1, help="parallel rows (default 1)")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    args._argv = argv
    try:
        cfg = _merge_config(args, parser)
        cfg["command"] = args.command
        out = _outdir(cfg)
        # the report lives in out; keeping the path out of it keeps reruns byte-identical
        cfg.pop("out", None)
        return args.func(cfg, out)
    except (UsageError, ValueError, RSSError) as exc:
        print(f"rsskit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
