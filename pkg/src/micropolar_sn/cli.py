"""Command-line entry point: ``micropolar-sn <subcommand> [options]``.

Every run writes CSV files plus ``manifest.json`` into ``<out>/<subcommand>/``.
Numeric CSVs are deterministic for a fixed config, seed and thread count;
the manifest lists each file with its sha256.
"""
import argparse
import csv
import hashlib
import json
import numbers
import os
import sys
import time
from pathlib import Path

__version__ = "0.1.0"

SUBCOMMANDS = ("simulate", "nash", "leader", "check", "norms", "report")
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def fmt(value):
    """CSV cell: integers as is, reals in scientific notation with 17 significant digits."""
    if type(value).__name__ in ("bool", "bool_"):
        return str(int(value))
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, str):
        return value
    return format(float(value), ".16e")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Run:
    """Collects output files and per-stage residuals for the manifest."""

    def __init__(self, out_dir, subcommand, config):
        self.dir = Path(out_dir) / subcommand
        self.dir.mkdir(parents=True, exist_ok=True)
        self.subcommand = subcommand
        self.config = config
        self.files = []
        self.residuals = {}
        self.start = time.perf_counter()

    def csv(self, name, header, rows):
        self.files.append(write_csv(self.dir / name, header, rows))

    def finish(self, status=0):
        manifest = {
            "subcommand": self.subcommand,
            "version": __version__,
            "config_sha256": self.config.hash if self.config is not None else None,
            "seed": self.config.seed if self.config is not None else None,
            "wall_clock_seconds": round(time.perf_counter() - self.start, 3),
            "residuals": {k: fmt(v) for k, v in self.residuals.items()},
            "status": status,
            "files": {p.name: sha256(p) for p in self.files},
        }
        (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return status


# subcommands ------------------------------------------------------------------

def _trajectory_rows(ctx, X):
    n = ctx.n
    for m, t in enumerate(ctx.grid.times):
        for part, off in (("zeta", 0), ("w", n)):
            for a, (k, l) in enumerate(ctx.basis.modes):
                yield m, t, part, k, l, X[m, off + a]


def cmd_simulate(sc, run, args):
    from .state import ControlSet, solve_state
    traj = solve_state(ControlSet(), sc.init, sc.ctx)
    run.csv("trajectory.csv", ["step", "time", "field", "k", "l", "value"],
            _trajectory_rows(sc.ctx, traj.x))
    run.residuals["terminal_mass_norm"] = float(traj.terminal @ sc.ctx.mass @ traj.terminal) ** 0.5
    return 0


def _control_rows(ctx, label, region, samples):
    r = ctx.region(region)
    samples = samples[:, None, :] if samples.ndim == 2 else samples
    for m in range(samples.shape[0]):
        for c in range(samples.shape[1]):
            for q in range(samples.shape[2]):
                yield label, m + 1, ctx.grid.times[m + 1], q, r.nodes[0, q], r.nodes[1, q], c, samples[m, c, q]


CONTROL_HEADER = ["control", "step", "time", "node", "y1", "y2", "component", "value"]


def _follower_rows(ctx, xi):
    from .adjoint import player_region
    labels = ("v1", "v2", "u1", "u2")
    for k in range(4):
        yield from _control_rows(ctx, labels[k], player_region(k)[0], xi.parts[k])


def cmd_nash(sc, run, args):
    from .nash import characterize_nash, solve_nash, verify_nash
    ctx, w = sc.ctx, sc.weights
    tol = float(sc.solver("nash_tol", 1e-10))
    res = solve_nash(None, None, sc.init, w, ctx, tol=tol)
    run.csv("equilibrium.csv", CONTROL_HEADER, _follower_rows(ctx, res.xi))
    char = characterize_nash(res.xi, None, None, sc.init, w, ctx)
    rep = verify_nash(res.xi, None, None, sc.init, w, ctx, n_directions=args.directions, seed=sc.config.seed)
    rows = [("solver_residual", res.residual, tol, res.residual <= tol),
            ("solver_iterations", res.iterations, 0, True),
            ("characterization_v1", char.v_residual[0], 1e-6, char.v_residual[0] <= 1e-6),
            ("characterization_v2", char.v_residual[1], 1e-6, char.v_residual[1] <= 1e-6),
            ("characterization_u1", char.u_residual[0], 1e-6, char.u_residual[0] <= 1e-6),
            ("characterization_u2", char.u_residual[1], 1e-6, char.u_residual[1] <= 1e-6),
            ("fixed_point", char.fixed_point_residual, 1e-6, char.fixed_point_residual <= 1e-6),
            ("max_directional_derivative", rep.max_derivative, 1e-7, rep.max_derivative <= 1e-7),
            ("min_deviation_gain", rep.min_gain, -1e-10, rep.min_gain >= -1e-10)]
    run.csv("verification.csv", ["quantity", "value", "threshold", "passed"], rows)
    run.residuals["nash"] = res.residual
    return 0 if all(r[3] for r in rows) else 1


def cmd_leader(sc, run, args):
    from .leader import minimize_theta, recover_leader
    ctx, w = sc.ctx, sc.weights
    it = minimize_theta(w, ctx, delta=sc.leader_opt("delta", None), tol=float(sc.leader_opt("tol", 1e-8)),
                        max_iter=int(sc.leader_opt("max_iter", 500)), init=sc.init)
    sol = recover_leader(it, w, ctx, sc.init)
    run.csv("history.csv", ["iter", "theta", "grad_norm"], it.history)
    rows = list(_control_rows(ctx, "f", "O", sol.f_bar)) + list(_control_rows(ctx, "g", "O", sol.g_bar))
    run.csv("leader_controls.csv", CONTROL_HEADER, rows)
    run.csv("follower_controls.csv", CONTROL_HEADER, _follower_rows(ctx, sol.followers))
    ok = sol.terminal_gap <= sol.eps + sol.tol_disc
    summary = [("terminal_gap", sol.terminal_gap), ("eps", sol.eps), ("tol_disc", sol.tol_disc),
               ("J", sol.J_value), ("minus_theta", sol.dual_value), ("grad_norm", it.grad_norm),
               ("iterations", it.iterations), ("delta", it.problem.delta), ("gap_within_eps", ok)]
    run.csv("summary.csv", ["quantity", "value"], summary)
    run.residuals["dual_grad_norm"] = it.grad_norm
    run.residuals["coupled_system"] = it.coupled.residual
    return 0 if ok else 1


def cmd_norms(sc, run, args):
    from .nash import check_coercivity
    rep = check_coercivity(sc.weights, sc.ctx, tol=float(sc.solver("power_tol", 1e-6)),
                           max_iter=int(sc.solver("power_max_iter", 500)), seed=sc.config.seed)
    rows = []
    for label, vals in rep.norms_by_region.items():
        rows += [(label, "O1d", vals[0]), (label, "O2d", vals[1]), (label, "max", rep.norms[label])]
    run.csv("norms.csv", ["operator", "observation", "norm"], rows)
    summary = [(f"inequality_{i + 1}", v) for i, v in enumerate(rep.inequalities)]
    summary += [("condition_holds", rep.condition_holds), ("gamma", rep.gamma), ("min_eig", rep.min_eig)]
    run.csv("summary.csv", ["quantity", "value"], summary)
    return 0


def cmd_check(sc, run, args):
    from .checks import run_checks

    def log(r):
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<24} {r.value: .6e}  (threshold {r.tolerance:.1e}) {r.note}", flush=True)
    results = run_checks(sc, seed=sc.config.seed, log=log)
    run.csv("checks.csv", ["property", "value", "threshold", "status"],
            [(r.name, r.value, r.tolerance, "PASS" if r.passed else "FAIL") for r in results])
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} properties PASS")
    return 1 if failed else 0


def cmd_report(run, out_dir):
    rows = []
    for sub in SUBCOMMANDS[:-1]:
        for name in ("summary.csv", "checks.csv", "verification.csv"):
            path = Path(out_dir) / sub / name
            if not path.exists():
                continue
            with open(path, newline="") as fh:
                reader = csv.reader(fh)
                next(reader)
                for rec in reader:
                    rows.append((sub, name[:-4], rec[0], rec[1], rec[-1] if len(rec) > 2 else ""))
    run.csv("report.csv", ["stage", "table", "quantity", "value", "status"], rows)
    for r in rows:
        print(",".join(r))
    return 0 if rows else 1


# entry ------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="micropolar-sn", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="TOML config (default: the bundled default scenario)")
    p.add_argument("--out", help="output directory (default: config 'output')")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="BLAS/OpenMP threads (set before numpy loads)")
    p.add_argument("--eps", type=float, help="leader tolerance on the terminal gap")
    p.add_argument("--delta", type=float, help="smoothing of the dual norm term")
    p.add_argument("--tol", type=float, help="solver tolerance (dual gradient for leader, Nash residual for nash)")
    p.add_argument("--max-iter", type=int, help="iteration cap of the dual minimization")
    p.add_argument("--n-steps", type=int)
    p.add_argument("--modes", type=int)
    p.add_argument("--directions", type=int, default=100, help="directions in the Nash verification battery")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be positive", file=sys.stderr)
            return 2
        for var in THREAD_VARS:
            os.environ[var] = str(args.threads)
    from .config import build_scenario, load_config
    from .errors import ConfigError, MicropolarError

    tol_key = ("solver", "nash_tol") if args.subcommand == "nash" else ("leader", "tol")
    overrides = {("", "seed"): args.seed, ("weights", "eps"): args.eps, ("leader", "delta"): args.delta,
                 tol_key: args.tol, ("leader", "max_iter"): args.max_iter,
                 ("discretization", "n_steps"): args.n_steps, ("discretization", "modes"): args.modes}
    try:
        cfg = load_config(args.config, overrides)
        out_dir = args.out or cfg.output
        run = Run(out_dir, args.subcommand, cfg)
        if args.subcommand == "report":
            return run.finish(cmd_report(run, out_dir))
        sc = build_scenario(cfg)
        handler = {"simulate": cmd_simulate, "nash": cmd_nash, "leader": cmd_leader,
                   "check": cmd_check, "norms": cmd_norms}[args.subcommand]
        status = handler(sc, run, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MicropolarError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return run.finish(status)


if __name__ == "__main__":
    sys.exit(main())
