"""Command-line front end.

Exit codes: 0 success, 1 validation or usage error, 2 numeric failure.
Outputs go to ``--out`` (relative paths resolve against ``$ASGLIMITS_OUT_DIR``)
or to stdout.  Grids are written ``a:b`` (``a, 2a, 4a, ... <= b``) or as a
comma list.
"""
from __future__ import annotations

import argparse
import json
import math
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io as aio
from .core import DirectionY, ModelParams, PimParams, validate
from .errors import InvalidParams, ModeOnBoundary, NumericError

SELECTION_HEADROOM = 21

GRAMMAR = """subcommands:
  exact           --n COUNTS (--pim --theta T --q Q | --config FILE | --theta T --P ROWS)
  solve           --max-size N [--n-max M --closure drop|pim-proxy --cache-dir DIR]
  diffusion       [--samples S --estimate-p COUNTS ... --density-at X ...]
  simulate-chain  --start COUNTS [--reps R --max-steps K]
  dirichlet-limit --alpha A [--grid a:b --rule plus-one|linear]
  asymptotics     --check theorem-p|k-over-b|pi-limit|transitions|stirling --y Y [--grid a:b --source pim|recursion|mc]
common: --seed INT --out PATH --format csv|json --workers W"""


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# argument helpers

def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse {text!r} as a list of numbers") from exc


def _ints(text: str) -> tuple:
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise UsageError(f"expected integers, got {text!r}")
    return tuple(int(v) for v in vals)


def parse_grid(text: str) -> tuple:
    from .asymptotics import geometric_grid

    if ":" in text:
        lo, hi = text.split(":", 1)
        try:
            return geometric_grid(int(lo), int(hi))
        except ValueError as exc:
            raise UsageError(f"bad grid {text!r}") from exc
    grid = _ints(text)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise UsageError(f"grid must be increasing: {text!r}")
    return grid


def _model(args, d_hint: int | None = None, default_pim: bool = False) -> ModelParams:
    if getattr(args, "config", None):
        return aio.read_config(args.config)
    theta = args.theta
    if args.pim or args.q is not None or (default_pim and args.P is None):
        d = len(args.q) if args.q is not None else d_hint
        if d is None:
            raise UsageError("--q is required to fix the number of types")
        q = args.q if args.q is not None else [1.0 / d] * d
        pp = PimParams(2.0 if theta is None else theta, tuple(q))
        gamma = args.gamma if args.gamma is not None else [0.0] * d
        return validate(pp.theta, np.tile(np.asarray(pp.Q), (d, 1)), np.asarray(gamma))
    if theta is None or args.P is None:
        raise UsageError("give --config FILE, --pim --theta T --q Q, or --theta T --P ROWS")
    d = int(round(math.sqrt(len(args.P))))
    if d * d != len(args.P):
        raise UsageError(f"--P has {len(args.P)} entries, not a square matrix")
    gamma = args.gamma if args.gamma is not None else [0.0] * d
    return validate(theta, np.asarray(args.P).reshape(d, d), np.asarray(gamma))


def _out_path(args, default_name: str | None = None) -> Path | None:
    out = args.out
    if out is None:
        return None
    p = Path(out)
    return p if p.is_absolute() else aio.default_out_dir() / p


def _emit(args, header, rows, comment: str, extra: dict | None = None) -> None:
    if args.format == "json":
        doc = {"comment": comment.lstrip("# "), "columns": list(header),
               "rows": [[_jsonable(v) for v in r] for r in rows]}
        if extra:
            doc.update(extra)
        text = json.dumps(doc, sort_keys=True, indent=1) + "\n"
    else:
        text = aio.render_csv(header, rows, comment)
    path = _out_path(args)
    if path is None:
        sys.stdout.write(text)
    else:
        aio.write_text(path, text)
    if extra and args.format == "csv":
        side = json.dumps(extra, sort_keys=True) + "\n"
        if path is None:
            sys.stdout.write(side)
        else:
            aio.write_text(path.with_suffix(path.suffix + ".verdict.json"), side)


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


def _pim_of(params: ModelParams) -> PimParams | None:
    return params.pim_params() if params.neutral and params.is_pim else None


# ---------------------------------------------------------------------------
# subcommands

def cmd_exact(args) -> None:
    from .pim import pim_log_p, pim_pi

    n = _ints(args.n)
    params = _model(args, d_hint=len(n), default_pim=True)
    pp = _pim_of(params)
    if pp is None:
        raise InvalidParams("exact closed forms need neutral parent-independent mutation")
    lp = pim_log_p(n, pp)
    header = [f"n{i + 1}" for i in range(len(n))] + ["log_p", "p"] + [f"pi_{i + 1}" for i in range(len(n))]
    row = list(n) + [lp, math.exp(lp)] + [pim_pi(i, n, pp) for i in range(len(n))]
    _emit(args, header, [row], aio.provenance_line(params.fingerprint(), args.seed))


def _solve_table(params: ModelParams, N: int, args):
    from .recursion import TruncationPolicy, solve

    policy = None
    if not params.neutral:
        n_max = args.n_max if getattr(args, "n_max", None) else TruncationPolicy.default(N).n_max
        policy = TruncationPolicy(n_max, getattr(args, "closure", None) or "pim-proxy")
    name = "neutral" if policy is None else f"{policy.short_name}{policy.n_max}"
    cache = getattr(args, "cache_dir", None)
    if cache:
        hit = aio.load_table_cache(cache, params, N, name)
        if hit is not None:
            return hit
    table = solve(params, N, policy)
    if cache:
        aio.save_table_cache(table, cache, params, name)
    return table


def cmd_solve(args) -> None:
    params = _model(args)
    table = _solve_table(params, args.max_size, args)
    comment = aio.provenance_line(params.fingerprint(), args.seed, N=table.max_size)
    if args.format == "json":
        rows = [list(map(int, c)) + [float(v)] for c, v in zip(table.configs(), table.log_p)]
        header = [f"n{i + 1}" for i in range(table.d)] + ["log_p"]
        _emit(args, header, rows, comment, {"level_sums": table.level_sums().tolist()})
        return
    text = aio.table_csv(table, params.fingerprint(), args.seed)
    path = _out_path(args)
    if path is None:
        sys.stdout.write(text)
    else:
        aio.write_text(path, text)


def _diffusion_config(args, samples: int):
    from .diffusion import DiffusionConfig

    per = args.samples_per_replica
    replicas = max(1, -(-samples // per))
    return DiffusionConfig(
        dt=args.dt, burn_in=args.burn_in, thin=args.thin, replicas=replicas,
        samples_per_replica=per, seed=args.seed, workers=args.workers, scheme=args.scheme,
    )


def cmd_diffusion(args) -> None:
    from .diffusion import estimate_density, estimate_log_p, stationary_sample

    params = _model(args)
    ens = stationary_sample(params, _diffusion_config(args, args.samples))
    if args.ensemble_out:
        p = Path(args.ensemble_out)
        p = p if p.is_absolute() else aio.default_out_dir() / p
        aio.write_text(p, aio.ensemble_csv(ens, args.seed))
    rows = []
    for text in args.estimate_p or []:
        n = _ints(text)
        lp, rel = estimate_log_p(n, ens)
        rows.append(["p", text.replace(",", " "), lp, rel, math.exp(lp), math.exp(lp) * rel])
    for text in args.density_at or []:
        val = estimate_density(ens, _floats(text), args.bandwidth)
        rows.append(["density", text.replace(",", " "), math.log(val), math.nan, val, math.nan])
    header = ["quantity", "at", "log_estimate", "rel_se", "estimate", "se"]
    _emit(args, header, rows, aio.provenance_line(params.fingerprint(), args.seed, samples=ens.n_samples))


def cmd_simulate_chain(args) -> None:
    from .chain import PimPi, TablePi, simulate_to_mrca

    params = _model(args)
    start = _ints(args.start)
    pp = _pim_of(params)
    if pp is not None:
        pi = PimPi(pp)
    else:
        # branching raises the sample size under selection; leave headroom
        headroom = 1 if params.neutral else SELECTION_HEADROOM
        pi = TablePi(_solve_table(params, sum(start) + headroom, args))

    def run(rep):
        rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(rep,)))
        return simulate_to_mrca(start, params, pi, rng, args.max_steps, seed=args.seed)

    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        trajs = list(pool.map(run, range(args.reps)))
    outdir = _out_path(args)
    if outdir is None:
        outdir = aio.default_out_dir() / "trajectories"
    width = max(4, len(str(args.reps - 1)))
    summary = []
    for rep, traj in enumerate(trajs):
        text = aio.trajectory_csv(traj, params.fingerprint(), f"{args.seed}/{rep}")
        aio.write_text(outdir / f"traj_{rep:0{width}d}.csv", text)
        summary.append([rep, traj.n_events, "yes" if traj.truncated else "no", "-".join(map(str, traj.states[-1]))])
    text = aio.render_csv(["rep", "events", "truncated", "final"], summary,
                          aio.provenance_line(params.fingerprint(), args.seed))
    aio.write_text(outdir / "summary.csv", text)
    sys.stdout.write(text)


def cmd_dirichlet_limit(args) -> None:
    from .dirichlet import AlphaSequence, phi_n_sup, sup_norm_gap, sup_norm_limit

    seq = AlphaSequence(tuple(_floats(args.alpha)), args.rule)
    limit = sup_norm_limit(seq.alpha)
    rows = []
    for n in parse_grid(args.grid):
        gap, _ = sup_norm_gap(n, seq)
        try:
            sup = phi_n_sup(n, seq)
        except ModeOnBoundary:
            sup = math.nan
        rows.append([n, gap, sup, sup / limit])
    comment = f"# alpha={args.alpha.replace(',', ' ')} rule={args.rule} seed={args.seed}"
    _emit(args, ["n", "sup_gap", "phi_n_sup", "ratio"], rows, comment)


def cmd_asymptotics(args) -> None:
    from . import asymptotics as asy
    from .chain import PimPi, TablePi
    from .diffusion import DensityEstimate, stationary_sample
    from .pim import pim_density

    y = _floats(args.y)
    direction = DirectionY(y)
    params = _model(args, d_hint=direction.d, default_pim=True)
    grid = parse_grid(args.grid)
    pp = _pim_of(params)
    top = max(sum(direction.lattice(n)) for n in grid)

    if args.check == "stirling":
        if pp is None:
            raise InvalidParams("the Stirling stages need neutral parent-independent mutation")
        rows_d = asy.stirling_chain_report(grid, pp, direction)
        header = list(rows_d[0])
        _emit(args, header, [[r[k] for k in header] for r in rows_d],
              aio.provenance_line(params.fingerprint(), args.seed))
        return

    ens = None
    if args.source == "mc" or (pp is None and args.check in ("theorem-p", "k-over-b")):
        ens = stationary_sample(params, _diffusion_config(args, args.samples))
    if args.source == "pim":
        if pp is None:
            raise InvalidParams("--source pim needs neutral parent-independent mutation")
        src, pi = pp, PimPi(pp)
    elif args.source == "recursion":
        table = _solve_table(params, top + 1, args)
        src, pi = table, TablePi(table)
    else:
        from .chain import EnsemblePi

        src, pi = ens, EnsemblePi(ens)

    def ptilde():
        return pim_density(pp) if pp is not None else DensityEstimate(ens.samples, args.bandwidth)

    if args.check == "theorem-p":
        reports = [asy.check_theorem_p(direction, params, grid, src, ptilde())]
    elif args.check == "k-over-b":
        kb = asy.check_k_over_B(direction, params, grid, src, ptilde(), draws=args.draws, seed=args.seed)
        reports = [kb.direct, kb.dirichlet]
    elif args.check == "pi-limit":
        reports = [asy.check_pi_limit(args.i - 1, direction, params, grid, pi)]
    else:
        reports = list(asy.check_transition_limits(direction, params, grid, pi, j=args.j - 1).values())
    rows = [[r.quantity] + list(row) for r in reports for row in r.rows()]
    verdicts = [json.loads(r.verdict_json()) for r in reports]
    overall = all(r.verdict for r in reports)
    extra = {"verdict": "pass" if overall else "fail", "reports": verdicts}
    _emit(args, ["quantity", "n", "observed", "target", "abs_err", "rel_err"], rows,
          aio.provenance_line(params.fingerprint(), args.seed, check=args.check, source=args.source), extra)


# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, model: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=int, default=1)
    if model:
        p.add_argument("--config", default=None)
        p.add_argument("--pim", action="store_true")
        p.add_argument("--theta", type=float, default=None)
        p.add_argument("--q", type=_floats, default=None)
        p.add_argument("--P", type=_floats, default=None)
        p.add_argument("--gamma", type=_floats, default=None)


def _truncation(p) -> None:
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--closure", choices=("drop", "pim-proxy"), default="pim-proxy")
    p.add_argument("--cache-dir", default=None)


def _diffusion_opts(p, samples: int) -> None:
    p.add_argument("--samples", type=int, default=samples)
    p.add_argument("--samples-per-replica", type=int, default=100)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--burn-in", type=float, default=30.0)
    p.add_argument("--thin", type=float, default=1.0)
    p.add_argument("--scheme", choices=("dirichlet", "euler"), default="dirichlet")
    p.add_argument("--bandwidth", type=float, default=None)


def build_parser() -> Parser:
    parser = Parser(prog="asglimits", description="Sampling-probability asymptotics toolkit",
                    epilog=GRAMMAR, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", parser_class=Parser)

    p = sub.add_parser("exact", help="closed-form sampling probabilities")
    _common(p)
    p.add_argument("--n", required=True)

    p = sub.add_parser("solve", help="sampling-probability table from the recursion")
    _common(p)
    p.add_argument("--max-size", type=int, required=True)
    _truncation(p)

    p = sub.add_parser("diffusion", help="stationary ensembles and Monte Carlo estimates")
    _common(p)
    _diffusion_opts(p, 10_000)
    p.add_argument("--estimate-p", action="append")
    p.add_argument("--density-at", action="append")
    p.add_argument("--ensemble-out", default=None)

    p = sub.add_parser("simulate-chain", help="jump-chain trajectories to the MRCA")
    _common(p)
    p.add_argument("--start", required=True)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--max-steps", type=int, default=1_000_000)
    _truncation(p)

    p = sub.add_parser("dirichlet-limit", help="rescaled Dirichlet densities against the Gaussian limit")
    _common(p, model=False)
    p.add_argument("--alpha", required=True)
    p.add_argument("--grid", default="50:3200")
    p.add_argument("--rule", choices=("plus-one", "linear"), default="plus-one")

    p = sub.add_parser("asymptotics", help="convergence reports for the limit laws")
    _common(p)
    p.add_argument("--check", required=True,
                   choices=("theorem-p", "k-over-b", "pi-limit", "transitions", "stirling"))
    p.add_argument("--y", required=True)
    p.add_argument("--grid", default="25:3200")
    p.add_argument("--source", choices=("pim", "recursion", "mc"), default="pim")
    p.add_argument("--i", type=int, default=1)
    p.add_argument("--j", type=int, default=1)
    p.add_argument("--draws", type=int, default=100_000)
    _truncation(p)
    _diffusion_opts(p, 100_000)
    return parser


COMMANDS = {
    "exact": cmd_exact,
    "solve": cmd_solve,
    "diffusion": cmd_diffusion,
    "simulate-chain": cmd_simulate_chain,
    "dirichlet-limit": cmd_dirichlet_limit,
    "asymptotics": cmd_asymptotics,
}


_NEGATIVE_LIST = re.compile(r"^-\.?\d[\d.eE+,-]*$")


def _attach_negative_values(argv: list[str]) -> list[str]:
    """Rewrite ``--flag -0.5,0`` as ``--flag=-0.5,0`` so argparse keeps the value."""
    out = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and _NEGATIVE_LIST.match(tok):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def run(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(_attach_negative_values(argv))
        if args.command is None:
            raise UsageError("a subcommand is required")
        if getattr(args, "workers", 1) < 1:
            raise UsageError("--workers must be >= 1")
        COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n\n{GRAMMAR}\n")
        return 1
    except InvalidParams as exc:
        sys.stderr.write(f"invalid input: {exc}\n")
        return 1
    except NumericError as exc:
        sys.stderr.write(f"numeric failure ({type(exc).__name__}): {exc}\n")
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
