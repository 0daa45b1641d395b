"""Command-line interface: every estimator, solver, and check as a subcommand.

Each run resolves its configuration (flag > RICCATI_* environment variable >
default), derives a deterministic output directory `<out>/<cmd>/<digest>/`
from the configuration digest, writes its data files plus a manifest, and
prints the seed so any run can be reproduced exactly.
"""

from __future__ import annotations

import argparse
import os
import secrets
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis_io import (
    FIGURE_PRESETS,
    RunManifest,
    figure_bundle,
    write_grid_function,
    write_histogram_csv,
    write_manifest,
    write_series_csv,
)
from .checks import run_all_checks
from .grid_numerics import (
    GridFunction,
    GridMemoryError,
    UniformGrid,
    evaluate,
    iterate_qn,
    iterate_vn,
    picard_v0,
    riccati_residual,
)
from .monte_carlo import (
    McConfig,
    estimate_L_tail,
    estimate_S_tail,
    estimate_leaf_histogram,
    estimate_v_curve,
)

_ENV_PREFIX = "RICCATI_"


def _env_default(name: str, cast, fallback):
    raw = os.environ.get(_ENV_PREFIX + name)
    if raw is None:
        return fallback
    try:
        return cast(raw)
    except (TypeError, ValueError):
        raise SystemExit(f"invalid value {raw!r} for {_ENV_PREFIX}{name}") from None


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--alpha", type=float, default=_env_default("ALPHA", float, 1.5),
                   help="branching scale (default 1.5)")
    p.add_argument("--t-max", type=float, default=_env_default("T_MAX", float, 8.0),
                   help="end of the time grid (default 8)")
    p.add_argument("--step", type=float, default=_env_default("STEP", float, 0.01),
                   help="grid step (default 0.01)")
    p.add_argument("--depth", type=int, default=_env_default("DEPTH", int, 10),
                   help="recursion depth / truncation level n (default 10)")
    p.add_argument("--picard-k", type=int, default=_env_default("PICARD_K", int, 5),
                   help="Picard iterations for the seed curve (default 5)")
    p.add_argument("--samples", type=int, default=_env_default("SAMPLES", int, 10000),
                   help="Monte Carlo samples per point (default 10000)")
    p.add_argument("--seed", type=int, default=_env_default("SEED", int, None),
                   help="64-bit seed; generated and printed when omitted")
    p.add_argument("--eps-tail", type=float, default=_env_default("EPS_TAIL", float, 1e-6),
                   help="tail threshold for working-grid expansion (default 1e-6)")
    p.add_argument("--out", type=Path, default=_env_default("OUT", Path, Path("runs")),
                   help="output root directory (default ./runs)")
    p.add_argument("--workers", type=int, default=_env_default("WORKERS", int, 1),
                   help="worker-count hint; never changes results (default 1)")
    return p


def _build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="riccati-cascade",
        description="Simulation and numerical analysis of the alpha-Riccati branching cascade",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("hist", parents=[common], help="truncated leaf-count histogram")
    p.add_argument("--t", type=float, default=2.0, help="horizon (default 2)")

    p = sub.add_parser("vcurve", parents=[common], help="Monte Carlo finiteness-probability curve")
    p.add_argument("--t-step", type=float, default=0.5, help="spacing of Monte Carlo points")

    sub.add_parser("v0", parents=[common], help="Picard seed curve U_k")

    sub.add_parser("qn", parents=[common], help="deterministic explosion-probability iterate q_n")

    p = sub.add_parser("paths", parents=[common], help="min/max path-sum tail series")
    p.add_argument("--t-step", type=float, default=1.0, help="spacing of tail points")

    sub.add_parser("residual", parents=[common],
                   help="residual of v' + v = v(alpha t)^2 for the iterated curve")

    p = sub.add_parser("check", parents=[common], help="run the full invariant suite")
    p.add_argument("--fast", action="store_true", help="trim statistical sample sizes")

    p = sub.add_parser("figures", parents=[common], help="figure-ready data bundle")
    p.add_argument("--preset", required=True, choices=sorted(FIGURE_PRESETS),
                   help="fig1 (alpha=0.66), fig2 (alpha=1.5), fig3 (alpha=3)")

    p = sub.add_parser("sweep", parents=[common],
                       help="stabilized explosion probability across branching scales")
    p.add_argument("--alpha-list", required=True,
                   help="comma-separated branching scales, e.g. 0.66,1.5,3")
    p.add_argument("--t", type=float, default=4.0, help="report point (default 4)")
    p.add_argument("--max-n", type=int, default=40, help="iteration budget per scale")
    p.add_argument("--gap-tol", type=float, default=1e-4,
                   help="sup-norm stabilization tolerance")
    return parser


def _resolve_seed(args) -> int:
    if args.seed is None:
        seed = secrets.randbits(63)
        print(f"generated seed: {seed}")
        return seed
    return int(args.seed)


def _manifest_for(args, command: str, seed: int, extras: dict) -> RunManifest:
    extra_str = " ".join(f"--{k} {v}" for k, v in sorted(extras.items()))
    cmd = f"{command} {extra_str}".strip()
    return RunManifest.create(
        command=cmd,
        alpha=args.alpha,
        t_max=args.t_max,
        step=args.step,
        eps_tail=args.eps_tail,
        depth=args.depth,
        picard_k=args.picard_k,
        samples=args.samples,
        seed=seed,
    )


def _finalize(manifest: RunManifest, out_dir: Path, files: list[Path]) -> Path:
    manifest = manifest.with_outputs(files)
    path = write_manifest(manifest, out_dir / "manifest.json")
    print(f"wrote {len(files)} files to {out_dir}")
    return path


def _out_dir(args, command: str, manifest: RunManifest) -> Path:
    out = Path(args.out) / command / manifest.config_digest()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _explosion_seed(args, grid: UniformGrid) -> GridFunction:
    """q0 for the explosion chain: 1 for alpha <= 1, else the Picard complement."""
    if args.alpha <= 1.0:
        return GridFunction.constant(grid, 1.0)
    return picard_v0(args.alpha, grid, args.picard_k, args.eps_tail).complement()


def _cmd_hist(args) -> int:
    seed = _resolve_seed(args)
    manifest = _manifest_for(args, "hist", seed, {"t": args.t})
    out = _out_dir(args, "hist", manifest)
    cfg = McConfig(seed=seed, samples=args.samples, depth=args.depth, workers=args.workers)
    hist = estimate_leaf_histogram(args.alpha, args.t, args.depth, cfg)
    files = [write_histogram_csv(hist, out / "histogram.csv")]
    print(
        f"leaf counts at alpha={args.alpha}, t={args.t}, depth={args.depth}: "
        f"mean={hist.mean():.3f} max={hist.max_observed} truncated={hist.truncated_count}/{hist.total}"
    )
    _finalize(manifest, out, files)
    return 0


def _cmd_vcurve(args) -> int:
    seed = _resolve_seed(args)
    manifest = _manifest_for(args, "vcurve", seed, {"t-step": args.t_step})
    out = _out_dir(args, "vcurve", manifest)
    grid = UniformGrid(args.t_max, args.step)
    v0 = picard_v0(args.alpha, grid, args.picard_k, args.eps_tail)
    cfg = McConfig(seed=seed, samples=args.samples, depth=args.depth, workers=args.workers)
    t_points = np.arange(0.0, args.t_max + args.t_step / 2.0, args.t_step)
    series = estimate_v_curve(args.alpha, t_points, args.depth, v0, cfg)
    files = [
        write_series_csv(series, out / "vcurve_mc.csv"),
        write_grid_function(v0, out / "v0_picard.csv"),
    ]
    files.append(files[-1].with_name(files[-1].name + ".meta.json"))
    lo, hi = series.means().min(), series.means().max()
    print(f"v-curve at alpha={args.alpha}: {len(series.points)} points, range [{lo:.4f}, {hi:.4f}]")
    _finalize(manifest, out, files)
    return 0


def _cmd_v0(args) -> int:
    seed = _resolve_seed(args)
    manifest = _manifest_for(args, "v0", seed, {})
    out = _out_dir(args, "v0", manifest)
    grid = UniformGrid(args.t_max, args.step)
    u_k = picard_v0(args.alpha, grid, args.picard_k, args.eps_tail)
    files = [write_grid_function(u_k, out / "v0_picard.csv")]
    files.append(files[-1].with_name(files[-1].name + ".meta.json"))
    k_ref = 8 if args.picard_k != 8 else 5
    u_ref = picard_v0(args.alpha, grid, k_ref, args.eps_tail)
    gap = float(np.max(np.abs(u_k.values - u_ref.values)))
    print(
        f"Picard seed at alpha={args.alpha}, k={args.picard_k}: "
        f"U_k(t_max)={u_k.values[-1]:.6f}; max|U_{args.picard_k} - U_{k_ref}| = {gap:.3e}"
    )
    _finalize(manifest, out, files)
    return 0


def _cmd_qn(args) -> int:
    seed = _resolve_seed(args)
    manifest = _manifest_for(args, "qn", seed, {})
    out = _out_dir(args, "qn", manifest)
    grid = UniformGrid(args.t_max, args.step)
    q0 = _explosion_seed(args, grid)
    qn = iterate_qn(args.alpha, grid, args.depth, q0, args.eps_tail)
    files = [write_grid_function(qn, out / "qn.csv")]
    files.append(files[-1].with_name(files[-1].name + ".meta.json"))
    probe_ts = [v for v in (2.0, 4.0, args.t_max) if v <= grid.t_end]
    vals = ", ".join(f"q({t:g})={evaluate(qn, t):.5f}" for t in probe_ts)
    print(f"explosion iterate at alpha={args.alpha}, n={args.depth}: {vals}")
    _finalize(manifest, out, files)
    return 0


def _cmd_paths(args) -> int:
    seed = _resolve_seed(args)
    manifest = _manifest_for(args, "paths", seed, {"t-step": args.t_step})
    out = _out_dir(args, "paths", manifest)
    cfg = McConfig(seed=seed, samples=args.samples, depth=args.depth, workers=args.workers)
    t_points = np.arange(0.0, args.t_max + args.t_step / 2.0, args.t_step)
    s_series = estimate_S_tail(args.alpha, t_points, args.depth, cfg)
    l_series = estimate_L_tail(args.alpha, t_points, args.depth, cfg)
    files = [
        write_series_csv(s_series, out / "s_tail.csv"),
        write_series_csv(l_series, out / "l_tail.csv"),
    ]
    print(
        f"path tails at alpha={args.alpha}, depth={args.depth}: "
        f"P(S>{t_points[-1]:g})={s_series.points[-1].mean:.4f}, "
        f"P(L>{t_points[-1]:g})={l_series.points[-1].mean:.4f}"
    )
    _finalize(manifest, out, files)
    return 0


def _cmd_residual(args) -> int:
    seed = _resolve_seed(args)
    manifest = _manifest_for(args, "residual", seed, {})
    out = _out_dir(args, "residual", manifest)
    grid = UniformGrid(args.t_max, args.step)
    v0 = picard_v0(args.alpha, grid, args.picard_k, args.eps_tail)
    vn = iterate_vn(args.alpha, grid, args.depth, v0, args.eps_tail)
    report = riccati_residual(vn, args.alpha)
    residual_fn = GridFunction(grid, report.residual, 0.0, range_bounds=False)
    files = [write_grid_function(residual_fn, out / "residual.csv")]
    files.append(files[-1].with_name(files[-1].name + ".meta.json"))
    print(
        f"residual at alpha={args.alpha}, n={args.depth}: "
        f"max |r| = {report.max_abs_residual:.3e} on t in [0, {report.interior_range[1]:g}] "
        f"({report.interior_count} nodes)"
    )
    _finalize(manifest, out, files)
    return 0


def _cmd_check(args) -> int:
    seed = _resolve_seed(args)
    manifest = _manifest_for(args, "check", seed, {"fast": args.fast})
    out = _out_dir(args, "check", manifest)
    results = run_all_checks(args.alpha, seed, samples=min(args.samples, 2000), fast=args.fast)
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        line = f"CHECK {r.name}: {status} ({r.detail})"
        print(line)
        lines.append(line)
    report = out / "check_report.txt"
    report.write_text("\n".join(lines) + "\n")
    _finalize(manifest, out, [report])
    failed = sum(not r.passed for r in results)
    if failed:
        print(f"{failed} of {len(results)} checks failed", file=sys.stderr)
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def _cmd_figures(args) -> int:
    seed = _resolve_seed(args)
    manifest = _manifest_for(args, "figures", seed, {"preset": args.preset})
    out = _out_dir(args, "figures", manifest)
    paths = figure_bundle(
        args.preset,
        out,
        seed,
        t_max=args.t_max,
        step=args.step,
        depth=args.depth,
        picard_k=args.picard_k,
        samples=args.samples,
        eps_tail=args.eps_tail,
        workers=args.workers,
    )
    print(f"bundle {args.preset} (alpha={FIGURE_PRESETS[args.preset]}) written to {out}")
    for name, path in sorted(paths.items()):
        print(f"  {name}: {path.name}")
    return 0


def _cmd_sweep(args) -> int:
    seed = _resolve_seed(args)
    try:
        alphas = [float(a) for a in args.alpha_list.split(",") if a.strip()]
    except ValueError:
        print(f"invalid --alpha-list {args.alpha_list!r}", file=sys.stderr)
        return 2
    if not alphas:
        print("empty --alpha-list", file=sys.stderr)
        return 2
    manifest = _manifest_for(
        args, "sweep", seed, {"alpha-list": args.alpha_list, "t": args.t, "max-n": args.max_n}
    )
    out = _out_dir(args, "sweep", manifest)
    grid = UniformGrid(args.t_max, args.step)
    rows = []
    for alpha in alphas:
        if alpha <= 1.0:
            q0 = GridFunction.constant(grid, 1.0)
        else:
            q0 = picard_v0(alpha, grid, args.picard_k, args.eps_tail).complement()
        prev = None
        q_cur = None
        n_used = 0
        sup_gap = float("inf")
        for n in range(5, args.max_n + 1, 5):
            q_cur = iterate_qn(alpha, grid, n, q0, args.eps_tail)
            n_used = n
            if prev is not None:
                sup_gap = float(np.max(np.abs(q_cur.values - prev.values)))
                if sup_gap < args.gap_tol:
                    break
            prev = q_cur
        converged = sup_gap < args.gap_tol
        boundary = abs(alpha - 1.0) <= 0.05 or abs(alpha - 2.0) <= 0.05
        note = "slow-convergence" if (boundary or not converged) else ""
        q_at_t = evaluate(q_cur, args.t)
        rows.append((alpha, args.t, q_at_t, sup_gap, n_used, converged, note))
        print(
            f"alpha={alpha:g}: q({args.t:g}) = {q_at_t:.6g} "
            f"(sup gap {sup_gap:.2e} after n={n_used}{', ' + note if note else ''})"
        )
    sweep_path = out / "sweep.csv"
    with sweep_path.open("w", newline="") as fh:
        fh.write("alpha,t,q_estimate,sup_gap,n_iterations,converged,note\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    _finalize(manifest, out, [sweep_path])
    return 0


_HANDLERS = {
    "hist": _cmd_hist,
    "vcurve": _cmd_vcurve,
    "v0": _cmd_v0,
    "qn": _cmd_qn,
    "paths": _cmd_paths,
    "residual": _cmd_residual,
    "check": _cmd_check,
    "figures": _cmd_figures,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return _HANDLERS[args.command](args)
    except (ValueError, GridMemoryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
