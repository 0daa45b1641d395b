"""CSV and manifest serialization for estimates, histograms, and grid functions.

All numeric payloads are written with 17 significant digits so a read-back
reproduces the exact float64 values, and manifests are canonical JSON
(sorted keys) so file digests are deterministic for a fixed seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .grid_numerics import GridFunction, UniformGrid, picard_v0
from .monte_carlo import (
    EstimatePoint,
    EstimateSeries,
    Histogram,
    McConfig,
    estimate_leaf_histogram,
    estimate_v_curve,
)

__all__ = [
    "RunManifest",
    "FIGURE_PRESETS",
    "write_series_csv",
    "read_series_csv",
    "write_histogram_csv",
    "read_histogram_csv",
    "write_grid_function",
    "read_grid_function",
    "write_manifest",
    "load_manifest",
    "verify_manifest",
    "file_digest",
    "figure_bundle",
]

FIGURE_PRESETS = {"fig1": 0.66, "fig2": 1.5, "fig3": 3.0}


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _open_for_write(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_series_csv(series: EstimateSeries | GridFunction, path) -> Path:
    """Write `t,mean,stderr,n_samples` rows; deterministic curves leave the
    stderr and n_samples columns empty."""
    path = Path(path)
    with _open_for_write(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "mean", "stderr", "n_samples"])
        if isinstance(series, GridFunction):
            for t, v in zip(series.grid.nodes, series.values):
                writer.writerow([_fmt(t), _fmt(v), "", ""])
        else:
            for p in series.points:
                writer.writerow([_fmt(p.t), _fmt(p.mean), _fmt(p.stderr), p.n_samples])
    return path


def read_series_csv(path) -> EstimateSeries:
    """Read a series CSV back; deterministic rows come back with stderr 0 and
    n_samples 0."""
    path = Path(path)
    points = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["t", "mean", "stderr", "n_samples"]:
            raise ValueError(f"unexpected series header in {path}: {header}")
        for row in reader:
            t, mean = float(row[0]), float(row[1])
            stderr = float(row[2]) if row[2] else 0.0
            n = int(row[3]) if row[3] else 0
            points.append(EstimatePoint(t, mean, stderr, n))
    return EstimateSeries(tuple(points))


def write_histogram_csv(hist: Histogram, path) -> Path:
    """Occupied unit bins as `bin_lo,bin_hi,count`, then summary footer rows."""
    path = Path(path)
    with _open_for_write(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for value in sorted(hist.counts):
            writer.writerow([value, value + 1, hist.counts[value]])
        writer.writerow(["total", "", hist.total])
        writer.writerow(["truncated_count", "", hist.truncated_count])
        writer.writerow(["max_observed", "", hist.max_observed])
    return path


def read_histogram_csv(path, t: float = float("nan"), depth: int = -1) -> Histogram:
    path = Path(path)
    counts: dict[int, int] = {}
    footer: dict[str, int] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["bin_lo", "bin_hi", "count"]:
            raise ValueError(f"unexpected histogram header in {path}: {header}")
        for row in reader:
            if row[1] == "":
                footer[row[0]] = int(row[2])
            else:
                counts[int(row[0])] = int(row[2])
    return Histogram(
        t=t,
        depth=depth,
        counts=counts,
        total=footer["total"],
        truncated_count=footer["truncated_count"],
        max_observed=footer["max_observed"],
    )


def write_grid_function(f: GridFunction, path) -> Path:
    """CSV `t,value` plus a JSON sidecar `<path>.meta.json` with the grid
    parameters and the tail policy."""
    path = Path(path)
    with _open_for_write(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "value"])
        for t, v in zip(f.grid.nodes, f.values):
            writer.writerow([_fmt(t), _fmt(v)])
    meta = {
        "t_max": f.grid.t_max,
        "step": f.grid.step,
        "tail_value": f.tail_value,
        "range_bounds": f.range_bounds,
    }
    sidecar = path.with_name(path.name + ".meta.json")
    sidecar.write_text(_canonical_json(meta) + "\n")
    return path


def read_grid_function(path) -> GridFunction:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".meta.json").read_text())
    values = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["t", "value"]:
            raise ValueError(f"unexpected grid-function header in {path}: {header}")
        values = [float(row[1]) for row in reader]
    grid = UniformGrid(meta["t_max"], meta["step"])
    return GridFunction(grid, np.array(values), meta["tail_value"], meta["range_bounds"])


@dataclass(frozen=True)
class RunManifest:
    """Provenance record for every emitted artifact.

    Two runs with identical configuration produce identical manifests except
    for the timestamp; the configuration digest names the output directory,
    so a rerun lands on (and must reproduce byte-identically) the same files.
    """

    tool_version: str
    command: str
    alpha: float
    t_max: float
    step: float
    eps_tail: float
    depth: int
    picard_k: int
    samples: int
    seed: int
    timestamp: str
    outputs: dict[str, str]

    @classmethod
    def create(
        cls,
        command: str,
        alpha: float,
        t_max: float,
        step: float,
        eps_tail: float,
        depth: int,
        picard_k: int,
        samples: int,
        seed: int,
    ) -> "RunManifest":
        return cls(
            tool_version=__version__,
            command=command,
            alpha=float(alpha),
            t_max=float(t_max),
            step=float(step),
            eps_tail=float(eps_tail),
            depth=int(depth),
            picard_k=int(picard_k),
            samples=int(samples),
            seed=int(seed),
            timestamp=datetime.now(timezone.utc).isoformat(),
            outputs={},
        )

    def config_digest(self) -> str:
        """Digest of everything except the timestamp and the output digests."""
        d = asdict(self)
        d.pop("timestamp")
        d.pop("outputs")
        return hashlib.sha256(_canonical_json(d).encode()).hexdigest()[:12]

    def with_outputs(self, paths: list[Path]) -> "RunManifest":
        outputs = {p.name: file_digest(p) for p in paths}
        return replace(self, outputs=dict(sorted(outputs.items())))


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(manifest: RunManifest, path) -> Path:
    path = Path(path)
    with _open_for_write(path) as fh:
        fh.write(_canonical_json(asdict(manifest)) + "\n")
    return path


def load_manifest(path) -> RunManifest:
    data = json.loads(Path(path).read_text())
    return RunManifest(**data)


def verify_manifest(path) -> list[str]:
    """Recompute the digest of every listed output; return the mismatches."""
    path = Path(path)
    manifest = load_manifest(path)
    problems = []
    for name, digest in manifest.outputs.items():
        target = path.parent / name
        if not target.exists():
            problems.append(f"missing output {name}")
        elif file_digest(target) != digest:
            problems.append(f"digest mismatch for {name}")
    return problems


def figure_bundle(
    preset: str,
    out_dir,
    seed: int,
    alpha: float | None = None,
    t: float = 2.0,
    t_max: float = 8.0,
    step: float = 0.01,
    depth: int = 10,
    picard_k: int = 5,
    samples: int = 10000,
    eps_tail: float = 1e-6,
    workers: int = 1,
    mc_t_step: float = 0.5,
) -> dict[str, Path]:
    """Emit the histogram, Monte Carlo curve, Picard seed, and manifest for
    one preset (fig1/fig2/fig3 encode the three reference branching rates)."""
    if preset not in FIGURE_PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(FIGURE_PRESETS)}")
    alpha = FIGURE_PRESETS[preset] if alpha is None else float(alpha)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = UniformGrid(t_max, step)
    cfg = McConfig(seed=seed, samples=samples, depth=depth, workers=workers)

    hist = estimate_leaf_histogram(alpha, t, depth, cfg)
    v0 = picard_v0(alpha, grid, picard_k, eps_tail)
    t_points = np.arange(0.0, t_max + mc_t_step / 2.0, mc_t_step)
    curve = estimate_v_curve(alpha, t_points, depth, v0, cfg)

    paths = {
        "histogram": write_histogram_csv(hist, out_dir / "histogram.csv"),
        "vcurve": write_series_csv(curve, out_dir / "vcurve_mc.csv"),
        "v0": write_grid_function(v0, out_dir / "v0_picard.csv"),
    }
    manifest = RunManifest.create(
        command=f"figures --preset {preset}",
        alpha=alpha,
        t_max=t_max,
        step=step,
        eps_tail=eps_tail,
        depth=depth,
        picard_k=picard_k,
        samples=samples,
        seed=seed,
    )
    tracked = [paths["histogram"], paths["vcurve"], paths["v0"],
               paths["v0"].with_name(paths["v0"].name + ".meta.json")]
    manifest = manifest.with_outputs(tracked)
    paths["manifest"] = write_manifest(manifest, out_dir / "manifest.json")
    return paths
