"""Parameter sweeps over seeded scenarios, with CSV and JSON manifest output.

Per-seed pipelines are independent. With ``jobs > 1`` seeds run in worker
processes; rows are always gathered and written in (sweep value, scheme,
seed) order, so the output does not depend on the number of workers.
"""

from __future__ import annotations

import csv
import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .._version import __version__
from ..beamforming import achievable_rate_from_snr, beampattern
from .config import SystemConfig, dbm_to_watts
from .schemes import (ACTIVE, FIXED, FLEXIBLE, RCA, SCHEMES, ExperimentResult, active_array_pattern,
                      build_scenario, generate_channel, run_scheme)

SWEEPS = ("power", "N", "L", "theta_max", "convergence", "beampattern")
RATE_COLUMNS = ("sweep_value", "scheme", "seed", "rate_bps_hz", "iterations", "wall_ms")
BEAM_PSI_DEG = 55.0


def default_values(sweep: str, config: SystemConfig) -> list:
    """Sweep points used when none are given (powers in dBm, angles in degrees)."""
    if sweep == "power":
        return [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
    if sweep == "N":
        return [1, 2, 3, 4, 5, 6]
    if sweep == "L":
        return list(range(1, 13))
    if sweep == "theta_max":
        return [60.0, 90.0, 120.0, 150.0, 175.0]
    if sweep == "beampattern":
        return [float(x) for x in range(-180, 180)]
    if sweep == "convergence":
        return []
    raise ValueError(f"unknown sweep {sweep!r}; expected one of {SWEEPS}")


def fmt(x) -> str:
    """17 significant digits, enough to round-trip a double."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass
class _Task:
    config: SystemConfig
    sweep: str
    values: list
    seed: int
    schemes: tuple


def _scenario_for(config: SystemConfig, sweep: str, value, seed: int):
    N, theta, L = config.N, config.theta_max, config.num_paths
    if sweep == "N":
        N = int(value)
    elif sweep == "theta_max":
        theta = math.radians(float(value))
    elif sweep == "L":
        L = int(value)
    ch = generate_channel(config, seed, L)
    return build_scenario(config, ch, N=N, theta_max=theta)


def _affects(sweep: str, scheme: str) -> bool:
    return not (sweep == "theta_max" and scheme != RCA)


def _run_seed(task: _Task):
    """All rows for one seed: ``{(value_index, scheme): (rate, iterations, wall_s)}`` plus traces."""
    cfg, sweep, values, seed = task.config, task.sweep, task.values, task.seed
    out, traces = {}, {}
    if sweep == "power":
        sc = _scenario_for(cfg, sweep, None, seed)
        for scheme in task.schemes:
            run = run_scheme(scheme, sc, cfg, seed)
            for i, p_dbm in enumerate(values):
                scale = dbm_to_watts(p_dbm) / dbm_to_watts(cfg.noise_power)
                out[i, scheme] = (run.rate(scale), run.iterations, run.wall_time)
        return seed, out, traces
    if sweep == "convergence":
        sc = _scenario_for(cfg, sweep, None, seed)
        run = run_scheme(RCA, sc, cfg, seed)
        scale = sc.transmit_power / sc.noise_power
        traces["rate"] = [achievable_rate_from_snr(scale * math.exp(phi)) for phi in run.trace.objectives]
        traces["objective"] = list(run.trace.objectives)
        traces["converged"] = run.trace.converged
        traces["stop_reason"] = run.trace.stop_reason
        return seed, out, traces
    if sweep == "beampattern":
        sc = _scenario_for(cfg, sweep, None, seed)
        phi = np.asarray(values, dtype=float)
        phi_rad = np.deg2rad(np.where(phi >= 180.0, phi - 360.0, phi))
        for scheme in task.schemes:
            run = run_scheme(scheme, sc, cfg, seed)
            if scheme in (RCA, FIXED):
                pattern = beampattern(run.detail["U"], sc, math.radians(BEAM_PSI_DEG), phi_rad)
            elif scheme == ACTIVE:
                pattern = active_array_pattern(run.detail["w"], sc.n_couplers, sc.wire, BEAM_PSI_DEG, phi)
            else:
                continue
            traces[scheme] = pattern
        return seed, out, traces
    shared = {}
    for i, value in enumerate(values):
        sc = _scenario_for(cfg, sweep, value, seed)
        for scheme in task.schemes:
            if not _affects(sweep, scheme) and scheme in shared:
                out[i, scheme] = shared[scheme]
                continue
            run = run_scheme(scheme, sc, cfg, seed)
            out[i, scheme] = (run.rate(sc.transmit_power / sc.noise_power), run.iterations, run.wall_time)
            shared[scheme] = out[i, scheme]
    return seed, out, traces


def _map(fn, tasks, jobs: int):
    if jobs <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


@dataclass
class ExperimentOutput:
    sweep: str
    values: list
    seeds: list
    results: dict
    files: list
    traces: dict


def _write_csv(path: Path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def run_experiment(config: SystemConfig, sweep: str, seeds, out_dir=None, values=None,
                   schemes=SCHEMES, jobs: int = 1, timing: bool = False) -> ExperimentOutput:
    """Run ``schemes`` on every seed and sweep point; optionally write files to ``out_dir``.

    ``wall_ms`` is left empty unless ``timing`` is set, so that repeated runs
    produce byte-identical CSV files.
    """
    if sweep not in SWEEPS:
        raise ValueError(f"unknown sweep {sweep!r}; expected one of {SWEEPS}")
    values = default_values(sweep, config) if values is None else list(values)
    seeds = [int(s) for s in seeds]
    schemes = tuple(schemes)
    if sweep == "convergence":
        schemes = (RCA,)
    elif sweep == "beampattern":
        schemes = tuple(s for s in schemes if s != FLEXIBLE)
    for s in schemes:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme {s!r}")
    tasks = [_Task(config, sweep, values, seed, schemes) for seed in seeds]
    gathered = sorted(_map(_run_seed, tasks, jobs), key=lambda r: seeds.index(r[0]))

    files = []
    out_dir = None if out_dir is None else Path(out_dir)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    results, traces = {}, {}
    if sweep == "convergence":
        traces = {seed: tr for seed, _, tr in gathered}
        if out_dir is not None:
            files += _write_convergence(out_dir, gathered, timing)
    elif sweep == "beampattern":
        traces = {seed: tr for seed, _, tr in gathered}
        if out_dir is not None:
            files += _write_beampattern(out_dir, values, schemes, gathered)
    else:
        for i, v in enumerate(values):
            for scheme in schemes:
                rows = [g[1][i, scheme] for g in gathered]
                results[v, scheme] = ExperimentResult(scheme, seeds, [r[0] for r in rows],
                                                      iterations=[r[1] for r in rows])
        if out_dir is not None:
            files += _write_rates(out_dir, sweep, values, schemes, gathered, results, timing)
    if out_dir is not None:
        files.append(write_manifest(out_dir, config, sweep, values, seeds, schemes, files))
    return ExperimentOutput(sweep, values, seeds, results, files, traces)


def _wall(t, timing):
    return fmt(1000.0 * t) if timing else ""


def _write_rates(out_dir, sweep, values, schemes, gathered, results, timing):
    per_seed = []
    for i, v in enumerate(values):
        for scheme in schemes:
            for seed, rows, _ in gathered:
                rate, iters, wall = rows[i, scheme]
                per_seed.append([fmt(v), scheme, seed, fmt(rate), iters, _wall(wall, timing)])
    summary = []
    for i, v in enumerate(values):
        for scheme in schemes:
            res = results[v, scheme]
            walls = [g[1][i, scheme][2] for g in gathered]
            summary.append([fmt(v), scheme, "mean", fmt(res.mean_rate), fmt(np.mean(res.iterations)),
                            _wall(np.mean(walls), timing)])
    p1, p2 = out_dir / f"{sweep}_per_seed.csv", out_dir / f"{sweep}.csv"
    _write_csv(p1, RATE_COLUMNS, per_seed)
    _write_csv(p2, RATE_COLUMNS, summary)
    return [p2.name, p1.name]


def _write_convergence(out_dir, gathered, timing):
    header = RATE_COLUMNS + ("objective",)
    rows, longest = [], 0
    for seed, _, tr in gathered:
        rates, objs = tr["rate"], tr["objective"]
        longest = max(longest, len(rates))
        for it, (r, o) in enumerate(zip(rates, objs)):
            rows.append([it, "rca", seed, fmt(r), it, "", fmt(o)])
    mean_rows = []
    for it in range(longest):
        # stopped runs hold their final value
        rs = [tr["rate"][min(it, len(tr["rate"]) - 1)] for _, _, tr in gathered]
        os_ = [tr["objective"][min(it, len(tr["rate"]) - 1)] for _, _, tr in gathered]
        mean_rows.append([it, "rca", "mean", fmt(np.mean(rs)), it, "", fmt(np.mean(os_))])
    p1, p2 = out_dir / "convergence_per_seed.csv", out_dir / "convergence.csv"
    _write_csv(p1, header, rows)
    _write_csv(p2, header, mean_rows)
    return [p2.name, p1.name]


def _write_beampattern(out_dir, values, schemes, gathered):
    header = ("phi_deg", "scheme", "seed", "gain_db")
    rows = []
    for scheme in schemes:
        if scheme == FLEXIBLE:
            continue
        for seed, _, tr in gathered:
            for phi, g in zip(values, tr[scheme]):
                rows.append([fmt(phi), scheme, seed, fmt(g)])
    p = out_dir / "beampattern.csv"
    _write_csv(p, header, rows)
    return [p.name]


def write_manifest(out_dir: Path, config: SystemConfig, sweep: str, values, seeds, schemes, files) -> str:
    manifest = {
        "library": "rcasim",
        "version": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "sweep": sweep,
        "values": [v if isinstance(v, int) else float(v) for v in values],
        "seeds": list(seeds),
        "schemes": list(schemes),
        "beam_psi_deg": BEAM_PSI_DEG if sweep == "beampattern" else None,
        "config": config.to_dict(),
        "files": list(files),
    }
    path = out_dir / "manifest.json"
    try:
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path.name


def rerun_from_manifest(manifest_path, out_dir, jobs: int = 1) -> ExperimentOutput:
    """Repeat the run recorded in a manifest into ``out_dir``."""
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except OSError as exc:
        raise OSError(f"cannot read manifest {manifest_path}: {exc}") from exc
    config = SystemConfig.from_dict(manifest["config"])
    return run_experiment(config, manifest["sweep"], manifest["seeds"], out_dir, manifest["values"],
                          tuple(manifest["schemes"]), jobs=jobs)
