"""Ensemble orchestration: seeding, initial conditions, summaries and pooled histograms."""
from __future__ import annotations

import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import conjecture as cj
from .config import RunConfig, emit_config
from .seeding import field_seed, trajectory_seeds
from .constants import BOHR_PERIOD, PhysicalConstants
from .field import FieldRealization, build_field
from .integrator import Trajectory
from .io import write_histogram, write_json, write_record
from .record import TrajectoryRecord

log = logging.getLogger(__name__)


def initial_state(config: RunConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, dict]:
    """Position, velocity and a description of how they were chosen."""
    start = config.initial_start
    if start == "random":
        start = "perihelion" if rng.random() < 0.5 else "aphelion"
    if config.initial == "sampled":
        u1, u2 = 0.0, 0.0
        while not (0 < u1 < 1 and 0 < u2 < 1):
            u1, u2 = rng.random(2)
        ic = cj.sample_initial_conditions(u1, u2, rng, start=start)
        return ic.r, ic.v, {"R": ic.R, "kappa": ic.kappa, "eps": ic.eps, "start": ic.start}
    eps = 0.0 if config.initial == "circular" else config.initial_eps
    kappa = math.sqrt(1.0 - eps * eps)
    r, v = cj.place_orbit(config.initial_R, kappa, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], start)
    return r, v, {"R": config.initial_R, "kappa": kappa, "eps": eps, "start": start}


def make_trajectory(config: RunConfig, index: int = 0,
                    field: Optional[FieldRealization] = None) -> Trajectory:
    """Trajectory ``index`` of the ensemble, seeded from ``config.seed``."""
    _, traj_seq = trajectory_seeds(config.seed, index)
    rng = np.random.Generator(np.random.Philox(traj_seq))
    if field is None and config.field_enabled:
        field = build_field(field_seed(config.seed, index), config.grid(), config.resolved_cutoff_scale())
    r0, v0, info = initial_state(config, rng)
    return Trajectory(field, config.constants(), config.integrator(), r0, v0, rng=rng,
                      meta={"index": index, "master_seed": config.seed, "initial": info})


def run_trajectory(config: RunConfig, index: int = 0, field: Optional[FieldRealization] = None,
                   checkpoint_path=None) -> TrajectoryRecord:
    traj = make_trajectory(config, index, field)
    return traj.run(config.t_max, config.max_orbits, checkpoint_path=checkpoint_path,
                    checkpoint_every=config.checkpoint_every)


@dataclass(frozen=True)
class RunSummary:
    index: int
    status: str
    t_total: float
    t_total_seconds: float
    t_damp: float
    n_damp: float
    n_orbit_nominal: float
    n_orbit_actual: int
    ionisation_time: Optional[float]
    error: Optional[str] = None


def summarize(record: TrajectoryRecord, constants: PhysicalConstants, index: int = 0) -> RunSummary:
    """Durations in Bohr times, seconds, damping times and Bohr periods."""
    t_total = record.duration
    t_damp = constants.damping_time
    return RunSummary(index, record.status, t_total, t_total * constants.tau0_seconds, t_damp,
                      t_total / t_damp if math.isfinite(t_damp) else 0.0,
                      t_total / BOHR_PERIOD, record.orbits, record.ionisation_time)


def _worker(args) -> tuple[int, Optional[TrajectoryRecord], Optional[str]]:
    config, index, ckpt = args
    try:
        return index, run_trajectory(config, index, checkpoint_path=ckpt), None
    except Exception:  # reported per trajectory, the ensemble continues
        return index, None, traceback.format_exc()


@dataclass
class EnsembleResult:
    summaries: list
    records: dict
    histograms: dict

    @property
    def exit_code(self) -> int:
        """0 success, 3 every trajectory ionised, 4 any numerical abort or failure."""
        statuses = [s.status for s in self.summaries]
        if any(s in ("singular", "nonfinite", "failed") for s in statuses):
            return 4
        if statuses and all(s == "ionised" for s in statuses):
            return 3
        return 0


def pooled_histograms(records, bins: int = 60) -> dict:
    """Histograms of E, eps and r over regular samples before ionisation."""
    pools = {"E": [], "eps": [], "r": []}
    for rec in records:
        reg = rec.truncated().regular()
        bound = reg.energy < 0
        pools["E"].append(reg.energy[bound])
        pools["eps"].append(reg.eps[reg.eps < 1])
        pools["r"].append(reg.r)
    targets = {"E": (cj.pdf_E, cj.cdf_E), "eps": (cj.pdf_eps, cj.cdf_eps), "r": (cj.pdf_r, cj.cdf_r)}
    out = {}
    for key, chunks in pools.items():
        x = np.concatenate(chunks) if chunks else np.zeros(0)
        if x.size >= 100:
            pdf, cdf = targets[key]
            out[key] = cj.histogram_compare(x, pdf, bins, cdf=cdf)
    return out


def run_ensemble(config: RunConfig, output_dir=None, write: bool = True) -> EnsembleResult:
    """Run every trajectory, write records, histograms and summaries, and collect results."""
    out = Path(output_dir or config.output_dir)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.toml").write_text(emit_config(config))
    jobs = []
    for i in range(config.ensemble_size):
        ckpt = out / f"traj_{i:04d}.ckpt.npz" if (write and config.checkpoint_every) else None
        jobs.append((config, i, ckpt))
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_worker, jobs))
    else:
        results = [_worker(j) for j in jobs]
    constants = config.constants()
    summaries, records = [], {}
    for index, rec, err in results:
        if rec is None:
            log.error("trajectory %d failed:\n%s", index, err)
            summaries.append(RunSummary(index, "failed", 0.0, 0.0, constants.damping_time, 0.0,
                                        0.0, 0, None, err))
            continue
        records[index] = rec
        summaries.append(summarize(rec, constants, index))
        if write:
            suffix = "csv" if config.record_format == "csv" else "bin"
            write_record(rec, out / f"traj_{index:04d}.{suffix}", config.record_format)
    hists = pooled_histograms(records.values())
    if write:
        for key, rep in hists.items():
            write_histogram(rep, out / f"hist_{key}.csv")
        write_json([asdict(s) for s in summaries], out / "summaries.json")
        write_json({k: {"ks": r.ks_statistic, "critical_1pct": r.ks_critical_1pct, "n": r.n}
                    for k, r in hists.items()}, out / "histograms.json")
    return EnsembleResult(summaries, records, hists)
