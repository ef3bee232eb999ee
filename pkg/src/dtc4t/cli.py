"""Command-line driver: every study as a config-driven run that writes CSV files.

Usage::

    dtc4t evolve --config dtc.ini --out runs/dtc
    dtc4t phase-diagram --config grid.ini --workers 8 --out runs/grid

Each output directory receives ``config.ini`` (the resolved configuration),
``VERSION``, the CSV artifacts and ``MANIFEST.sha256``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import COMMANDS, ConfigError, RunConfig, parse_config, validate
from .evolution import TrotterSchedule, evolve_stroboscopic
from .floquet import (
    ED_CAP, diagonalize, build_floquet_unitary, chi_zz, eigen_power_spectrum_scaling,
    quadruplet_analysis, s_pi_half,
)
from .model import clean, sample_disorder
from .noise import (
    NoiseModel, compare_recompiled_vs_trotter, load_calibration, noise_threshold_study,
    write_sequences_csv,
)
from .observables import (
    _grid_point, default_workers, disorder_averaged_spectrum, power_spectrum, run_tasks,
)
from .recompile import (
    AnsatzSimulator, build_ansatz, recompile_stroboscopic_sequence, save_parameter_table,
    stroboscopic_targets,
)
from .evolution import a_leg_magnetization
from .statevector import ResourceError

log = logging.getLogger("dtc4t")

MANIFEST = "MANIFEST.sha256"


def _fmt(x) -> str:
    return f"{float(x):.12g}"


def version_stamp() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    here = Path(__file__).resolve().parent
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=10)
        if res.returncode == 0 and res.stdout.strip():
            return f"dtc4t {__version__} ({res.stdout.strip()})"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"dtc4t {__version__}"


def write_manifest(out: Path) -> None:
    lines = []
    for p in sorted(out.iterdir()):
        if p.is_file() and p.name != MANIFEST:
            lines.append(f"{hashlib.sha256(p.read_bytes()).hexdigest()}  {p.name}")
    (out / MANIFEST).write_text("\n".join(lines) + "\n")


def _workers(cfg: RunConfig) -> int:
    return cfg.workers if cfg.workers > 0 else default_workers()


def _check_periods(n: int, path: str) -> None:
    if n < 8 or n % 4:
        raise ConfigError(path, f"spectrum needs a period count >= 8 divisible by 4, got {n}")


# ---------------------------------------------------------------------------
# commands; each returns the list of files it wrote


def cmd_evolve(cfg: RunConfig, out: Path) -> list[str]:
    params = cfg.params()
    sched = TrotterSchedule(dt=cfg.schedule.dt, T=params.T)
    n_periods = cfg.schedule.n_periods
    _check_periods(n_periods, "schedule.n_periods")
    spec = cfg.disorder_spec()
    if spec.is_clean:
        rec = evolve_stroboscopic(clean(params), sched, n_periods)
        rec.to_csv(out / "stroboscopic.csv")
        power_spectrum(rec.global_Sz[1:]).to_csv(out / "spectrum.csv")
        return ["stroboscopic.csv", "spectrum.csv"]
    ens = disorder_averaged_spectrum(params, spec, n_periods, sched, _workers(cfg))
    ens.mean.to_csv(out / "spectrum.csv")
    with open(out / "realization_peaks.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["realization", "peak"])
        b = ens.mean.bin_of(math.pi / 2)
        for i, row in enumerate(ens.per_realization):
            w.writerow([i, _fmt(row[b])])
    rec = evolve_stroboscopic(sample_disorder(params, spec, 0), sched, n_periods)
    rec.to_csv(out / "stroboscopic.csv")
    return ["spectrum.csv", "realization_peaks.csv", "stroboscopic.csv"]


def _key(jt: float, ht: float) -> tuple[str, str]:
    return _fmt(jt), _fmt(ht)


def cmd_phase_diagram(cfg: RunConfig, out: Path) -> list[str]:
    """Grid sweep; points already present in ``phase_diagram.csv`` are skipped."""
    jts, hts = cfg.grid("JT_over_pi"), cfg.grid("hT_over_pi")
    n_periods = cfg.schedule.n_periods
    _check_periods(n_periods, "schedule.n_periods")
    m = cfg.model
    path = out / "phase_diagram.csv"
    done: dict[tuple[str, str], str] = {}
    if path.exists():
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                done[(row["JT_over_pi"], row["hT_over_pi"])] = row["peak"]
    else:
        path.write_text("JT_over_pi,hT_over_pi,peak\n")
    todo = [(jt, ht) for jt in jts for ht in hts if _key(jt, ht) not in done]
    if done:
        log.info("resuming: %d of %d grid points already present", len(jts) * len(hts) - len(todo),
                 len(jts) * len(hts))
    workers = _workers(cfg)
    chunk = max(1, workers)
    for s in range(0, len(todo), chunk):
        part = todo[s:s + chunk]
        tasks = [(jt, ht, m.MT_over_pi, m.N0, n_periods, cfg.schedule.dt, m.T) for jt, ht in part]
        peaks = run_tasks(_grid_point, tasks, workers)
        with open(path, "a", newline="") as fh:
            for (jt, ht), pk in zip(part, peaks):
                done[_key(jt, ht)] = _fmt(pk)
                fh.write(f"{_fmt(jt)},{_fmt(ht)},{_fmt(pk)}\n")
    with open(path, "w", newline="") as fh:
        fh.write("JT_over_pi,hT_over_pi,peak\n")
        for jt in jts:
            for ht in hts:
                k = _key(jt, ht)
                fh.write(f"{k[0]},{k[1]},{done[k]}\n")
    return ["phase_diagram.csv"]


def cmd_floquet(cfg: RunConfig, out: Path) -> list[str]:
    params = cfg.params()
    if params.N > ED_CAP or max(cfg.n_list()) > ED_CAP:
        raise ResourceError(f"exact diagonalization is capped at N={ED_CAP}")
    sched = TrotterSchedule(dt=cfg.schedule.dt, T=params.T)
    fq = cfg.floquet
    tol = fq.quadruplet_tol_over_pi * math.pi / params.T
    delta = fq.delta_over_pi * math.pi / params.T
    spec = cfg.disorder_spec()
    files = []

    spectrum = diagonalize(build_floquet_unitary(clean(params), sched, fq.method), params.T)
    spectrum.to_csv(out / "quasienergies.csv")
    quad = quadruplet_analysis(spectrum, tol)
    quad.to_csv(out / "quadruplets.csv")
    files += ["quasienergies.csv", "quadruplets.csv"]
    with open(out / "order_parameters.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "chi_zz", "s_pi_half", "quadruplet_fraction"])
        w.writerow([params.N, _fmt(chi_zz(spectrum)), _fmt(s_pi_half(spectrum, delta=delta, seed=cfg.seed)),
                    _fmt(quad.fraction)])
    files.append("order_parameters.csv")

    if not spec.is_clean:
        with open(out / "quadruplet_realizations.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["realization", "quadruplet_fraction"])
            fracs = []
            for i in range(spec.n_realizations):
                dp = sample_disorder(params, spec, i)
                f = quadruplet_analysis(diagonalize(build_floquet_unitary(dp, sched, fq.method), params.T),
                                        tol).fraction
                fracs.append(f)
                w.writerow([i, _fmt(f)])
        log.info("median disordered quadruplet fraction %.4f (clean %.4f)", np.median(fracs), quad.fraction)
        files.append("quadruplet_realizations.csv")

    periods = fq.scaling_periods
    _check_periods(periods, "floquet.scaling_periods")
    rows = eigen_power_spectrum_scaling(params, cfg.n_list(), periods, sched, cfg.seed, delta)
    with open(out / "scaling.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "chi_zz", "s_pi_half", "peak_pi_half", "peak_3pi_half"])
        for r in rows:
            w.writerow([r.N, _fmt(r.chi_zz), _fmt(r.s_pi_half), _fmt(r.quarter_peak), _fmt(r.three_quarter_peak)])
    files.append("scaling.csv")
    return files


def cmd_recompile(cfg: RunConfig, out: Path) -> list[str]:
    params = cfg.params()
    dp = clean(params)
    sched = TrotterSchedule(dt=cfg.schedule.dt, T=params.T)
    rc = cfg.recompile

    def progress(k, res):
        log.info("k=%d cost=%.3e iterations=%d hops=%d", k, res.cost, res.n_iterations, res.n_hops)

    results = recompile_stroboscopic_sequence(dp, sched, rc.k_max, cfg.optimizer(), rc.n_layers,
                                              progress=progress)
    ansatz = build_ansatz(dp.N, rc.n_layers)
    save_parameter_table(out / "recompile_params.txt", results, ansatz)
    targets = stroboscopic_targets(dp, sched, rc.k_max)
    with open(out / "recompiled_sz.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "Sz_recompiled", "Sz_trotter", "cost", "iterations", "hops"])
        for k, res in sorted(results.items()):
            psi = AnsatzSimulator(ansatz, targets[k]).state(res.parameters)
            w.writerow([k, _fmt(a_leg_magnetization(psi, dp.N).mean()),
                        _fmt(a_leg_magnetization(targets[k], dp.N).mean()), _fmt(res.cost),
                        res.n_iterations, res.n_hops])
    return ["recompile_params.txt", "recompiled_sz.csv"]


def cmd_noisy(cfg: RunConfig, out: Path) -> list[str]:
    table = cfg.recompile.table
    if not table:
        raise ConfigError("recompile.table", "a recompiled parameter table is required (run 'recompile' first)")
    if not Path(table).exists():
        raise FileNotFoundError(f"recompile.table: parameter table not found: {table}")
    params = cfg.params()
    dp = clean(params)
    nz = cfg.noise
    sched = TrotterSchedule(dt=nz.circuit_dt, T=params.T)
    readout = load_calibration(nz.calibration) if nz.calibration else None
    n_periods = cfg.schedule.n_periods
    _check_periods(n_periods, "schedule.n_periods")
    r2_factor = 10.0
    seqs = noise_threshold_study(dp, sched, cfg.r_list(), n_periods, nz.n_shots, cfg.seed, r2_factor,
                                 readout, nz.mitigate)
    write_sequences_csv(out / "noise_threshold.csv", seqs)
    noise = NoiseModel(nz.r1, cfg.r2(), readout)
    rec, trot = compare_recompiled_vs_trotter(noise, table, dp, sched, n_periods, nz.n_shots, cfg.seed,
                                              nz.mitigate)
    write_sequences_csv(out / "comparison.csv", [rec, trot])
    with open(out / "peaks.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["circuit", "r", "peak_pi_half"])
        for s in seqs:
            w.writerow(["trotter", repr(s.r), _fmt(s.peak)])
        for s in (rec, trot):
            w.writerow([f"{s.label}_paired", repr(s.r), _fmt(s.peak)])
    return ["noise_threshold.csv", "comparison.csv", "peaks.csv"]


HANDLERS = {
    "evolve": cmd_evolve,
    "phase-diagram": cmd_phase_diagram,
    "floquet": cmd_floquet,
    "recompile": cmd_recompile,
    "noisy": cmd_noisy,
}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtc4t", description="Period-quadrupling time-crystal studies")
    parser.add_argument("--version", action="version", version=f"dtc4t {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} study")
        p.add_argument("--config", type=Path, help="INI configuration file")
        p.add_argument("--seed", type=int, help="master seed (overrides [run] seed)")
        p.add_argument("--workers", type=int, help="worker processes (default: $DTC4T_WORKERS or 1)")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--table", help="recompiled parameter table (overrides [recompile] table)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_run_config(args) -> RunConfig:
    cfg = parse_config(args.config.read_text()) if args.config else RunConfig()
    cfg.command = args.command
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers", "must be >= 1")
        cfg.workers = args.workers
    if args.table is not None:
        cfg.recompile.table = args.table
    if args.out is not None:
        cfg.out = str(args.out)
    if not cfg.out:
        cfg.out = f"runs/{cfg.command}"
    validate(cfg)
    return cfg


def run(cfg: RunConfig) -> list[str]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_ini())
    (out / "VERSION").write_text(version_stamp() + "\n")
    files = HANDLERS[cfg.command](cfg, out)
    missing = [f for f in files if not (out / f).is_file()]
    if missing:
        raise RuntimeError(f"artifacts not written: {missing}")
    write_manifest(out)
    return files


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        cfg = load_run_config(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        files = run(cfg)
    except (ConfigError, ResourceError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for f in files:
        print(os.path.join(cfg.out, f))
    return 0


if __name__ == "__main__":
    sys.exit(main())
