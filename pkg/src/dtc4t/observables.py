"""Power spectra of stroboscopic magnetization, subharmonic peaks, parameter sweeps."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .evolution import TrotterSchedule, evolve_stroboscopic
from .model import DisorderSpec, ModelParams, clean, params_from_pi, sample_disorder


@dataclass
class PowerSpectrum:
    omega_T: np.ndarray  # Omega_m T = 2 pi m / N_tot
    magnitudes: np.ndarray

    @property
    def n_tot(self) -> int:
        return self.magnitudes.size

    def bin_of(self, omega_T: float) -> int:
        m = omega_T * self.n_tot / (2 * math.pi)
        k = int(round(m))
        if abs(m - k) > 1e-9:
            raise ValueError(f"Omega T = {omega_T} is not on the {self.n_tot}-point grid")
        return k % self.n_tot

    def at(self, omega_T: float) -> float:
        return float(self.magnitudes[self.bin_of(omega_T)])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["omega_T_over_pi", "magnitude"])
            for om, mag in zip(self.omega_T, self.magnitudes):
                w.writerow([f"{om / math.pi:.12g}", f"{mag:.12g}"])


def power_spectrum(series) -> PowerSpectrum:
    """|1/N_tot sum_k S_z(kT) exp(-i Omega_m k T)| for k = 1..N_tot.

    ``series[0]`` is the value at ``t = T``. The k-offset only contributes a
    phase, so the magnitude equals that of the plain DFT.
    """
    s = np.asarray(series, dtype=float)
    n = s.size
    if n < 8 or n % 4:
        raise ValueError(f"need N_tot >= 8 and divisible by 4, got {n}")
    mags = np.abs(np.fft.fft(s)) / n
    return PowerSpectrum(2 * math.pi * np.arange(n) / n, mags)


def subharmonic_peak(spectrum: PowerSpectrum, omega_T: float = math.pi / 2) -> float:
    return spectrum.at(omega_T)


def spectrum_of(params: ModelParams, n_periods: int, schedule: TrotterSchedule | None = None,
                dp=None) -> PowerSpectrum:
    dp = dp if dp is not None else clean(params)
    rec = evolve_stroboscopic(dp, schedule, n_periods)
    return power_spectrum(rec.global_Sz[1:])


# ---------------------------------------------------------------------------
# phase diagram


@dataclass
class PhaseDiagram:
    JT_over_pi: np.ndarray
    hT_over_pi: np.ndarray
    MT_over_pi: float
    peaks: np.ndarray  # (len(JT), len(hT))

    def peak_at(self, JT_over_pi: float, hT_over_pi: float) -> float:
        i = int(np.argmin(np.abs(self.JT_over_pi - JT_over_pi)))
        j = int(np.argmin(np.abs(self.hT_over_pi - hT_over_pi)))
        return float(self.peaks[i, j])

    def rows(self):
        for i, jt in enumerate(self.JT_over_pi):
            for j, ht in enumerate(self.hT_over_pi):
                yield jt, ht, self.peaks[i, j]


def _grid_point(args) -> float:
    jt, ht, mt, n0, n_periods, dt, T = args
    p = params_from_pi(ht, jt, mt, T=T, N0=n0)
    return subharmonic_peak(spectrum_of(p, n_periods, TrotterSchedule(dt=dt, T=T)))


def default_workers() -> int:
    return int(os.environ.get("DTC4T_WORKERS", "1"))


def run_tasks(fn, tasks, workers: int | None = None):
    """Map ``fn`` over ``tasks`` in order, in a process pool if ``workers > 1``."""
    workers = default_workers() if workers is None else workers
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def phase_diagram_sweep(JT_grid, hT_grid, MT_over_pi: float = 0.98, N: int = 8,
                        n_periods: int = 20, schedule: TrotterSchedule | None = None,
                        workers: int | None = None, T: float = 1.0) -> PhaseDiagram:
    """Subharmonic peak at Omega T = pi/2 over a grid of (JT/pi, hT/pi)."""
    JT_grid = np.asarray(JT_grid, dtype=float)
    hT_grid = np.asarray(hT_grid, dtype=float)
    if JT_grid.size == 0 or hT_grid.size == 0:
        raise ValueError("phase diagram grids must be non-empty")
    if not (np.all(np.isfinite(JT_grid)) and np.all(np.isfinite(hT_grid))):
        raise ValueError("phase diagram grids must be finite")
    dt = (schedule or TrotterSchedule(T=T)).dt
    tasks = [(jt, ht, MT_over_pi, N // 2, n_periods, dt, T) for jt in JT_grid for ht in hT_grid]
    peaks = np.array(run_tasks(_grid_point, tasks, workers)).reshape(JT_grid.size, hT_grid.size)
    return PhaseDiagram(JT_grid, hT_grid, MT_over_pi, peaks)


# ---------------------------------------------------------------------------
# disorder averaging


@dataclass
class EnsembleSpectrum:
    mean: PowerSpectrum
    per_realization: np.ndarray = field(repr=False)  # (n_realizations, N_tot)

    def stderr_at(self, omega_T: float) -> float:
        col = self.per_realization[:, self.mean.bin_of(omega_T)]
        if col.size < 2:
            return 0.0
        return float(col.std(ddof=1) / math.sqrt(col.size))


def _realization_spectrum(args) -> np.ndarray:
    params, spec, k, n_periods, dt = args
    dp = sample_disorder(params, spec, k)
    return spectrum_of(params, n_periods, TrotterSchedule(dt=dt, T=params.T), dp=dp).magnitudes


def disorder_averaged_spectrum(params: ModelParams, spec: DisorderSpec, n_periods: int = 100,
                               schedule: TrotterSchedule | None = None,
                               workers: int | None = None) -> EnsembleSpectrum:
    """Mean of per-realization spectrum magnitudes."""
    dt = (schedule or TrotterSchedule(T=params.T)).dt
    if spec.is_clean:
        # every realization is identical to the clean system
        mags = spectrum_of(params, n_periods, TrotterSchedule(dt=dt, T=params.T)).magnitudes
        per = np.tile(mags, (spec.n_realizations, 1))
        avg = mags
    else:
        tasks = [(params, spec, k, n_periods, dt) for k in range(spec.n_realizations)]
        per = np.array(run_tasks(_realization_spectrum, tasks, workers))
        avg = per.mean(axis=0)
    n = per.shape[1]
    mean = PowerSpectrum(2 * math.pi * np.arange(n) / n, avg)
    return EnsembleSpectrum(mean, per)

