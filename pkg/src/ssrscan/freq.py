"""Transfer-function magnitudes from the attack input to every output, the
torsional-to-terminal stealth ratio, and resonance-band detection."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import signal

from .statespace import StateSpaceSystem

THREADS_ENV = "SSRSCAN_THREADS"
RATIO_FLOOR = 1e-12
_CHUNK = 256


@dataclass(frozen=True)
class FrequencyGrid:
    """Inclusive grid ``f_start, f_start + step, ..., f_end`` in Hz."""

    f_start: float = 0.0
    f_end: float = 60.0
    step: float = 0.01

    def __post_init__(self):
        if not (0 <= self.f_start < self.f_end):
            raise ValueError(f"need 0 <= f_start < f_end, got {self.f_start}, {self.f_end}")
        if not self.step > 0:
            raise ValueError(f"step must be > 0, got {self.step}")

    @cached_property
    def frequencies(self) -> np.ndarray:
        count = int(np.floor((self.f_end - self.f_start) / self.step + 1e-9)) + 1
        return self.f_start + self.step * np.arange(count)

    def __len__(self):
        return len(self.frequencies)


@dataclass(frozen=True)
class Ratios:
    """``R_M`` for every torsional output against its generator's terminal
    output of the same kind. ``unbounded`` marks points whose denominator is
    below the floor; their ``values`` are ``inf``."""

    pairs: tuple[tuple[str, str], ...]
    values: np.ndarray
    unbounded: np.ndarray

    def summary(self, frequencies) -> list[dict]:
        """Per pair: largest finite ratio and where it occurs."""
        out = []
        for k, (num, den) in enumerate(self.pairs):
            col = np.where(self.unbounded[:, k], np.nan, self.values[:, k])
            if np.all(np.isnan(col)):
                out.append(dict(output=num, terminal=den, max_ratio=np.nan, f_hz=np.nan))
                continue
            i = int(np.nanargmax(col))
            out.append(dict(output=num, terminal=den, max_ratio=float(col[i]), f_hz=float(frequencies[i])))
        return out


@dataclass(frozen=True)
class FrequencyScan:
    """Magnitudes ``|Gamma1|`` (rows: grid points, columns: ``y1_ids``) and
    ``|Gamma2|`` (columns: ``y2_ids``). ``inf`` marks grid points where
    ``j 2 pi f I - A`` is exactly singular."""

    grid: FrequencyGrid
    y1_ids: tuple[str, ...]
    y2_ids: tuple[str, ...]
    gamma1: np.ndarray
    gamma2: np.ndarray
    pairing: tuple[int, ...] = field(repr=False)

    @property
    def frequencies(self) -> np.ndarray:
        return self.grid.frequencies

    def magnitude(self, output_id: str) -> np.ndarray:
        if output_id in self.y2_ids:
            return self.gamma2[:, self.y2_ids.index(output_id)]
        return self.gamma1[:, self.y1_ids.index(output_id)]

    @cached_property
    def ratios(self) -> Ratios:
        return ratio_RM(self)


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        return max(1, int(raw))
    return min(8, os.cpu_count() or 1)


def _solve_chunk(A, b, omegas):
    n = A.shape[0]
    M = 1j * omegas[:, None, None] * np.eye(n) - A
    rhs = np.broadcast_to(b.astype(complex)[None, :, None], (len(omegas), n, 1))
    try:
        return np.linalg.solve(M, rhs)[:, :, 0]
    except np.linalg.LinAlgError:
        pass
    out = np.empty((len(omegas), n), dtype=complex)
    for i in range(len(omegas)):
        try:
            out[i] = np.linalg.solve(M[i], rhs[i])[:, 0]
        except np.linalg.LinAlgError as exc:
            if "Singular" not in str(exc):
                raise
            out[i] = np.inf
    return out


def transfer_magnitudes(
    system: StateSpaceSystem,
    attack_input,
    grid: FrequencyGrid | None = None,
    threads: int | None = None,
) -> FrequencyScan:
    """Scan ``|C (j 2 pi f I - A)^-1 b|`` over the grid for both output sets.

    Parameters
    ----------
    system : StateSpaceSystem
    attack_input : str or array_like
        A load-bus id (its column of ``B`` is used) or an explicit input
        column of length ``10n``.
    grid : FrequencyGrid, optional
        Defaults to 0-60 Hz in 0.01 Hz steps.
    threads : int, optional
        Worker threads; defaults to ``$SSRSCAN_THREADS`` or the CPU count.
        Output does not depend on it.
    """
    grid = grid or FrequencyGrid()
    if isinstance(attack_input, str):
        b = system.input_column(attack_input)
    else:
        b = np.asarray(attack_input, dtype=float).reshape(-1)
    if b.shape != (system.A.shape[0],):
        raise ValueError(f"input column has shape {b.shape}, expected ({system.A.shape[0]},)")

    omegas = 2 * np.pi * grid.frequencies
    chunks = [omegas[i:i + _CHUNK] for i in range(0, len(omegas), _CHUNK)]
    workers = threads or thread_count()
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda w: _solve_chunk(system.A, b, w), chunks))
    else:
        parts = [_solve_chunk(system.A, b, w) for w in chunks]
    Z = np.concatenate(parts)

    singular = ~np.isfinite(Z).all(axis=1)
    Zs = np.where(singular[:, None], 0, Z)
    g1 = np.abs(Zs @ system.C1.T)
    g2 = np.abs(Zs @ system.C2.T)
    g1[singular] = np.inf
    g2[singular] = np.inf
    return FrequencyScan(grid, system.y1_ids, system.y2_ids, g1, g2, system.terminal_pairing())


def ratio_RM(scan: FrequencyScan, floor: float = RATIO_FLOOR) -> Ratios:
    """Pointwise ``|Gamma2|_k / |Gamma1|_i`` with ``i`` the terminal speed
    (for speed differences) or terminal angle (for angle differences) of the
    same generator.

    A denominator below ``floor * max|Gamma1|_i`` is reported as unbounded.
    """
    num = scan.gamma2
    den = scan.gamma1[:, list(scan.pairing)]
    with np.errstate(invalid="ignore"):
        finite_den = np.where(np.isfinite(den), den, np.nan)
        peak = np.nanmax(finite_den, axis=0) if len(den) else np.zeros(den.shape[1])
    peak = np.nan_to_num(peak, nan=0.0)
    unbounded = den <= floor * peak[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(unbounded, np.inf, num / np.where(unbounded, 1.0, den))
    pairs = tuple((k, scan.y1_ids[i]) for k, i in zip(scan.y2_ids, scan.pairing))
    return Ratios(pairs, values, unbounded)


@dataclass(frozen=True)
class PeakBand:
    """A resonance of one output; ``[f_lo, f_hi]`` spans half the prominence."""

    output_id: str
    f_center: float
    f_lo: float
    f_hi: float
    magnitude: float
    prominence: float
    r_m: float

    @property
    def stealth(self) -> bool:
        return bool(self.r_m > 1)


def _peaks_of(values: np.ndarray, threshold: float | None):
    arr = np.asarray(values, dtype=float)
    finite = np.isfinite(arr)
    if not finite.any():
        return np.array([], dtype=int), {}, arr
    if not finite.all():
        top = arr[finite].max()
        arr = np.where(finite, arr, 10 * top if top > 0 else 1.0)
    if threshold is None:
        threshold = 10 * float(np.median(arr[finite]))
    idx, props = signal.find_peaks(arr, prominence=threshold)
    idx = idx[finite[idx]]
    return idx, props, arr


def find_peaks(
    scan: FrequencyScan, prominence_threshold: float | None = None, outputs: str = "y2"
) -> list[PeakBand]:
    """Local maxima of every ``|Gamma2|`` curve (or ``|Gamma1|`` with
    ``outputs="y1"``) whose prominence reaches the threshold.

    The default threshold is ten times the median of each curve. Bands are
    sorted by ``R_M`` at the peak, largest first.
    """
    if outputs == "y2":
        ids, mags = scan.y2_ids, scan.gamma2
        ratios = scan.ratios.values
    elif outputs == "y1":
        ids, mags = scan.y1_ids, scan.gamma1
        ratios = np.full(mags.shape, np.nan)
    else:
        raise ValueError("outputs must be 'y1' or 'y2'")
    f = scan.frequencies
    step = scan.grid.step
    bands = []
    for k, oid in enumerate(ids):
        idx, _, arr = _peaks_of(mags[:, k], prominence_threshold)
        if len(idx) == 0:
            continue
        prom, left, right = signal.peak_prominences(arr, idx)
        _, _, lo, hi = signal.peak_widths(arr, idx, rel_height=0.5, prominence_data=(prom, left, right))
        for j, i in enumerate(idx):
            bands.append(
                PeakBand(
                    output_id=oid,
                    f_center=float(f[i]),
                    f_lo=float(f[0] + lo[j] * step),
                    f_hi=float(f[0] + hi[j] * step),
                    magnitude=float(mags[i, k]),
                    prominence=float(prom[j]),
                    r_m=float(ratios[i, k]),
                )
            )
    order = {oid: k for k, oid in enumerate(ids)}
    bands.sort(key=lambda p: (-np.nan_to_num(p.r_m, nan=-np.inf), order[p.output_id], p.f_center))
    return bands
