"""Time-domain response to storage-device attack waveforms.

The system is linear, so the recurrence ``x[k+1] = Ad x[k] + drive[k]`` is
exact once ``drive`` integrates the input over each step. For square waves
this means splitting steps at switching instants; for sines it means an
augmented oscillator state. A plain sample-and-hold variant is kept for
comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .model import WAVEFORMS, AttackSpec
from .statespace import StateSpaceSystem

_EDGE_EPS = 1e-9


class SimulationError(ArithmeticError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


def attack_signal(spec: AttackSpec, t):
    """Injected load deviation (p.u.) at time(s) ``t``.

    Zero before ``spec.start_s``. A square wave starts on its positive half
    and spends ``spec.duty`` of each period at ``+amplitude``; a sine is
    ``amplitude * sin(2 pi f (t - start))``.
    """
    t = np.asarray(t, dtype=float)
    if spec.waveform == "none" or spec.amplitude == 0:
        out = np.zeros_like(t)
    else:
        phase = (t - spec.start_s) * spec.frequency_hz
        if spec.waveform == "square":
            cycle = phase - np.floor(phase + _EDGE_EPS)
            out = np.where(cycle < spec.duty - _EDGE_EPS, spec.amplitude, -spec.amplitude)
        elif spec.waveform == "sine":
            out = spec.amplitude * np.sin(2 * np.pi * phase)
        else:
            raise ValueError(f"unknown waveform {spec.waveform!r}")
        out = np.where(t < spec.start_s - _EDGE_EPS * max(1.0, abs(spec.start_s)), 0.0, out)
    return out if out.ndim else float(out)


def discretize(A: np.ndarray, B: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold ``(Ad, Bd)`` from the exponential of ``[[A, B], [0, 0]] dt``."""
    n, m = B.shape
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A
    aug[:n, n:] = B
    try:
        E = linalg.expm(aug * dt)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SimulationError(f"matrix exponential failed: {exc}") from exc
    if not np.all(np.isfinite(E)):
        raise SimulationError("matrix exponential is not finite")
    return E[:n, :n], E[:n, n:]


@dataclass(frozen=True)
class SimulationResult:
    """Sampled trajectories; row ``k`` is time ``k * dt``.

    ``u`` is the injected load deviation at each sample (one column per
    attack when several are superposed). ``t_events``, ``y1_events`` and
    ``y2_events`` hold the exact outputs at switching instants that fall
    between samples; ``kink`` flags samples that coincide with a switch.
    Both feed the between-sample maxima in :func:`severity_ratios`.
    """

    t: np.ndarray
    u: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    y1_ids: tuple[str, ...]
    y2_ids: tuple[str, ...]
    pairing: tuple[int, ...]
    start_s: float
    attacks: tuple[AttackSpec, ...]
    t_events: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    y1_events: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)), repr=False)
    y2_events: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)), repr=False)
    kink: np.ndarray | None = field(default=None, repr=False)

    def channel(self, output_id: str) -> np.ndarray:
        if output_id in self.y2_ids:
            return self.y2[:, self.y2_ids.index(output_id)]
        return self.y1[:, self.y1_ids.index(output_id)]


def _square_edges(spec: AttackSpec, t_end: float):
    """Switching instants in ``[start, t_end]`` and the jump in value at each."""
    period = 1.0 / spec.frequency_hz
    count = int(np.floor((t_end - spec.start_s) / period)) + 2
    j = np.arange(count)
    rising = spec.start_s + j * period
    falling = rising + spec.duty * period
    times = np.concatenate([rising, falling])
    jumps = np.concatenate([np.full(count, 2.0 * spec.amplitude), np.full(count, -2.0 * spec.amplitude)])
    jumps[0] = spec.amplitude
    order = np.argsort(times, kind="stable")
    times, jumps = times[order], jumps[order]
    keep = times <= t_end
    return times[keep], jumps[keep]


def _oscillator(A, b, w, h):
    """State response over ``h`` to ``sin`` / ``cos`` of the input phase at
    the segment start, for input ``b sin(w t + phase)``."""
    n = len(b)
    aug = np.zeros((n + 2, n + 2))
    aug[:n, :n] = A
    aug[:n, n] = b
    aug[n, n + 1] = w
    aug[n + 1, n] = -w
    E = linalg.expm(aug * h)
    return E[:n, n], E[:n, n + 1]


def _advance(A, columns, specs, x, a, h):
    """Exact state at ``a + h`` from ``x`` at ``a``, with no square-wave
    switch inside ``(a, a + h)``."""
    out = linalg.expm(A * h) @ x
    for b, sp in zip(columns, specs):
        if sp.waveform == "square":
            u = attack_signal(sp, a)
            if u:
                _, phi = discretize(A, b[:, None], h)
                out += u * phi[:, 0]
        elif sp.waveform == "sine" and sp.amplitude:
            w = 2 * np.pi * sp.frequency_hz
            lead = max(0.0, sp.start_s - a)
            if lead < h:
                e_sin, e_cos = _oscillator(A, sp.amplitude * b, w, h - lead)
                phase = w * (a + lead - sp.start_s)
                out += np.sin(phase) * e_sin + np.cos(phase) * e_cos
    return out


def _exact_drive(A, b, bd, spec, t, dt):
    """Per-step input contribution for the continuous waveform, integrated
    exactly between samples."""
    steps = len(t) - 1
    drive = np.zeros((steps, len(b)))
    if spec.waveform == "none" or spec.amplitude == 0:
        return drive
    if spec.waveform == "square":
        u = attack_signal(spec, t[:-1])
        drive += np.outer(u, bd)
        times, jumps = _square_edges(spec, t[-1])
        tol = _EDGE_EPS * max(1.0, abs(spec.start_s))
        k = np.floor(times / dt + _EDGE_EPS).astype(int)
        inside = (times - t[np.minimum(k, steps)] > tol) & (k < steps)
        for k_e, t_e, jump in zip(k[inside], times[inside], jumps[inside]):
            _, phi = discretize(A, b[:, None], t[k_e + 1] - t_e)
            drive[k_e] += jump * phi[:, 0]
        return drive
    if spec.waveform == "sine":
        w = 2 * np.pi * spec.frequency_hz
        e_sin, e_cos = _oscillator(A, spec.amplitude * b, w, dt)
        phase = w * (t[:-1] - spec.start_s)
        on = t[:-1] >= spec.start_s - _EDGE_EPS * max(1.0, abs(spec.start_s))
        drive[on] = np.column_stack([np.sin(phase[on]), np.cos(phase[on])]) @ np.vstack([e_sin, e_cos])
        k = int(np.floor(spec.start_s / dt + _EDGE_EPS))
        if k < steps and not on[k]:
            drive[k] = _oscillator(A, spec.amplitude * b, w, t[k + 1] - spec.start_s)[1]
        return drive
    raise ValueError(f"unknown waveform {spec.waveform!r}")


def _propagate(Ad, drive, x0):
    """All states of ``x_{k+1} = Ad x_k + drive_k``.

    Steps are grouped into blocks of about ``sqrt(steps)`` so the work runs
    as matrix products instead of one matrix-vector product per step.
    """
    steps, n = drive.shape
    X = np.empty((steps + 1, n))
    X[0] = x0
    m = max(1, int(np.sqrt(steps)))
    nb = steps // m
    full = nb * m
    with np.errstate(over="ignore", invalid="ignore"):
        if nb:
            inner = X[1:full + 1].reshape(nb, m, n)
            D = drive[:full].reshape(nb, m, n)
            # Zero-start response of every block.
            inner[:, 0] = D[:, 0]
            for i in range(1, m):
                np.matmul(inner[:, i - 1], Ad.T, out=inner[:, i])
                inner[:, i] += D[:, i]
            powers = [np.eye(n)]
            for _ in range(m):
                powers.append(Ad @ powers[-1])
            for j in range(nb):
                X[(j + 1) * m] += powers[m] @ X[j * m]
            starts = X[0:full:m]
            for i in range(1, m):
                inner[:, i - 1] += starts @ powers[i].T
        for k in range(full, steps):
            np.dot(Ad, X[k], out=X[k + 1])
            X[k + 1] += drive[k]
    return X


def _check_spec(spec: AttackSpec) -> None:
    if spec.waveform not in WAVEFORMS:
        raise ValueError(f"unknown waveform {spec.waveform!r}")
    if not spec.amplitude >= 0:
        raise ValueError(f"amplitude must be >= 0, got {spec.amplitude}")
    if spec.waveform != "none" and not (spec.frequency_hz is not None and spec.frequency_hz > 0):
        raise ValueError("periodic waveform needs frequency_hz > 0")
    if not 0 < spec.duty < 1:
        raise ValueError(f"duty must lie in (0, 1), got {spec.duty}")


def integrate(
    system: StateSpaceSystem,
    spec,
    horizon_s: float,
    dt_s: float,
    x0: np.ndarray | None = None,
    hold: str = "exact",
) -> SimulationResult:
    """Simulate from the operating point (``x = 0``) over ``[0, horizon_s]``.

    Parameters
    ----------
    system : StateSpaceSystem
    spec : AttackSpec or sequence of AttackSpec
        Each attack enters through the input column of its bus; several
        attacks superpose.
    horizon_s, dt_s : float
    x0 : ndarray, optional
        Initial deviation; zero by default.
    hold : {"exact", "sample"}
        ``"exact"`` integrates the continuous waveform between samples
        (square-wave edges inside a step are split exactly, sines through an
        augmented oscillator), so results do not depend on ``dt`` beyond
        round-off. ``"sample"`` holds the waveform value at each step start.

    Raises
    ------
    SimulationError
        The discretization fails or a state becomes non-finite; the message
        names the first bad time.
    """
    specs = (spec,) if isinstance(spec, AttackSpec) else tuple(spec)
    if not specs:
        raise ValueError("at least one attack spec is required")
    if not dt_s > 0:
        raise ValueError(f"dt must be > 0, got {dt_s}")
    start = min(sp.start_s for sp in specs)
    if horizon_s < start:
        raise ValueError(f"horizon {horizon_s} s ends before the attack starts at {start} s")
    if hold not in ("exact", "sample"):
        raise ValueError(f"hold must be 'exact' or 'sample', got {hold!r}")
    for sp in specs:
        _check_spec(sp)

    steps = int(round(horizon_s / dt_s))
    t = np.arange(steps + 1) * dt_s
    n = system.A.shape[0]
    Ad = None
    drive = None
    u = np.empty((steps + 1, len(specs)))
    for j, sp in enumerate(specs):
        b = system.input_column(sp.bus)
        Ad_j, Bd = discretize(system.A, b[:, None], dt_s)
        Ad = Ad_j if Ad is None else Ad
        u[:, j] = attack_signal(sp, t)
        if hold == "exact":
            part = _exact_drive(system.A, b, Bd[:, 0], sp, t, dt_s)
        else:
            part = np.outer(u[:-1, j], Bd[:, 0])
        drive = part if drive is None else drive + part

    X = _propagate(Ad, drive, np.zeros(n) if x0 is None else x0)

    bad = ~np.isfinite(X).all(axis=1)
    if bad.any():
        first = int(np.argmax(bad))
        raise SimulationError(f"non-finite state at t = {t[first]:.6g} s", time=float(t[first]))

    if hold == "exact":
        t_ev, X_ev, kink = _switch_states(system, specs, t, X)
    else:
        t_ev, X_ev = np.zeros(0), np.zeros((0, n))
        kink = np.zeros(steps + 1, dtype=bool)
        kink[1:] = (u[1:] != u[:-1]).any(axis=1)

    return SimulationResult(
        t=t,
        u=u[:, 0] if len(specs) == 1 else u,
        y1=X @ system.C1.T,
        y2=X @ system.C2.T,
        y1_ids=system.y1_ids,
        y2_ids=system.y2_ids,
        pairing=system.terminal_pairing(),
        start_s=start,
        attacks=specs,
        t_events=t_ev,
        y1_events=X_ev @ system.C1.T,
        y2_events=X_ev @ system.C2.T,
        kink=kink,
    )


def _switch_states(system, specs, t, X):
    """States at square-wave switching instants between samples, and a mask
    of samples that coincide with a switch."""
    steps = len(t) - 1
    dt = t[1] - t[0] if steps else 1.0
    kink = np.zeros(steps + 1, dtype=bool)
    times = []
    for sp in specs:
        if sp.waveform != "square" or sp.amplitude == 0:
            continue
        edges, _ = _square_edges(sp, t[-1])
        times.append(edges)
    if not times:
        return np.zeros(0), np.zeros((0, X.shape[1])), kink
    times = np.sort(np.concatenate(times), kind="stable")
    k = np.minimum(np.floor(times / dt + _EDGE_EPS).astype(int), steps)
    on_grid = np.abs(times - t[k]) <= _EDGE_EPS * np.maximum(1.0, times)
    kink[k[on_grid]] = True
    times, k = times[~on_grid], k[~on_grid]

    columns = [system.input_column(sp.bus) for sp in specs]
    states = np.empty((len(times), X.shape[1]))
    prev_k, a, x = -1, 0.0, None
    for i, (k_e, t_e) in enumerate(zip(k, times)):
        if k_e != prev_k:
            prev_k, a, x = k_e, t[k_e], X[k_e]
        x = _advance(system.A, columns, specs, x, a, t_e - a)
        states[i] = x
        a = t_e
    return times, states, kink


def _vertex_max(tt: np.ndarray, Y: np.ndarray, smooth_mid: np.ndarray) -> np.ndarray:
    """Per column, the largest vertex of parabolas through consecutive
    sample triples whose middle sample is not a kink and whose vertex lies
    inside the triple."""
    best = np.full(Y.shape[1], -np.inf)
    if len(tt) < 3:
        return best
    d0 = (tt[:-2] - tt[1:-1])[:, None]
    d2 = (tt[2:] - tt[1:-1])[:, None]
    y0, y1, y2 = Y[:-2], Y[1:-1], Y[2:]
    ok_span = (d0 < 0) & (d2 > 0) & smooth_mid[1:-1, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        s2 = (y2 - y1) / d2
        s0 = (y0 - y1) / d0
        q = (s2 - s0) / (d2 - d0)
        p = s2 - q * d2
        vertex = -p / (2 * q)
        value = y1 - p * p / (4 * q)
    ok = ok_span & (q < 0) & (vertex >= d0) & (vertex <= d2) & np.isfinite(value)
    value = np.where(ok, value, -np.inf)
    return value.max(axis=0)


def peak_abs(y: np.ndarray, t: np.ndarray | None = None, kink: np.ndarray | None = None,
             refine: bool = True):
    """Largest ``|y|`` of a sampled, piecewise-smooth signal.

    Parameters
    ----------
    y : ndarray, shape (T,) or (T, m)
        Samples; columns are treated independently.
    t : ndarray, optional
        Sample times (increasing); uniform spacing is assumed if omitted.
    kink : ndarray of bool, optional
        Samples where the slope may jump. A parabola is never centered on one.
    refine : bool
        Without refinement the sample maximum is returned. With it, local
        peaks between samples are recovered by parabolic interpolation.
    """
    Y = np.abs(np.asarray(y, dtype=float))
    single = Y.ndim == 1
    if single:
        Y = Y[:, None]
    if Y.shape[0] == 0:
        out = np.zeros(Y.shape[1])
    else:
        out = Y.max(axis=0)
        if refine and Y.shape[0] >= 3:
            tt = np.arange(Y.shape[0], dtype=float) if t is None else np.asarray(t, dtype=float)
            smooth = np.ones(Y.shape[0], dtype=bool) if kink is None else ~np.asarray(kink, dtype=bool)
            out = np.maximum(out, _vertex_max(tt, Y, smooth))
    return float(out[0]) if single else out


@dataclass(frozen=True)
class Severity:
    """Peak deviation of one shaft difference against its terminal channel."""

    output_id: str
    terminal_id: str
    generator: str
    segment: int
    kind: str
    max_difference: float
    max_terminal: float
    ratio: float

    @property
    def status(self) -> str:
        if self.max_terminal > 0:
            return "ok"
        return "undefined" if self.max_difference == 0 else "unbounded"


def severity_ratios(result: SimulationResult, refine: bool = True) -> list[Severity]:
    """``max|dw_j| / max|w_terminal|`` (and the angle analogue) for every
    generator and shaft segment, over ``t >= start``.

    Deviations are measured from the pre-attack state, which is zero.
    Maxima include the exact switching-instant samples and, with ``refine``,
    parabolic peaks between samples (see :func:`peak_abs`), so they track
    the continuous-time maximum rather than the sampling grid.
    """
    window = result.t >= result.start_s - _EDGE_EPS * max(1.0, result.start_s)
    kink = result.kink if result.kink is not None else np.zeros(len(result.t), dtype=bool)
    tt, y1, y2, kk = result.t[window], result.y1[window], result.y2[window], kink[window]
    if len(result.t_events):
        ev = result.t_events >= tt[0] if len(tt) else np.zeros(0, dtype=bool)
        tt = np.concatenate([tt, result.t_events[ev]])
        y1 = np.vstack([y1, result.y1_events[ev]])
        y2 = np.vstack([y2, result.y2_events[ev]])
        kk = np.concatenate([kk, np.ones(int(ev.sum()), dtype=bool)])
        order = np.argsort(tt, kind="stable")
        tt, y1, y2, kk = tt[order], y1[order], y2[order], kk[order]
    if len(tt):
        kk[0] = True
    peak1 = peak_abs(y1, tt, kk, refine)
    peak2 = peak_abs(y2, tt, kk, refine)

    out = []
    seg_count: dict[tuple[str, str], int] = {}
    for k, oid in enumerate(result.y2_ids):
        tid = result.y1_ids[result.pairing[k]]
        kind = "speed" if oid.startswith("dw_") else "angle"
        gen = tid.split("_", 1)[1].rsplit("_", 1)[0]
        seg = seg_count.get((gen, kind), 0) + 1
        seg_count[(gen, kind)] = seg
        num = float(peak2[k])
        den = float(peak1[result.pairing[k]])
        if den > 0:
            ratio = num / den
        else:
            ratio = np.nan if num == 0 else np.inf
        out.append(Severity(oid, tid, gen, seg, kind, num, den, ratio))
    return out
