"""Command-line front end.

Every subcommand takes a configuration file, validates it, and writes CSV
outputs plus ``manifest.json`` into ``--out-dir``. Floats are written with
12 significant digits in scientific notation so identical inputs give
byte-identical files.

Exit status: 0 on success, 1 when the configuration or flags are invalid
(report on standard error), 2 on a numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .freq import FrequencyGrid, PeakBand, find_peaks, transfer_magnitudes
from .model import WAVEFORMS, AttackSpec, ConfigError, SystemModel, dumps, read_model, validate
from .network import SingularNetworkError, couple
from .sim import Severity, SimulationError, integrate, severity_ratios
from .statespace import LIGHT_DAMPING, assemble, eig_modes

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2
MANIFEST = "manifest.json"


class _UsageError(Exception):
    pass


def fmt(value) -> str:
    """Locale-independent 12-significant-digit scientific notation."""
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.11e" % v


def fmt_ratio(value, unbounded: bool = False) -> str:
    if unbounded or math.isinf(value):
        return "unbounded"
    if math.isnan(value):
        return "undefined"
    return fmt(value)


def config_hash(model: SystemModel) -> str:
    """SHA-256 of the canonical serialization, so comments, ordering of keys
    within a section and number spelling do not change it."""
    return hashlib.sha256(dumps(model).encode()).hexdigest()


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_manifest(out_dir: Path, model, command: str, params: dict, files) -> None:
    manifest = {
        "tool": "ssrscan",
        "version": __version__,
        "config_hash": config_hash(model),
        "subcommand": command,
        "parameters": params,
        "files": sorted(files),
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    (out_dir / MANIFEST).write_text(text, encoding="ascii")


# ---------------------------------------------------------------------------
# report


def report(bands, severities=None) -> str:
    """Human-readable vulnerability summary.

    Parameters
    ----------
    bands : list of PeakBand
        Typically the output of :func:`ssrscan.freq.find_peaks`.
    severities : mapping, optional
        ``{f_center: list of Severity}`` from simulations at band centers.
        A band whose generator shows a simulated speed ratio above 1 gets a
        consistency note.
    """
    if not bands:
        return "no vulnerable bands found\n"
    severities = severities or {}
    best: dict[tuple[str, float], PeakBand] = {}
    for b in bands:
        key = (_generator_of(b.output_id), b.f_center)
        if key not in best or _rank(b) < _rank(best[key]):
            best[key] = b
    rows = sorted(best.items(), key=lambda kv: (_rank(kv[1]), kv[0][0], kv[0][1]))

    lines = [
        f"{'rank':>4}  {'generator':<9}  {'band_hz':<17}  {'center_hz':>9}  "
        f"{'peak_R_M':>11}  {'sim_R_w':>11}  {'stealth':<7}  output",
    ]
    notes = []
    for rank, ((gen, f), b) in enumerate(rows, start=1):
        sim = [s for s in severities.get(f, []) if s.generator == gen and s.kind == "speed"]
        r_w = max((s.ratio for s in sim), default=float("nan"))
        r_m = "unbounded" if math.isinf(b.r_m) else f"{b.r_m:.4g}"
        r_s = "" if not sim else ("unbounded" if math.isinf(r_w) else f"{r_w:.4g}")
        lines.append(
            f"{rank:>4}  {gen:<9}  {b.f_lo:7.3f}-{b.f_hi:<8.3f}  {b.f_center:9.3f}  "
            f"{r_m:>11}  {r_s:>11}  {'yes' if b.stealth else 'no':<7}  {b.output_id}"
        )
        if sim:
            if b.stealth and r_w > 1:
                notes.append(f"{gen} at {b.f_center:.3f} Hz: simulation confirms R_M > 1 (R_w = {r_w:.4g})")
            elif b.stealth:
                notes.append(f"{gen} at {b.f_center:.3f} Hz: simulation does not confirm R_M > 1 (R_w = {r_w:.4g})")
    flagged = sorted({gen for (gen, _), b in rows if b.stealth})
    lines.append("")
    lines.append(f"stealth-flagged generators: {', '.join(flagged) if flagged else 'none'}")
    if notes:
        lines.append("")
        lines.extend(notes)
    return "\n".join(lines) + "\n"


def _generator_of(output_id: str) -> str:
    return output_id.split("_", 1)[1].rsplit("_", 1)[0]


def _rank(b: PeakBand):
    return (-b.r_m if not math.isnan(b.r_m) else math.inf, b.output_id)


# ---------------------------------------------------------------------------
# subcommands


def _load(args):
    model = read_model(args.config)
    problems = validate(model)
    if problems:
        raise _Invalid(problems)
    return model


class _Invalid(Exception):
    def __init__(self, problems):
        super().__init__(f"{len(problems)} violation(s)")
        self.problems = problems


def _attack_bus(args, model) -> str:
    bus = getattr(args, "bus", None) or model.network.attack_bus
    if bus is None:
        raise _UsageError("no attack bus: give --bus or an [attack] section")
    if bus not in model.network.load_buses:
        raise _UsageError(f"attack bus {bus!r} is not a load bus")
    return bus


def _grid(args) -> FrequencyGrid:
    try:
        return FrequencyGrid(args.fmin, args.fmax, args.step)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_validate(args) -> int:
    model = _load(args)
    print(f"{args.config}: valid ({model.n} generators, {len(model.network.buses)} buses)")
    return EXIT_OK


def cmd_eig(args) -> int:
    model = _load(args)
    system = assemble(model, couple(model))
    modes = eig_modes(system)
    out = _out_dir(args)
    rows = []
    for m in modes:
        rows.append([
            m.id, fmt(m.eigenvalue.real), fmt(m.eigenvalue.imag), fmt(m.frequency_hz),
            fmt(m.damping_ratio), ";".join(m.participation), m.generator, m.kind,
            int(m.damping_ratio < args.threshold) if not math.isnan(m.damping_ratio) else 0,
        ])
    header = ["mode_id", "re", "im", "freq_hz", "damping_ratio", "participation",
              "generator", "kind", "lightly_damped"]
    _write_csv(out / "modes.csv", header, rows)
    _write_manifest(out, model, "eig", {"threshold": args.threshold}, ["modes.csv"])
    return EXIT_OK


def _scan(args, model):
    system = assemble(model, couple(model))
    bus = _attack_bus(args, model)
    return system, bus, transfer_magnitudes(system, bus, _grid(args))


def cmd_freqscan(args) -> int:
    model = _load(args)
    _, bus, scan = _scan(args, model)
    out = _out_dir(args)
    f = scan.frequencies
    ids = scan.y1_ids + scan.y2_ids
    mags = np.hstack([scan.gamma1, scan.gamma2])
    _write_csv(out / "magnitudes.csv", ["f_hz", *ids],
               ([fmt(f[i]), *map(fmt, mags[i])] for i in range(len(f))))
    r = scan.ratios
    _write_csv(out / "ratios.csv", ["f_hz", *(f"{k}/{i}" for k, i in r.pairs)],
               ([fmt(f[i]), *(fmt_ratio(v, u) for v, u in zip(r.values[i], r.unbounded[i]))]
                for i in range(len(f))))
    params = {"bus": bus, "fmin": args.fmin, "fmax": args.fmax, "step": args.step}
    _write_manifest(out, model, "freqscan", params, ["magnitudes.csv", "ratios.csv"])
    return EXIT_OK


def _peak_rows(bands):
    for b in bands:
        yield [b.output_id, fmt(b.f_center), fmt(b.f_lo), fmt(b.f_hi), fmt(b.magnitude),
               fmt_ratio(b.r_m), int(b.stealth)]


PEAK_HEADER = ["output_id", "f_center", "f_lo", "f_hi", "magnitude", "r_m", "stealth_flag"]


def cmd_peaks(args) -> int:
    model = _load(args)
    _, bus, scan = _scan(args, model)
    bands = find_peaks(scan, args.prominence)
    out = _out_dir(args)
    _write_csv(out / "peaks.csv", PEAK_HEADER, _peak_rows(bands))
    params = {"bus": bus, "fmin": args.fmin, "fmax": args.fmax, "step": args.step,
              "prominence": args.prominence}
    _write_manifest(out, model, "peaks", params, ["peaks.csv"])
    return EXIT_OK


def _attack_from_args(args, model) -> AttackSpec:
    base = model.attack or AttackSpec(bus=_attack_bus(args, model))
    spec = replace(
        base,
        bus=_attack_bus(args, model),
        amplitude=base.amplitude if args.amplitude is None else args.amplitude,
        frequency_hz=base.frequency_hz if args.attack_freq is None else args.attack_freq,
        waveform=base.waveform if args.waveform is None else args.waveform,
        start_s=base.start_s if args.start is None else args.start,
        duty=base.duty if args.duty is None else args.duty,
    )
    if spec.waveform != "none" and not (spec.frequency_hz and spec.frequency_hz > 0):
        raise _UsageError("a periodic attack needs --attack-freq > 0")
    if not spec.amplitude >= 0:
        raise _UsageError("--amplitude must be >= 0")
    if not 0 < spec.duty < 1:
        raise _UsageError("--duty must lie in (0, 1)")
    if not args.dt > 0 or not args.horizon >= spec.start_s:
        raise _UsageError("need --dt > 0 and --horizon >= --start")
    return spec


SEVERITY_HEADER = ["generator", "kind", "segment", "output_id", "terminal_id",
                   "max_difference", "max_terminal", "ratio"]


def _severity_rows(sev: list[Severity]):
    for s in sev:
        yield [s.generator, s.kind, s.segment, s.output_id, s.terminal_id,
               fmt(s.max_difference), fmt(s.max_terminal), fmt_ratio(s.ratio)]


def cmd_simulate(args) -> int:
    model = _load(args)
    system = assemble(model, couple(model))
    spec = _attack_from_args(args, model)
    result = integrate(system, spec, args.horizon, args.dt, hold=args.hold)
    sev = severity_ratios(result)
    out = _out_dir(args)
    header = ["t", "input", *result.y1_ids, *result.y2_ids]
    rows_idx = range(0, len(result.t), args.stride)
    _write_csv(out / "trajectory.csv", header,
               ([fmt(result.t[i]), fmt(result.u[i]), *map(fmt, result.y1[i]), *map(fmt, result.y2[i])]
                for i in rows_idx))
    _write_csv(out / "severity.csv", SEVERITY_HEADER, _severity_rows(sev))
    params = {
        "bus": spec.bus, "amplitude": spec.amplitude, "attack_freq": spec.frequency_hz,
        "waveform": spec.waveform, "start": spec.start_s, "duty": spec.duty,
        "horizon": args.horizon, "dt": args.dt, "hold": args.hold, "stride": args.stride,
    }
    _write_manifest(out, model, "simulate", params, ["trajectory.csv", "severity.csv"])
    return EXIT_OK


def cmd_report(args) -> int:
    model = _load(args)
    system, bus, scan = _scan(args, model)
    bands = find_peaks(scan, args.prominence)
    severities = {}
    if args.simulate:
        centers = sorted({b.f_center for b in bands if b.stealth})
        base = model.attack or AttackSpec(bus=bus)
        for f in centers:
            spec = replace(base, bus=bus, frequency_hz=f, waveform="square", amplitude=args.amplitude,
                           start_s=args.start)
            severities[f] = severity_ratios(integrate(system, spec, args.horizon, args.dt))
    text = report(bands, severities)
    out = _out_dir(args)
    (out / "report.txt").write_text(text, encoding="utf-8")
    _write_csv(out / "peaks.csv", PEAK_HEADER, _peak_rows(bands))
    params = {"bus": bus, "fmin": args.fmin, "fmax": args.fmax, "step": args.step,
              "prominence": args.prominence, "simulate": args.simulate,
              "amplitude": args.amplitude, "horizon": args.horizon, "dt": args.dt,
              "start": args.start}
    _write_manifest(out, model, "report", params, ["peaks.csv", "report.txt"])
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ssrscan", description="Sub-synchronous resonance scanning and attack simulation.")
    p.add_argument("--version", action="version", version=f"ssrscan {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out=True):
        sp.add_argument("config", help="system configuration file")
        if out:
            sp.add_argument("--out-dir", default=".", help="directory for outputs (default: .)")

    def scan_flags(sp):
        sp.add_argument("--bus", help="attack bus (default: the [attack] bus)")
        sp.add_argument("--fmin", type=float, default=0.0)
        sp.add_argument("--fmax", type=float, default=60.0)
        sp.add_argument("--step", type=float, default=0.01)

    sp = sub.add_parser("validate", help="check a configuration")
    common(sp, out=False)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("eig", help="eigen-modes of the assembled system")
    common(sp)
    sp.add_argument("--threshold", type=float, default=LIGHT_DAMPING,
                    help="damping ratio below which a mode is lightly damped")
    sp.set_defaults(func=cmd_eig)

    sp = sub.add_parser("freqscan", help="transfer magnitudes and stealth ratios")
    common(sp)
    scan_flags(sp)
    sp.set_defaults(func=cmd_freqscan)

    sp = sub.add_parser("peaks", help="resonance bands of the torsional outputs")
    common(sp)
    scan_flags(sp)
    sp.add_argument("--prominence", type=float, default=None,
                    help="absolute prominence threshold (default: 10x each curve's median)")
    sp.set_defaults(func=cmd_peaks)

    sp = sub.add_parser("simulate", help="time-domain attack simulation")
    common(sp)
    sp.add_argument("--bus", help="attack bus (default: the [attack] bus)")
    sp.add_argument("--attack-freq", type=float, help="Hz (default: from config)")
    sp.add_argument("--amplitude", type=float, help="p.u. on the system base")
    sp.add_argument("--waveform", choices=WAVEFORMS)
    sp.add_argument("--start", type=float, help="attack start, s")
    sp.add_argument("--duty", type=float)
    sp.add_argument("--horizon", type=float, default=10.0)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.add_argument("--hold", choices=("exact", "sample"), default="exact",
                    help="waveform integration between samples")
    sp.add_argument("--stride", type=int, default=1, help="write every n-th sample")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("report", help="ranked vulnerability summary")
    common(sp)
    scan_flags(sp)
    sp.add_argument("--prominence", type=float, default=None)
    sp.add_argument("--no-simulate", dest="simulate", action="store_false",
                    help="skip confirming simulations")
    sp.add_argument("--amplitude", type=float, default=1.0)
    sp.add_argument("--start", type=float, default=2.0)
    sp.add_argument("--horizon", type=float, default=10.0)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "stride", 1) < 1:
        print("ssrscan: --stride must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except _Invalid as exc:
        print(f"{args.config}: invalid", file=sys.stderr)
        for v in exc.problems:
            print(f"  {v}", file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, _UsageError, OSError) as exc:
        print(f"ssrscan: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SimulationError, SingularNetworkError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"ssrscan: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
