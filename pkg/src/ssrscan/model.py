"""Physical system description: generators with five-mass shafts, the DC
network they sit on, and the storage-device attack point.

Models are read from a small sectioned text format::

    [system]
    base_mva = 100
    frequency_hz = 60

    [bus]
    id = 3
    role = load

    [line]
    from = 102
    to = 3
    x_pu = 0.01

    [generator]
    id = G1
    bus = 1
    dispatch_mw = 700
    h = 0.9 0.25 0.9 0.9 0.25
    d = 0 0.01 0.01 0.01 0.01
    k = 20 35 50 70
    bf = 0.3 0.3 0.3 0.1

    [load]
    bus = 3
    mw = 970

    [attack]
    bus = 3
    amplitude_pu = 1
    frequency_hz = 26.81
    waveform = square
    start_s = 2
    duty = 0.5

``[bus]``, ``[line]``, ``[generator]`` and ``[load]`` may repeat; ``[system]``
and ``[attack]`` appear at most once. Lists take whitespace or commas.
Lines starting with ``#`` or ``;`` are comments. Unknown sections or keys are
rejected.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

MASSES = ("g", "s1", "s2", "s3", "s4")
SHAFTS = ("g-s1", "s1-s2", "s2-s3", "s3-s4")
ROLES = ("generator", "load", "slack")
WAVEFORMS = ("square", "sine", "none")

# number of field poles; fixes the electrical/mechanical speed ratio
FIELD_POLES = 2
DEFAULT_TERMINAL_DAMPING = 0.0
DEFAULT_TURBINE_DAMPING = 0.01
FRACTION_TOL = 1e-9


class ConfigError(ValueError):
    """Malformed configuration text."""

    def __init__(self, message, line=None, section=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if section is not None:
            where.append(f"[{section}]")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line = line
        self.section = section


class ModelReferenceError(ConfigError):
    """An entry names a bus that was never declared."""


class DuplicateIdError(ConfigError):
    pass


@dataclass(frozen=True)
class ShaftParams:
    """Per-unit parameters of one five-mass shaft.

    Masses are ordered generator first, then turbine sections ``s1..s4``;
    ``stiffnesses[j]`` couples mass ``j`` to mass ``j + 1``.

    Attributes
    ----------
    inertias : tuple of 5 floats
        Inertia constants H in seconds.
    dampings : tuple of 5 floats
        Self-damping, p.u. torque per p.u. speed.
    stiffnesses : tuple of 4 floats
        Shaft stiffness, p.u. torque per electrical radian.
    power_fractions : tuple of 4 floats
        Share of mechanical power produced by each turbine section.
    """

    inertias: tuple[float, ...]
    dampings: tuple[float, ...]
    stiffnesses: tuple[float, ...]
    power_fractions: tuple[float, ...]

    def __post_init__(self):
        for name in ("inertias", "dampings", "stiffnesses", "power_fractions"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))


@dataclass(frozen=True)
class GeneratorModel:
    id: str
    bus: str
    shaft: ShaftParams
    dispatch_mw: float


@dataclass(frozen=True)
class Bus:
    id: str
    role: str


@dataclass(frozen=True)
class Line:
    from_bus: str
    to_bus: str
    x_pu: float


@dataclass(frozen=True)
class NetworkModel:
    """Lossless DC network. ``loads`` maps bus id to consumption in MW."""

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    loads: dict[str, float]
    base_mva: float = 100.0
    attack_bus: str | None = None

    @property
    def bus_ids(self) -> list[str]:
        return [b.id for b in self.buses]

    def role(self, bus_id: str) -> str:
        for b in self.buses:
            if b.id == bus_id:
                return b.role
        raise KeyError(bus_id)

    @property
    def slack_bus(self) -> str:
        slack = [b.id for b in self.buses if b.role == "slack"]
        if len(slack) != 1:
            raise ValueError(f"expected exactly one slack bus, found {len(slack)}")
        return slack[0]

    @property
    def load_buses(self) -> list[str]:
        """Buses that can carry load (role load or slack), in declaration order."""
        return [b.id for b in self.buses if b.role in ("load", "slack")]

    def load_vector_pu(self) -> np.ndarray:
        """Steady-state loads on :attr:`load_buses`, per unit on ``base_mva``."""
        return np.array([self.loads.get(b, 0.0) for b in self.load_buses]) / self.base_mva


@dataclass(frozen=True)
class AttackSpec:
    """Storage-device injection at a load bus.

    ``amplitude`` is per unit on the system base. ``duty`` is the fraction of
    each period spent at ``+amplitude`` for square waves.
    """

    bus: str
    amplitude: float = 1.0
    frequency_hz: float | None = None
    waveform: str = "square"
    start_s: float = 0.0
    duty: float = 0.5


@dataclass(frozen=True)
class SystemModel:
    generators: tuple[GeneratorModel, ...]
    network: NetworkModel
    nominal_frequency_hz: float = 60.0
    omega_0m: float | None = None
    attack: AttackSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        if self.omega_0m is None:
            object.__setattr__(self, "omega_0m", rated_mechanical_speed(self.nominal_frequency_hz))

    @property
    def n(self) -> int:
        return len(self.generators)

    @property
    def generator_ids(self) -> list[str]:
        return [g.id for g in self.generators]

    def dispatch_pu(self) -> np.ndarray:
        return np.array([g.dispatch_mw for g in self.generators]) / self.network.base_mva


def rated_mechanical_speed(frequency_hz: float, poles: int = FIELD_POLES) -> float:
    """Rated shaft speed in mechanical rad/s, ``(2 / poles) * 2 pi f``."""
    return (2.0 / poles) * 2.0 * math.pi * frequency_hz


# ---------------------------------------------------------------------------
# text format

_SECTION_KEYS = {
    "system": {"base_mva", "frequency_hz"},
    "bus": {"id", "role"},
    "line": {"from", "to", "x_pu"},
    "generator": {"id", "bus", "dispatch_mw", "h", "d", "k", "bf"},
    "load": {"bus", "mw"},
    "attack": {"bus", "amplitude_pu", "frequency_hz", "waveform", "start_s", "duty"},
}
_REQUIRED = {
    "system": set(),
    "bus": {"id", "role"},
    "line": {"from", "to", "x_pu"},
    "generator": {"id", "bus", "dispatch_mw", "h", "k", "bf"},
    "load": {"bus", "mw"},
    "attack": {"bus"},
}
_SINGLETONS = {"system", "attack"}
_SECTION_RE = re.compile(r"^\[\s*([A-Za-z_]+)\s*\]$")


@dataclass
class _Section:
    name: str
    line: int
    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)


def _tokenize(text: str) -> list[_Section]:
    sections: list[_Section] = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped or stripped[0] == ";":
            continue
        m = _SECTION_RE.match(stripped)
        if m:
            name = m.group(1).lower()
            if name not in _SECTION_KEYS:
                raise ConfigError(f"unknown section [{name}]", line=lineno)
            current = _Section(name, lineno)
            sections.append(current)
            continue
        if current is None:
            raise ConfigError("key outside of any section", line=lineno)
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", lineno, current.name)
        key, _, value = stripped.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key not in _SECTION_KEYS[current.name]:
            raise ConfigError(f"unknown key {key!r}", lineno, current.name)
        if key in current.values:
            raise ConfigError(f"repeated key {key!r}", lineno, current.name)
        current.values[key] = value
        current.lines[key] = lineno
    return sections


def _number(sec: _Section, key: str) -> float:
    try:
        return float(sec.values[key])
    except ValueError:
        raise ConfigError(
            f"{key!r} is not a number: {sec.values[key]!r}", sec.lines[key], sec.name
        ) from None


def _numbers(sec: _Section, key: str, count: int) -> tuple[float, ...]:
    parts = [p for p in re.split(r"[\s,]+", sec.values[key]) if p]
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{key!r} must be numbers", sec.lines[key], sec.name) from None
    if len(vals) != count:
        raise ConfigError(
            f"{key!r} needs {count} values, got {len(vals)}", sec.lines[key], sec.name
        )
    return vals


def load_model(config_text: str) -> SystemModel:
    """Parse configuration text into a :class:`SystemModel`.

    Raises
    ------
    ConfigError
        Syntax problems, unknown keys, missing keys, bad numbers.
    ModelReferenceError
        A line, generator, load or attack names an undeclared bus.
    DuplicateIdError
        Repeated bus or generator id, or a repeated load entry.
    """
    sections = _tokenize(config_text)
    seen_single = {}
    for sec in sections:
        missing = _REQUIRED[sec.name] - sec.values.keys()
        if missing:
            raise ConfigError(f"missing key(s) {sorted(missing)}", sec.line, sec.name)
        if sec.name in _SINGLETONS:
            if sec.name in seen_single:
                raise ConfigError(f"section [{sec.name}] given twice", sec.line, sec.name)
            seen_single[sec.name] = sec

    system = seen_single.get("system")
    base_mva = 100.0
    freq = 60.0
    if system is not None:
        if "base_mva" in system.values:
            base_mva = _number(system, "base_mva")
        if "frequency_hz" in system.values:
            freq = _number(system, "frequency_hz")

    buses: list[Bus] = []
    bus_ids: set[str] = set()
    for sec in (s for s in sections if s.name == "bus"):
        bid = sec.values["id"]
        if bid in bus_ids:
            raise DuplicateIdError(f"duplicate bus id {bid!r}", sec.lines["id"], "bus")
        role = sec.values["role"].lower()
        if role not in ROLES:
            raise ConfigError(f"role must be one of {ROLES}, got {role!r}", sec.lines["role"], "bus")
        bus_ids.add(bid)
        buses.append(Bus(bid, role))

    def check_ref(sec, key):
        bid = sec.values[key]
        if bid not in bus_ids:
            raise ModelReferenceError(f"undeclared bus {bid!r}", sec.lines[key], sec.name)
        return bid

    lines = []
    for sec in (s for s in sections if s.name == "line"):
        lines.append(Line(check_ref(sec, "from"), check_ref(sec, "to"), _number(sec, "x_pu")))

    generators = []
    gen_ids: set[str] = set()
    for sec in (s for s in sections if s.name == "generator"):
        gid = sec.values["id"]
        if gid in gen_ids:
            raise DuplicateIdError(f"duplicate generator id {gid!r}", sec.lines["id"], "generator")
        gen_ids.add(gid)
        if "d" in sec.values:
            dampings = _numbers(sec, "d", 5)
        else:
            dampings = (DEFAULT_TERMINAL_DAMPING,) + (DEFAULT_TURBINE_DAMPING,) * 4
        shaft = ShaftParams(
            inertias=_numbers(sec, "h", 5),
            dampings=dampings,
            stiffnesses=_numbers(sec, "k", 4),
            power_fractions=_numbers(sec, "bf", 4),
        )
        generators.append(
            GeneratorModel(gid, check_ref(sec, "bus"), shaft, _number(sec, "dispatch_mw"))
        )

    loads: dict[str, float] = {}
    for sec in (s for s in sections if s.name == "load"):
        bid = check_ref(sec, "bus")
        if bid in loads:
            raise DuplicateIdError(f"second load entry for bus {bid!r}", sec.lines["bus"], "load")
        loads[bid] = _number(sec, "mw")

    attack = None
    sec = seen_single.get("attack")
    if sec is not None:
        waveform = sec.values.get("waveform", "square").lower()
        if waveform not in WAVEFORMS:
            raise ConfigError(
                f"waveform must be one of {WAVEFORMS}", sec.lines["waveform"], "attack"
            )
        attack = AttackSpec(
            bus=check_ref(sec, "bus"),
            amplitude=_number(sec, "amplitude_pu") if "amplitude_pu" in sec.values else 1.0,
            frequency_hz=_number(sec, "frequency_hz") if "frequency_hz" in sec.values else None,
            waveform=waveform,
            start_s=_number(sec, "start_s") if "start_s" in sec.values else 0.0,
            duty=_number(sec, "duty") if "duty" in sec.values else 0.5,
        )

    network = NetworkModel(
        buses=tuple(buses),
        lines=tuple(lines),
        loads=loads,
        base_mva=base_mva,
        attack_bus=attack.bus if attack is not None else None,
    )
    return SystemModel(tuple(generators), network, nominal_frequency_hz=freq, attack=attack)


def read_model(path) -> SystemModel:
    return load_model(Path(path).read_text())


def bundled_path(name: str = "two_area") -> Path:
    """Filesystem path of a configuration shipped with the package."""
    return Path(str(resources.files("ssrscan") / "data" / f"{name}.cfg"))


def bundled_model(name: str = "two_area") -> SystemModel:
    return read_model(bundled_path(name))


def _fmt(v: float) -> str:
    return repr(float(v))


def dumps(model: SystemModel) -> str:
    """Serialize to the text format; ``load_model(dumps(m)) == m``."""
    net = model.network
    out = [
        "[system]",
        f"base_mva = {_fmt(net.base_mva)}",
        f"frequency_hz = {_fmt(model.nominal_frequency_hz)}",
    ]
    for b in net.buses:
        out += ["", "[bus]", f"id = {b.id}", f"role = {b.role}"]
    for ln in net.lines:
        out += ["", "[line]", f"from = {ln.from_bus}", f"to = {ln.to_bus}", f"x_pu = {_fmt(ln.x_pu)}"]
    for g in model.generators:
        s = g.shaft
        out += [
            "",
            "[generator]",
            f"id = {g.id}",
            f"bus = {g.bus}",
            f"dispatch_mw = {_fmt(g.dispatch_mw)}",
            "h = " + " ".join(map(_fmt, s.inertias)),
            "d = " + " ".join(map(_fmt, s.dampings)),
            "k = " + " ".join(map(_fmt, s.stiffnesses)),
            "bf = " + " ".join(map(_fmt, s.power_fractions)),
        ]
    for bid, mw in net.loads.items():
        out += ["", "[load]", f"bus = {bid}", f"mw = {_fmt(mw)}"]
    a = model.attack
    if a is not None:
        out += ["", "[attack]", f"bus = {a.bus}", f"amplitude_pu = {_fmt(a.amplitude)}"]
        if a.frequency_hz is not None:
            out.append(f"frequency_hz = {_fmt(a.frequency_hz)}")
        out += [f"waveform = {a.waveform}", f"start_s = {_fmt(a.start_s)}", f"duty = {_fmt(a.duty)}"]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    element: str
    message: str

    def __str__(self):
        return f"{self.element}: {self.message}"


def _check_shaft(gid: str, s: ShaftParams) -> list[Violation]:
    out = []
    el = f"generator {gid}"
    for name, values, count in (
        ("inertias", s.inertias, 5),
        ("dampings", s.dampings, 5),
        ("stiffnesses", s.stiffnesses, 4),
        ("power_fractions", s.power_fractions, 4),
    ):
        if len(values) != count:
            out.append(Violation(el, f"{name} needs {count} values, got {len(values)}"))
    if any(not h > 0 for h in s.inertias):
        out.append(Violation(el, f"inertias must be > 0, got {list(s.inertias)}"))
    if any(not d >= 0 for d in s.dampings):
        out.append(Violation(el, f"dampings must be >= 0, got {list(s.dampings)}"))
    if any(not k > 0 for k in s.stiffnesses):
        out.append(Violation(el, f"stiffnesses must be > 0, got {list(s.stiffnesses)}"))
    if any(not f >= 0 for f in s.power_fractions):
        out.append(Violation(el, f"power fractions must be >= 0, got {list(s.power_fractions)}"))
    total = sum(s.power_fractions)
    if abs(total - 1.0) > FRACTION_TOL:
        out.append(Violation(el, f"fractions sum {total:.12g} ≠ 1"))
    return out


def _is_connected(net: NetworkModel) -> bool:
    ids = net.bus_ids
    if len(ids) <= 1:
        return True
    pos = {b: i for i, b in enumerate(ids)}
    rows = [pos[ln.from_bus] for ln in net.lines if ln.from_bus in pos and ln.to_bus in pos]
    cols = [pos[ln.to_bus] for ln in net.lines if ln.from_bus in pos and ln.to_bus in pos]
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(ids), len(ids)))
    ncomp, _ = connected_components(graph, directed=False)
    return ncomp == 1


def validate(model: SystemModel) -> list[Violation]:
    """Check every model invariant; an empty list means the model is valid."""
    out: list[Violation] = []
    net = model.network
    roles = {b.id: b.role for b in net.buses}

    if not net.base_mva > 0:
        out.append(Violation("system", f"base_mva must be > 0, got {net.base_mva}"))
    if not model.nominal_frequency_hz > 0:
        out.append(Violation("system", f"frequency_hz must be > 0, got {model.nominal_frequency_hz}"))
    expected = rated_mechanical_speed(model.nominal_frequency_hz)
    if not math.isclose(model.omega_0m, expected, rel_tol=1e-12):
        out.append(Violation("system", f"omega_0m {model.omega_0m} ≠ {expected} for two poles"))

    if len(set(roles)) != len(net.buses):
        out.append(Violation("network", "duplicate bus ids"))
    slack = [b for b, r in roles.items() if r == "slack"]
    if len(slack) != 1:
        out.append(Violation("network", f"exactly one slack bus required, found {len(slack)}"))
    for ln in net.lines:
        el = f"line {ln.from_bus}-{ln.to_bus}"
        if not ln.x_pu > 0:
            out.append(Violation(el, f"reactance must be > 0, got {ln.x_pu}"))
        if ln.from_bus == ln.to_bus:
            out.append(Violation(el, "line connects a bus to itself"))
        for b in (ln.from_bus, ln.to_bus):
            if b not in roles:
                out.append(Violation(el, f"undeclared bus {b}"))
    if not _is_connected(net):
        out.append(Violation("network", "network not connected"))

    for bid, mw in net.loads.items():
        if bid not in roles:
            out.append(Violation(f"load {bid}", "undeclared bus"))
        elif roles[bid] == "generator":
            out.append(Violation(f"load {bid}", "load placed on a generator bus"))
        if not math.isfinite(mw):
            out.append(Violation(f"load {bid}", f"load must be finite, got {mw}"))

    if net.attack_bus is not None:
        el = f"attack bus {net.attack_bus}"
        if roles.get(net.attack_bus) not in ("load", "slack"):
            out.append(Violation(el, "attack bus must have role load or slack"))
        if net.attack_bus not in net.loads:
            out.append(Violation(el, "attack bus has no load entry"))

    hosted: dict[str, list[str]] = {}
    gen_ids = [g.id for g in model.generators]
    if len(set(gen_ids)) != len(gen_ids):
        out.append(Violation("generators", "duplicate generator ids"))
    for g in model.generators:
        el = f"generator {g.id}"
        if roles.get(g.bus) != "generator":
            out.append(Violation(el, f"bus {g.bus} is not a generator-role bus"))
        if not g.dispatch_mw >= 0:
            out.append(Violation(el, f"dispatch_mw must be >= 0, got {g.dispatch_mw}"))
        hosted.setdefault(g.bus, []).append(g.id)
        out.extend(_check_shaft(g.id, g.shaft))
    for bid, role in roles.items():
        if role == "generator" and len(hosted.get(bid, [])) != 1:
            out.append(
                Violation(f"bus {bid}", f"generator bus must host exactly one generator, hosts {len(hosted.get(bid, []))}")
            )
    if not model.generators:
        out.append(Violation("generators", "no generators declared"))

    a = model.attack
    if a is not None:
        el = "attack"
        if a.bus != net.attack_bus:
            out.append(Violation(el, f"attack bus {a.bus} disagrees with network attack bus {net.attack_bus}"))
        if not a.amplitude >= 0:
            out.append(Violation(el, f"amplitude must be >= 0, got {a.amplitude}"))
        if a.waveform not in WAVEFORMS:
            out.append(Violation(el, f"unknown waveform {a.waveform!r}"))
        if a.waveform in ("square", "sine") and not (a.frequency_hz is not None and a.frequency_hz > 0):
            out.append(Violation(el, "periodic waveform needs frequency_hz > 0"))
        if not 0 < a.duty < 1:
            out.append(Violation(el, f"duty must lie in (0, 1), got {a.duty}"))
        if not a.start_s >= 0:
            out.append(Violation(el, f"start_s must be >= 0, got {a.start_s}"))
    return out
