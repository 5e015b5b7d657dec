"""Linear electromechanical model of generators with multi-mass shafts.

State ordering follows the usual stacking for multi-machine shaft models:
all terminal (generator-mass) speeds first, then every generator's shaft
speeds, then the angles in the same pattern::

    x = [w_G1_g .. w_Gn_g, w_G1_s1 .. w_G1_s4, .., w_Gn_s4,
         th_G1_g .. th_Gn_g, th_G1_s1 .. th_Gn_s4]

All states are deviations from the operating point, so the operating point
is ``x = 0``. Speeds are in electrical rad/s, angles in electrical radians.

Each shaft is a chain: mass ``j`` is tied to mass ``j + 1`` by stiffness
``K[j]``. The accelerating torque on mass ``i`` is

    K[i-1] (th[i-1] - th[i]) + K[i] (th[i+1] - th[i]) - D[i] w[i] + P[i]

where ``P`` is ``-P_e`` on the generator mass and the turbine power on the
others, and ``dw[i]/dt = omega_0m / (2 H[i]) * torque``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .model import MASSES, GeneratorModel, SystemModel, rated_mechanical_speed
from .network import ReducedCoupling

LIGHT_DAMPING = 0.05


class StateIndexMap:
    """Bijection between ``(generator, mass, kind)`` and state position.

    ``kind`` is ``"speed"`` or ``"angle"``. Works for any number of masses
    per shaft, the first mass being the generator.
    """

    def __init__(self, generator_ids: Sequence[str], masses: Sequence[str] = MASSES):
        self.generator_ids = tuple(generator_ids)
        self.masses = tuple(masses)
        self.n = len(self.generator_ids)
        self.m = len(self.masses)
        self._gpos = {g: i for i, g in enumerate(self.generator_ids)}
        ids = []
        for kind, prefix in (("speed", "w"), ("angle", "th")):
            ids += [f"{prefix}_{g}_{self.masses[0]}" for g in self.generator_ids]
            ids += [
                f"{prefix}_{g}_{mass}" for g in self.generator_ids for mass in self.masses[1:]
            ]
        self.ids = tuple(ids)

    @property
    def size(self) -> int:
        return 2 * self.n * self.m

    def index(self, generator: str, mass: str, kind: str) -> int:
        i = self._gpos[generator]
        j = self.masses.index(mass)
        if kind == "speed":
            offset = 0
        elif kind == "angle":
            offset = self.n * self.m
        else:
            raise ValueError(f"kind must be 'speed' or 'angle', got {kind!r}")
        if j == 0:
            return offset + i
        return offset + self.n + (self.m - 1) * i + (j - 1)

    def key(self, index: int) -> tuple[str, str, str]:
        """Inverse of :meth:`index`."""
        half = self.n * self.m
        if not 0 <= index < 2 * half:
            raise IndexError(index)
        kind = "speed" if index < half else "angle"
        r = index % half
        if r < self.n:
            return self.generator_ids[r], self.masses[0], kind
        r -= self.n
        return self.generator_ids[r // (self.m - 1)], self.masses[1 + r % (self.m - 1)], kind

    def generator_of(self, index: int) -> str:
        return self.key(index)[0]

    def mass_order(self, generator: str) -> list[int]:
        """Within-speed-block indices of one generator's masses, shaft order."""
        return [self.index(generator, mass, "speed") for mass in self.masses]


@dataclass(frozen=True)
class StateSpaceSystem:
    """``x' = A x + B u``, ``y1 = C1 x + D1 u``, ``y2 = C2 x + D2 u``.

    ``u`` holds load deviations at :attr:`input_ids` (per unit).
    ``y1`` is the full state; ``y2`` the adjacent-mass speed differences of
    every generator followed by the angle differences.
    """

    A: np.ndarray
    B: np.ndarray
    C1: np.ndarray
    D1: np.ndarray
    C2: np.ndarray
    D2: np.ndarray
    states: StateIndexMap
    input_ids: tuple[str, ...]
    y2_ids: tuple[str, ...]
    omega_0m: float
    inertias: np.ndarray = field(repr=False)

    @property
    def y1_ids(self) -> tuple[str, ...]:
        return self.states.ids

    @property
    def generator_ids(self) -> tuple[str, ...]:
        return self.states.generator_ids

    def input_column(self, bus: str) -> np.ndarray:
        return self.B[:, self.input_ids.index(bus)].copy()

    def terminal_pairing(self) -> tuple[int, ...]:
        """For each ``y2`` row, the state index of the same generator's
        terminal speed (speed differences) or terminal angle (angle
        differences)."""
        pairs = []
        for row in self.C2:
            gen, _, kind = self.states.key(int(np.flatnonzero(row > 0)[0]))
            pairs.append(self.states.index(gen, self.states.masses[0], kind))
        return tuple(pairs)


def build_input_map(generators: Sequence[GeneratorModel]) -> np.ndarray:
    """Stack an identity over the block-diagonal power-fraction matrix.

    Column ``i`` distributes generator ``i``'s mechanical power: 1 on its
    terminal row, and its turbine fractions on its four shaft rows.

    Returns
    -------
    ndarray, shape (5n, n)
    """
    n = len(generators)
    B_F = linalg.block_diag(
        *[np.reshape(g.shaft.power_fractions, (-1, 1)) for g in generators]
    ) if n else np.zeros((0, 0))
    return np.vstack([np.eye(n), B_F.reshape(4 * n, n)])


def _chain_stiffness(k: Sequence[float]) -> np.ndarray:
    m = len(k) + 1
    K = np.zeros((m, m))
    for j, kj in enumerate(k):
        K[j, j] += kj
        K[j + 1, j + 1] += kj
        K[j, j + 1] -= kj
        K[j + 1, j] -= kj
    return K


def _stacked_shaft_matrices(shafts, states: StateIndexMap):
    """Inertia, damping and stiffness over the stacked speed (or angle) block."""
    size = states.n * states.m
    H = np.zeros(size)
    D = np.zeros(size)
    K = np.zeros((size, size))
    for g, (h, d, k) in zip(states.generator_ids, shafts):
        idx = states.mass_order(g)
        H[idx] = h
        D[idx] = d
        K[np.ix_(idx, idx)] += _chain_stiffness(k)
    return H, D, K


def _build(states, shafts, omega_0m, electrical, input_torque, input_ids, turbine_routing=None):
    size = states.n * states.m
    H, D, K = _stacked_shaft_matrices(shafts, states)
    scale = omega_0m / (2.0 * H)
    A11 = -np.diag(scale * D)
    A12 = -scale[:, None] * K
    if electrical is not None:
        A12 = A12 + scale[:, None] * (turbine_routing @ electrical)
    A = np.block([[A11, A12], [np.eye(size), np.zeros((size, size))]])
    B = np.vstack([scale[:, None] * input_torque, np.zeros((size, input_torque.shape[1]))])
    C1, D1, C2, D2, y2_ids = _outputs(states, B.shape[1])
    return StateSpaceSystem(A, B, C1, D1, C2, D2, states, tuple(input_ids), y2_ids, omega_0m, H)


def torque_routing(model: SystemModel, turbine_power: str = "constant") -> np.ndarray:
    """How a generator electrical-power deviation loads each shaft mass.

    ``"constant"`` keeps mechanical power fixed, so ``dP_e`` only brakes the
    generator mass. ``"tracking"`` lets each turbine section's power follow
    ``dP_e`` in proportion to its power fraction (mechanical power equal to
    electrical power at every instant).
    """
    n = model.n
    B_I = build_input_map(model.generators)
    if turbine_power == "constant":
        return np.vstack([-np.eye(n), np.zeros((4 * n, n))])
    if turbine_power == "tracking":
        routed = B_I.copy()
        routed[:n] *= -1.0
        return routed
    raise ValueError(f"turbine_power must be 'constant' or 'tracking', got {turbine_power!r}")


def assemble(
    model: SystemModel, coupling: ReducedCoupling, turbine_power: str = "constant"
) -> StateSpaceSystem:
    """Full ``10n``-state system driven by load deviations at every load bus.

    ``A11`` holds ``-omega_0m D / 2H`` on the diagonal, ``A12`` the scaled
    shaft stiffness chains plus the electrical coupling ``A_e`` routed through
    :func:`torque_routing`, ``A21 = I`` and ``A22 = 0``. The input matrix is
    the same routing applied to ``B_e``.
    """
    n = model.n
    if coupling.n != n or coupling.B_e.shape[0] != n:
        raise ValueError(f"coupling has {coupling.n} generators, model has {n}")
    states = StateIndexMap(model.generator_ids)
    routing = torque_routing(model, turbine_power)
    shafts = [(g.shaft.inertias, g.shaft.dampings, g.shaft.stiffnesses) for g in model.generators]
    return _build(
        states,
        shafts,
        model.omega_0m,
        coupling.A_e,
        routing @ coupling.B_e,
        coupling.load_buses,
        turbine_routing=routing,
    )


def chain_system(
    inertias: Sequence[float],
    dampings: Sequence[float],
    stiffnesses: Sequence[float],
    omega_0m: float | None = None,
    generator_id: str = "G",
) -> StateSpaceSystem:
    """A single shaft with no network, driven by electrical power on mass 0.

    The input ``"P_e"`` brakes the first (generator) mass. Useful for
    checking torsional frequencies against closed forms.
    """
    if omega_0m is None:
        omega_0m = rated_mechanical_speed(60.0)
    m = len(inertias)
    if len(dampings) != m or len(stiffnesses) != m - 1:
        raise ValueError("need len(dampings) == len(inertias) == len(stiffnesses) + 1")
    masses = MASSES[:m] if m <= len(MASSES) else ("g",) + tuple(f"s{j}" for j in range(1, m))
    states = StateIndexMap([generator_id], masses)
    torque = np.zeros((m, 1))
    torque[0, 0] = -1.0
    return _build(states, [(inertias, dampings, stiffnesses)], omega_0m, None, torque, ("P_e",))


def _outputs(states: StateIndexMap, n_inputs: int):
    size = states.size
    C1 = np.eye(size)
    D1 = np.zeros((size, n_inputs))
    rows = []
    ids = []
    for kind, prefix in (("speed", "dw"), ("angle", "dth")):
        for g in states.generator_ids:
            for a, b in zip(states.masses[:-1], states.masses[1:]):
                row = np.zeros(size)
                row[states.index(g, a, kind)] = 1.0
                row[states.index(g, b, kind)] = -1.0
                rows.append(row)
                ids.append(f"{prefix}_{g}_{a}-{b}")
    C2 = np.array(rows).reshape(len(rows), size)
    D2 = np.zeros((len(rows), n_inputs))
    return C1, D1, C2, D2, tuple(ids)


def assemble_outputs(states: StateIndexMap, n_inputs: int = 1):
    """Output matrices ``(C1, D1, C2, D2)``.

    ``C1`` is the identity (terminal and shaft states); ``C2`` has one
    ``+1/-1`` pair per adjacent-mass difference, speed differences of every
    generator before angle differences. Both ``D`` are zero.
    """
    C1, D1, C2, D2, _ = _outputs(states, n_inputs)
    return C1, D1, C2, D2


def steady_state_mass_angles(model: SystemModel, terminal_angles: Sequence[float]) -> np.ndarray:
    """Stacked ``5n`` angle vector at the operating point.

    Each shaft carries the power of the turbines beyond it, so the twist of
    shaft ``j`` is ``P_M * sum(bf[j:]) / K[j]`` with the turbine end leading.
    """
    states = StateIndexMap(model.generator_ids)
    theta = np.zeros(model.n * 5)
    p_m = model.dispatch_pu()
    for i, g in enumerate(model.generators):
        idx = states.mass_order(g.id)
        bf = np.asarray(g.shaft.power_fractions)
        carried = p_m[i] * bf[::-1].cumsum()[::-1]
        theta[idx] = terminal_angles[i] + np.concatenate([[0.0], np.cumsum(carried / g.shaft.stiffnesses)])
    return theta


def mass_torques(model: SystemModel, theta: np.ndarray, p_mech: np.ndarray, p_elec: np.ndarray) -> np.ndarray:
    """Net accelerating torque on every mass (stacked order) at zero speed."""
    states = StateIndexMap(model.generator_ids)
    shafts = [(g.shaft.inertias, g.shaft.dampings, g.shaft.stiffnesses) for g in model.generators]
    _, _, K = _stacked_shaft_matrices(shafts, states)
    n = model.n
    inputs = build_input_map(model.generators) @ p_mech
    inputs[:n] = -np.asarray(p_elec)
    return -K @ theta + inputs


# ---------------------------------------------------------------------------
# modes


@dataclass(frozen=True)
class Mode:
    """One eigenvalue (conjugate pairs reported once, ``Im >= 0``).

    ``damping_ratio`` is ``-Re / |lambda|`` and NaN for a zero eigenvalue.
    ``kind`` is ``"torsional"`` when the dominant shaft twists against
    itself, ``"electromechanical"`` when it swings as a rigid body, and
    ``"aperiodic"`` for real eigenvalues.
    """

    id: int
    eigenvalue: complex
    frequency_hz: float
    damping_ratio: float
    participation: tuple[str, ...]
    generator: str
    kind: str
    column: int = field(repr=False, default=-1)


@dataclass(frozen=True)
class ModeSet:
    modes: tuple[Mode, ...]
    eigenvalues: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter(self.modes)

    def __len__(self):
        return len(self.modes)

    def lightly_damped(self, threshold: float = LIGHT_DAMPING) -> list[Mode]:
        return [
            m for m in self.modes
            if m.kind != "aperiodic" and m.damping_ratio < threshold
        ]

    def residues(self, C: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Largest ``|C v w^H b| / (w^H v)`` over output rows, per mode."""
        out = np.empty(len(self.modes))
        for k, m in enumerate(self.modes):
            v = self.right[:, m.column]
            w = self.left[:, m.column]
            r = (C @ v) * (w.conj() @ b) / (w.conj() @ v)
            out[k] = np.abs(r).max() if r.size else 0.0
        return out


def eig_modes(system: StateSpaceSystem, imag_tol: float = 1e-9) -> ModeSet:
    """Eigen-decomposition of ``A`` grouped into modes.

    Participation lists the three states with the largest right-eigenvector
    entries.

    Raises
    ------
    numpy.linalg.LinAlgError
        If the eigenvalue iteration fails to converge.
    """
    A = system.A
    if not np.all(np.isfinite(A)):
        raise np.linalg.LinAlgError("system matrix contains non-finite entries")
    lam, vl, vr = linalg.eig(A, left=True, right=True)
    scale = max(np.abs(lam).max(), 1.0) if lam.size else 1.0
    tol = imag_tol * scale
    states = system.states
    half = states.n * states.m
    H = system.inertias

    order = np.lexsort((lam.real, np.abs(lam.imag)))
    modes = []
    for col in order:
        ev = lam[col]
        if ev.imag < -tol:
            continue
        oscillatory = ev.imag > tol
        ev_out = complex(ev.real, ev.imag) if oscillatory else complex(ev.real, 0.0)
        mag = abs(ev_out)
        zeta = -ev_out.real / mag if mag > 0 else float("nan")
        v = vr[:, col]
        top = np.argsort(-np.abs(v), kind="stable")[:3]
        speed = v[:half]
        energy = {g: float(np.sum(H[idx] * np.abs(speed[idx]) ** 2))
                  for g in states.generator_ids
                  for idx in [states.mass_order(g)]}
        gen = max(energy, key=energy.get)
        if not oscillatory:
            kind = "aperiodic"
        else:
            idx = states.mass_order(gen)
            h = H[idx]
            s = speed[idx]
            total = h.sum() * np.sum(h * np.abs(s) ** 2)
            coherence = abs(np.sum(h * s)) ** 2 / total if total > 0 else 1.0
            kind = "electromechanical" if coherence >= 0.5 else "torsional"
        modes.append(
            Mode(
                id=len(modes),
                eigenvalue=ev_out,
                frequency_hz=abs(ev_out.imag) / (2 * np.pi),
                damping_ratio=zeta,
                participation=tuple(states.ids[i] for i in top),
                generator=gen,
                kind=kind,
                column=int(col),
            )
        )
    return ModeSet(tuple(modes), lam, vr, vl)

