"""DC-linearized electrical coupling between generator rotors and loads.

With lossless lines, flat voltages and small angles the injection at every
bus is ``P = B theta`` where ``B`` is the bus susceptance Laplacian. Fixing
the slack angle at zero and eliminating the remaining load buses leaves

    P_e = A_e theta_g + B_e L

with ``theta_g`` the generator terminal angles and ``L`` the bus loads
(positive = consumption). Everything is per unit on the system base.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg

from .model import NetworkModel, SystemModel


class SingularNetworkError(np.linalg.LinAlgError):
    def __init__(self, message, buses=()):
        super().__init__(message)
        self.buses = tuple(buses)


@dataclass(frozen=True)
class SusceptanceMatrix:
    bus_ids: tuple[str, ...]
    matrix: np.ndarray

    def index(self, bus_id: str) -> int:
        return self.bus_ids.index(bus_id)


@dataclass(frozen=True)
class ReducedCoupling:
    """Kron-reduced map from terminal angles and loads to generator power.

    Attributes
    ----------
    generator_buses : tuple of str
        Terminal bus of each generator, in generator order.
    load_buses : tuple of str
        Columns of ``B_e`` (load and slack buses, declaration order).
    terminal : ndarray, shape (n, n)
        ``A_e`` restricted to the terminal-angle coordinates.
    B_e : ndarray, shape (n, n_load)
    interior_buses : tuple of str
        Eliminated (non-slack load) buses.
    interior_from_terminal, interior_from_load : ndarray
        Recover eliminated angles: ``theta_l = G theta_g + H L``.
    slack_bus : str
    """

    generator_buses: tuple[str, ...]
    load_buses: tuple[str, ...]
    terminal: np.ndarray
    B_e: np.ndarray
    interior_buses: tuple[str, ...]
    interior_from_terminal: np.ndarray
    interior_from_load: np.ndarray
    slack_bus: str

    @property
    def n(self) -> int:
        return len(self.generator_buses)

    @property
    def A_e(self) -> np.ndarray:
        """``n x 5n`` map on the stacked angle vector; shaft columns are zero."""
        return np.hstack([self.terminal, np.zeros((self.n, 4 * self.n))])

    def electrical_power(self, theta_g, loads) -> np.ndarray:
        return self.terminal @ np.asarray(theta_g) + self.B_e @ np.asarray(loads)


def build_susceptance(network: NetworkModel) -> SusceptanceMatrix:
    """Bus susceptance Laplacian: ``-1/x`` off-diagonal, row sums zero.

    Parallel lines add.

    >>> from ssrscan.model import Bus, Line, NetworkModel
    >>> net = NetworkModel((Bus("a", "generator"), Bus("b", "slack")),
    ...                    (Line("a", "b", 0.5),), {})
    >>> build_susceptance(net).matrix
    array([[ 2., -2.],
           [-2.,  2.]])
    """
    ids = tuple(network.bus_ids)
    pos = {b: i for i, b in enumerate(ids)}
    B = np.zeros((len(ids), len(ids)))
    for ln in network.lines:
        i, j = pos[ln.from_bus], pos[ln.to_bus]
        y = 1.0 / ln.x_pu
        B[i, i] += y
        B[j, j] += y
        B[i, j] -= y
        B[j, i] -= y
    return SusceptanceMatrix(ids, B)


def eliminate(b: SusceptanceMatrix, drop: Sequence[str]) -> tuple[SusceptanceMatrix, np.ndarray]:
    """Kron-eliminate zero-injection buses ``drop``.

    Returns the reduced matrix over the kept buses and ``T = B_kd B_dd^-1``,
    so that ``P_keep = B_red theta_keep + T P_drop``.
    """
    drop_idx = [b.index(d) for d in drop]
    keep_idx = [i for i in range(len(b.bus_ids)) if i not in drop_idx]
    M = b.matrix
    B_kk = M[np.ix_(keep_idx, keep_idx)]
    B_kd = M[np.ix_(keep_idx, drop_idx)]
    B_dd = M[np.ix_(drop_idx, drop_idx)]
    if not drop_idx:
        return SusceptanceMatrix(tuple(b.bus_ids[i] for i in keep_idx), B_kk.copy()), np.zeros((len(keep_idx), 0))
    _check_invertible(B_dd, [b.bus_ids[i] for i in drop_idx])
    T = linalg.solve(B_dd, B_kd.T, assume_a="sym").T
    reduced = B_kk - T @ B_kd.T
    return SusceptanceMatrix(tuple(b.bus_ids[i] for i in keep_idx), reduced), T


def _check_invertible(M: np.ndarray, names: Sequence[str]) -> None:
    if M.size == 0:
        return
    _, s, vt = linalg.svd(M)
    small = s <= 1e-12 * max(s[0], 1e-300)
    if small.any():
        ns = vt[small]
        involved = [names[i] for i in np.flatnonzero(np.abs(ns).max(axis=0) > 1e-8)]
        raise SingularNetworkError(
            f"load-bus susceptance submatrix is singular; degenerate bus set {involved}",
            involved,
        )


def kron_reduce(
    b: SusceptanceMatrix,
    roles: Mapping[str, str],
    generator_buses: Sequence[str] | None = None,
) -> ReducedCoupling:
    """Eliminate all non-slack load buses with the slack angle pinned at 0.

    Partitioning the balance equations into generator buses ``g`` and
    non-slack load buses ``l``::

        [ P_g ]   [ B_gg  B_gl ] [ theta_g ]
        [-L_l ] = [ B_lg  B_ll ] [ theta_l ]

    gives ``A_e = B_gg - B_gl B_ll^-1 B_lg`` and ``B_e = -B_gl B_ll^-1``, so a
    load increase raises the power drawn from electrically close machines.
    Load at the slack bus is absorbed by the reference and gets a zero column.

    Parameters
    ----------
    b : SusceptanceMatrix
    roles : mapping of bus id to role
    generator_buses : sequence of str, optional
        Row order of the result; defaults to generator-role buses in matrix
        order.

    Raises
    ------
    SingularNetworkError
        If the load-bus block cannot be inverted (e.g. a load island with no
        path to a generator or the slack).
    """
    if generator_buses is None:
        generator_buses = [bid for bid in b.bus_ids if roles[bid] == "generator"]
    slack = [bid for bid in b.bus_ids if roles[bid] == "slack"]
    if len(slack) != 1:
        raise ValueError(f"exactly one slack bus required, found {len(slack)}")
    slack_bus = slack[0]
    load_buses = [bid for bid in b.bus_ids if roles[bid] in ("load", "slack")]
    interior = [bid for bid in load_buses if bid != slack_bus]

    gi = [b.index(g) for g in generator_buses]
    li = [b.index(l) for l in interior]
    M = b.matrix
    B_gg = M[np.ix_(gi, gi)]
    B_gl = M[np.ix_(gi, li)]
    B_ll = M[np.ix_(li, li)]

    n = len(gi)
    if li:
        _check_invertible(B_ll, interior)
        B_ll_inv = linalg.inv(B_ll)
        B_ll_inv = 0.5 * (B_ll_inv + B_ll_inv.T)
        terminal = B_gg - B_gl @ B_ll_inv @ B_gl.T
        be_interior = -B_gl @ B_ll_inv
        G = -B_ll_inv @ B_gl.T
        H_int = -B_ll_inv
    else:
        terminal = B_gg.copy()
        be_interior = np.zeros((n, 0))
        G = np.zeros((0, n))
        H_int = np.zeros((0, 0))

    col = {bid: k for k, bid in enumerate(load_buses)}
    B_e = np.zeros((n, len(load_buses)))
    H = np.zeros((len(interior), len(load_buses)))
    for k, bid in enumerate(interior):
        B_e[:, col[bid]] = be_interior[:, k]
        H[:, col[bid]] = H_int[:, k]

    return ReducedCoupling(
        generator_buses=tuple(generator_buses),
        load_buses=tuple(load_buses),
        terminal=terminal,
        B_e=B_e,
        interior_buses=tuple(interior),
        interior_from_terminal=G,
        interior_from_load=H,
        slack_bus=slack_bus,
    )


def couple(model: SystemModel) -> ReducedCoupling:
    """Susceptance build plus Kron reduction for a whole system model."""
    net = model.network
    b = build_susceptance(net)
    roles = {bus.id: bus.role for bus in net.buses}
    return kron_reduce(b, roles, [g.bus for g in model.generators])


def steady_state_angles(
    coupling: ReducedCoupling, dispatch, loads
) -> dict[str, float]:
    """Bus angles (radians, slack = 0) for generator outputs ``dispatch`` and
    loads ``loads``, both per unit.

    Any mismatch between total generation and total load is taken up at the
    slack bus.
    """
    dispatch = np.asarray(dispatch, dtype=float)
    loads = np.asarray(loads, dtype=float)
    if coupling.n:
        theta_g = linalg.solve(coupling.terminal, dispatch - coupling.B_e @ loads, assume_a="sym")
    else:
        theta_g = np.zeros(0)
    theta_l = coupling.interior_from_terminal @ theta_g + coupling.interior_from_load @ loads
    angles = {coupling.slack_bus: 0.0}
    angles.update(zip(coupling.generator_buses, theta_g.tolist()))
    angles.update(zip(coupling.interior_buses, theta_l.tolist()))
    return angles


def line_flows(network: NetworkModel, angles: Mapping[str, float]) -> list[float]:
    """Active power on each line, from-bus to to-bus, per unit."""
    return [(angles[ln.from_bus] - angles[ln.to_bus]) / ln.x_pu for ln in network.lines]
