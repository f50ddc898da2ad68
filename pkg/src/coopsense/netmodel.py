"""System parameters and the computing / communication / topology relations.

Node indexing: CAVs are 0..N-1 and the RSU is node N. Matrices follow the
shapes used throughout the package:

* ``s``   (N, M)    data selection, CAV n contributes its data for object m
* ``e``   (N+1, M)  subtask placement, object m is processed at node n
* ``chi`` (N, N+1)  link activation, CAV n sends data to node n'
* ``beta`` (N, N+1) bandwidth fractions, ``alpha`` (N+1,) compute fractions
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .quality import fuse_indicators
from .scene import Scenario


@dataclass(frozen=True)
class SystemParams:
    B: float = 2.0e7
    sigma2: float = 1e-13
    P_n: float = 1.0
    gamma: float = 3.4
    h2: float = 1.0
    f_n: dict = field(default_factory=lambda: {"cav": 1e10, "rsu": 2e11})
    phi: float = 192.0
    epsilon: float = 30000.0
    omega: float = 0.5
    T: float = 0.02
    A: float = 0.9

    def __post_init__(self):
        for name in ("B", "sigma2", "P_n", "gamma", "h2", "phi", "epsilon", "T"):
            if np.any(np.asarray(getattr(self, name), dtype=float) <= 0):
                raise ValueError(f"system parameter {name} must be positive")
        if not 0 < self.omega < 1:
            raise ValueError("omega must lie in (0, 1)")
        if not 0 <= self.A < 1:
            raise ValueError("accuracy requirement A must lie in [0, 1)")

    @classmethod
    def from_dict(cls, doc: dict) -> "SystemParams":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown system parameter(s): {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    def node_frequencies(self, n_cavs: int) -> np.ndarray:
        """Available cycles/s of nodes 0..N (RSU last)."""
        f = self.f_n
        if isinstance(f, dict):
            return np.array([float(f["cav"])] * n_cavs + [float(f["rsu"])])
        f = np.asarray(f, dtype=float).reshape(-1)
        if f.size != n_cavs + 1:
            raise ValueError(f"f_n needs {n_cavs + 1} entries, got {f.size}")
        return f

    def tx_power(self, n: int) -> float:
        return float(np.asarray(self.P_n, dtype=float).reshape(-1)[n] if np.ndim(self.P_n) else self.P_n)

    def gain(self, n: int, n_to: int) -> float:
        return float(np.asarray(self.h2, dtype=float)[n, n_to] if np.ndim(self.h2) else self.h2)


class InvalidAllocation(ValueError):
    """Demand or traffic assigned to a node or link with a zero resource share."""


@dataclass(frozen=True)
class Assignment:
    s: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.int8)
        e = np.asarray(self.e, dtype=np.int8)
        if s.ndim != 2 or e.ndim != 2 or e.shape != (s.shape[0] + 1, s.shape[1]):
            raise ValueError(f"s must be (N, M) and e (N+1, M); got {s.shape} and {e.shape}")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "e", e)

    @property
    def n_cavs(self) -> int:
        return self.s.shape[0]

    @property
    def n_objects(self) -> int:
        return self.s.shape[1]

    @property
    def chi(self) -> np.ndarray:
        return derive_chi(self.s, self.e)

    @classmethod
    def from_genes(cls, genes, n_cavs: int) -> "Assignment":
        """Build from per-object ``(selection_bits, placement_node)`` pairs."""
        M = len(genes)
        s = np.zeros((n_cavs, M), dtype=np.int8)
        e = np.zeros((n_cavs + 1, M), dtype=np.int8)
        for m, (bits, node) in enumerate(genes):
            s[:, m] = bits
            e[node, m] = 1
        return cls(s, e)

    def placement(self) -> np.ndarray:
        """Node index of each subtask (-1 if unplaced)."""
        return np.where(self.e.any(axis=0), self.e.argmax(axis=0), -1)


# ---------------------------------------------------------------------------
# computing

def computing_demands(assignment: Assignment, point_counts, params: SystemParams):
    """Cycles per subtask and cycles per node."""
    counts = np.asarray(point_counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("point counts must be non-negative")
    mu_m = params.epsilon * (assignment.s * counts).sum(axis=0)
    mu_n = assignment.e @ mu_m
    return mu_m, mu_n


def computing_time(mu_n: float, alpha_n: float, f_n: float) -> float:
    if not 0 <= alpha_n <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    if alpha_n == 0:
        if mu_n > 0:
            raise InvalidAllocation("node carries computing demand but has no compute share")
        return 0.0
    return mu_n / (alpha_n * f_n)


# ---------------------------------------------------------------------------
# communication

def link_loads(assignment: Assignment, point_counts, params: SystemParams) -> np.ndarray:
    """Bits sent over every (CAV, node) pair, zero on the diagonal."""
    counts = np.asarray(point_counts, dtype=float)
    rho = params.phi * (assignment.s * counts) @ assignment.e.T
    N = assignment.n_cavs
    rho[np.arange(N), np.arange(N)] = 0.0
    return rho


def link_load(assignment: Assignment, point_counts, params: SystemParams, n: int, n_to: int) -> float:
    if n == n_to:
        raise ValueError("a link needs two distinct endpoints")
    return float(link_loads(assignment, point_counts, params)[n, n_to])


def node_distances(scenario: Scenario) -> np.ndarray:
    """(N, N+1) distances from each CAV to every node, from body centers and the RSU."""
    pos = np.array([c.body_box.center for c in scenario.cavs] + [scenario.rsu_position])
    return np.linalg.norm(pos[:scenario.n_cavs, None, :] - pos[None, :, :], axis=-1)


def spectral_efficiency(params: SystemParams, distance: float, n: int = 0, n_to: int = 0) -> float:
    """log2(1 + SNR) of the link, bits/s/Hz."""
    if distance <= 0:
        raise ValueError("link distance must be positive")
    snr = params.tx_power(n) * params.gain(n, n_to) * distance ** (-params.gamma) / params.sigma2
    return float(np.log2(1.0 + snr))


def transmission_rate(beta: float, params: SystemParams, distance: float, n: int = 0, n_to: int = 0) -> float:
    if not 0 <= beta <= 1:
        raise ValueError("beta must lie in [0, 1]")
    return beta * params.B * spectral_efficiency(params, distance, n, n_to)


def transmission_time(rho: float, rate: float) -> float:
    if rho < 0:
        raise ValueError("data size must be non-negative")
    if rate <= 0:
        if rho > 0:
            raise InvalidAllocation("link carries data but has no bandwidth share")
        return 0.0
    return rho / rate


# ---------------------------------------------------------------------------
# topology

def derive_chi(s, e) -> np.ndarray:
    s = np.asarray(s)
    e = np.asarray(e)
    chi = ((s @ e.T) >= 1).astype(np.int8)
    N = s.shape[0]
    chi[np.arange(N), np.arange(N)] = 0
    return chi


@dataclass(frozen=True)
class Violation:
    constraint: str
    where: tuple
    detail: str

    def __str__(self):
        return f"{self.constraint} at {self.where}: {self.detail}"


def validate_topology(assignment: Assignment) -> list[Violation]:
    """Single placement per subtask and the half-duplex rule for every CAV."""
    out = []
    for m, total in enumerate(assignment.e.sum(axis=0)):
        if total != 1:
            out.append(Violation("placement", (m,), f"subtask placed on {int(total)} nodes"))
    chi = assignment.chi
    N = assignment.n_cavs
    for n in range(N):
        links = int(chi[n].sum() + chi[:, n].sum())
        if links > 1:
            out.append(Violation("half-duplex", (n,), f"CAV takes part in {links} links"))
    return out


def check_accuracy(assignment: Assignment, indicators, boxes, model, A: float):
    """Estimated accuracy of every subtask and whether it meets ``A``.

    ``indicators[n][m]`` is CAV n's indicator for object m.
    """
    from .accuracy import predict_accuracy

    out = []
    for m, box in enumerate(boxes):
        column = [indicators[n][m] for n in range(assignment.n_cavs)]
        a_hat = predict_accuracy(model, fuse_indicators(assignment.s[:, m], column), box)
        out.append((a_hat, a_hat >= A))
    return out


# ---------------------------------------------------------------------------
# objective

def total_cost(alpha, beta, params: SystemParams, f=None) -> float:
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if np.any(alpha < 0) or np.any(alpha > 1) or np.any(beta < 0) or np.any(beta > 1):
        raise ValueError("resource fractions must lie in [0, 1]")
    f = params.node_frequencies(alpha.size - 1) if f is None else np.asarray(f, dtype=float)
    return float(params.omega * beta.sum() + (1 - params.omega) * (alpha * f).sum() / f.sum())


def cost_split(alpha, beta, params: SystemParams, f=None) -> tuple[float, float]:
    """(total bandwidth fraction, weighted compute fraction) before weighting by omega."""
    alpha = np.asarray(alpha, dtype=float)
    f = params.node_frequencies(alpha.size - 1) if f is None else np.asarray(f, dtype=float)
    return float(np.sum(beta)), float((alpha * f).sum() / f.sum())


# ---------------------------------------------------------------------------
# full re-check

def verify_solution(assignment: Assignment, alpha, beta, point_counts, distances,
                    params: SystemParams, accuracies=None, tol: float = 1e-8) -> list[Violation]:
    """Re-check a complete solution against every P1 constraint.

    Covers single placement, the bandwidth budget, per-pair delay (each
    pair's transmit time plus the receiver's compute time within T),
    link activation, half-duplex and, when ``accuracies`` are given, the
    accuracy requirement. ``beta`` is the (N, N+1) fraction matrix.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    N = assignment.n_cavs
    out = validate_topology(assignment)
    if np.any(alpha < -tol) or np.any(alpha > 1 + tol) or np.any(beta < -tol) or np.any(beta > 1 + tol):
        out.append(Violation("range", (), "resource fraction outside [0, 1]"))
    if beta.sum() > 1 + tol:
        out.append(Violation("bandwidth", (), f"sum of beta is {beta.sum():.12g}"))
    if np.any(np.diag(beta[:, :N]) != 0):
        out.append(Violation("range", (), "beta on the diagonal must be zero"))

    chi = assignment.chi
    sm = assignment.s.astype(int) @ assignment.e.T.astype(int)
    M = assignment.n_objects
    for n in range(N):
        for n_to in range(N + 1):
            if n != n_to and not (sm[n, n_to] / M <= chi[n, n_to] <= sm[n, n_to]):
                out.append(Violation("link-activation", (n, n_to), "chi outside its bounds"))

    f = params.node_frequencies(N)
    _, mu_n = computing_demands(assignment, point_counts, params)
    rho = link_loads(assignment, point_counts, params)
    d = np.asarray(distances, dtype=float)
    t_node = np.zeros(N + 1)
    for n in range(N + 1):
        try:
            t_node[n] = computing_time(mu_n[n], min(max(alpha[n], 0.0), 1.0), f[n])
        except InvalidAllocation as exc:
            out.append(Violation("delay", (n,), str(exc)))
            t_node[n] = np.inf
    for n_to in range(N + 1):
        worst = 0.0
        for n in range(N):
            if n == n_to or rho[n, n_to] == 0:
                continue
            rate = transmission_rate(min(max(beta[n, n_to], 0.0), 1.0), params, d[n, n_to], n, n_to)
            try:
                worst = max(worst, transmission_time(rho[n, n_to], rate))
            except InvalidAllocation as exc:
                out.append(Violation("delay", (n, n_to), str(exc)))
                worst = np.inf
        if worst + t_node[n_to] > params.T + tol:
            out.append(Violation("delay", (n_to,),
                                 f"delay {worst + t_node[n_to]:.12g} s exceeds T={params.T}"))
    if accuracies is not None:
        for m, a in enumerate(accuracies):
            if a < params.A:
                out.append(Violation("accuracy", (m,), f"estimated accuracy {a:.4f} below A={params.A}"))
    return out
