"""Gradient formation control with mismatched target distances.

Each agent ``i`` steers by the squared-distance errors of its incident edges.
On an edge ``k`` the head agent uses the target ``d_k`` while the tail agent
uses ``sqrt(d_k**2 - mu_k)``, so ``mu_k`` is the disagreement in squared
target distance.  The closed loop in stacked form is

    xdot = -R(z)' e(z) + S(z)' mu,     z = (H kron I2) x,

with ``R`` the rigidity matrix and ``S`` the tail-block selector of ``z``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import DOP853, RK45

from .graph import (
    FormationGraph,
    as_multipoint,
    edge_vectors,
    incidence_transpose,
    neighbor_split,
    tail_selector,
)
from .rigidity import mismatch_matrix, rigidity_matrix

log = logging.getLogger(__name__)

_METHODS = {"RK45": RK45, "DOP853": DOP853}


class IntegrationError(RuntimeError):
    """Integration stopped early; ``record`` holds the samples produced so far."""

    def __init__(self, message: str, record: "TrajectoryRecord"):
        super().__init__(message)
        self.record = record


# ---------------------------------------------------------------------------
# Scenario description
# ---------------------------------------------------------------------------


@dataclass
class IntegratorSettings:
    # looser settings leave an edot noise floor near the 1e-9 convergence threshold
    rtol: float = 1e-12
    atol: float = 1e-14
    max_step: float = np.inf
    method: str = "RK45"
    stride: float = 0.1  # output sample spacing


@dataclass
class Scenario:
    graph: FormationGraph
    target_distances: np.ndarray
    mismatch: np.ndarray
    initial_state: np.ndarray
    horizon: float
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)

    def __post_init__(self):
        g = self.graph
        self.target_distances = np.asarray(self.target_distances, dtype=float)
        self.mismatch = np.asarray(self.mismatch, dtype=float)
        self.initial_state = as_multipoint(g, self.initial_state).copy()
        if self.target_distances.shape != (g.m,):
            raise ValueError(f"expected {g.m} target distances")
        if self.mismatch.shape != (g.m,):
            raise ValueError(f"expected {g.m} mismatch values")
        if np.any(self.target_distances <= 0):
            raise ValueError("target distances must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")


# ---------------------------------------------------------------------------
# Right-hand sides
# ---------------------------------------------------------------------------


def edge_errors(g: FormationGraph, d, x) -> np.ndarray:
    """Squared edge lengths minus squared targets."""
    z = edge_vectors(g, x)
    return np.einsum("kc,kc->k", z, z) - np.asarray(d, dtype=float) ** 2


def mismatch_from_distance_pairs(g: FormationGraph, d_head, d_tail) -> np.ndarray:
    """Mismatch ``d_head**2 - d_tail**2`` from each endpoint's understanding of an edge."""
    d_head = np.asarray(d_head, dtype=float)
    d_tail = np.asarray(d_tail, dtype=float)
    if d_head.shape != (g.m,) or d_tail.shape != (g.m,):
        raise ValueError(f"expected {g.m} distances per endpoint")
    if np.any(d_head <= 0) or np.any(d_tail <= 0):
        raise ValueError("distances must be positive")
    return d_head**2 - d_tail**2


def vector_field(g: FormationGraph, d, mu, x) -> np.ndarray:
    """Closed-loop velocities ``-R'e + S'mu`` as an ``(n, 2)`` array."""
    pts = as_multipoint(g, x)
    e = edge_errors(g, d, pts)
    R = rigidity_matrix(g, pts)
    S = mismatch_matrix(g, pts)
    return (-R.T @ e + S.T @ np.asarray(mu, dtype=float)).reshape(g.n, 2)


def vector_field_agentwise(g: FormationGraph, d, mu, x) -> np.ndarray:
    """Same field summed agent by agent over head-edges and tail-edges."""
    pts = as_multipoint(g, x)
    z = edge_vectors(g, pts)
    e = edge_errors(g, d, pts)
    mu = np.asarray(mu, dtype=float)
    out = np.zeros((g.n, 2))
    for i in range(g.n):
        heads, tails = neighbor_split(g, i)
        for k in heads:
            out[i] -= z[k] * e[k]
        for k in tails:
            out[i] += z[k] * (e[k] + mu[k])
    return out


def error_rhs(g: FormationGraph, d, mu, x) -> np.ndarray:
    """Time derivative of the edge errors, ``-2RR'e + 2RS'mu``."""
    pts = as_multipoint(g, x)
    e = edge_errors(g, d, pts)
    R = rigidity_matrix(g, pts)
    S = mismatch_matrix(g, pts)
    return -2.0 * R @ (R.T @ e) + 2.0 * R @ (S.T @ np.asarray(mu, dtype=float))


def m_matrix(g: FormationGraph, e, mu) -> np.ndarray:
    """``m x m`` matrix ``M`` with ``[zdot_1 ... zdot_m] = [z_1 ... z_m] M``.

    Entry ``(l, k)`` is ``-(HH')_{kl} e_l + (HJ')_{kl} mu_l``.
    """
    H = incidence_transpose(g)
    J = tail_selector(g)
    e = np.asarray(e, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return -e[:, None] * (H @ H.T).T + mu[:, None] * (H @ J.T).T


def potential(g: FormationGraph, d, x) -> float:
    """Sum of squared edge errors; at zero mismatch the field is ``-1/4`` of its gradient."""
    e = edge_errors(g, d, x)
    return float(e @ e)


class _FastField:
    """Allocation-light evaluation of the field for the integrator."""

    def __init__(self, g: FormationGraph, d, mu):
        self.n = g.n
        self.H = incidence_transpose(g)
        self.J = tail_selector(g)
        self.d2 = np.asarray(d, dtype=float) ** 2
        self.mu = np.asarray(mu, dtype=float)

    def __call__(self, t, y):
        X = y.reshape(self.n, 2)
        Z = self.H @ X
        e = np.einsum("kc,kc->k", Z, Z) - self.d2
        return (self.J.T @ (Z * self.mu[:, None]) - self.H.T @ (Z * e[:, None])).ravel()


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


@dataclass
class TrajectoryRecord:
    """Sampled solution of the closed loop.

    ``states`` and ``velocities`` have shape ``(N, n, 2)``; ``edge_errors`` and
    ``error_rates`` have shape ``(N, m)``.
    """

    graph: FormationGraph
    target_distances: np.ndarray
    mismatch: np.ndarray
    times: np.ndarray
    states: np.ndarray
    edge_errors: np.ndarray
    velocities: Optional[np.ndarray] = None
    error_rates: Optional[np.ndarray] = None
    status: str = "ok"
    message: str = ""

    def __len__(self) -> int:
        return len(self.times)

    @property
    def edge_vectors(self) -> np.ndarray:
        H = incidence_transpose(self.graph)
        return np.einsum("kn,tnc->tkc", H, self.states)

    @property
    def edge_vector_rates(self) -> np.ndarray:
        if self.velocities is None:
            raise ValueError("record carries no velocities")
        H = incidence_transpose(self.graph)
        return np.einsum("kn,tnc->tkc", H, self.velocities)

    def recompute_errors(self) -> np.ndarray:
        z = self.edge_vectors
        return np.einsum("tkc,tkc->tk", z, z) - self.target_distances**2

    def fill_derivatives(self) -> "TrajectoryRecord":
        """Evaluate velocities and error rates at every stored state."""
        g, d, mu = self.graph, self.target_distances, self.mismatch
        self.velocities = np.array([vector_field(g, d, mu, x) for x in self.states]).reshape(
            len(self), g.n, 2
        )
        self.error_rates = np.array([error_rhs(g, d, mu, x) for x in self.states]).reshape(
            len(self), g.m
        )
        return self

    def converged_index(self, tol: float = 1e-9, window: int = 10) -> Optional[int]:
        """First sample from which ``|edot| <= tol (1 + |e|)`` holds for ``window`` samples
        and keeps holding to the end of the record."""
        if self.error_rates is None:
            self.fill_derivatives()
        ok = np.linalg.norm(self.error_rates, axis=1) <= tol * (
            1.0 + np.linalg.norm(self.edge_errors, axis=1)
        )
        if len(ok) < window or not ok[-window:].all():
            return None
        bad = np.flatnonzero(~ok)
        start = int(bad[-1]) + 1 if bad.size else 0
        return start if len(ok) - start >= window else None

    def slice(self, start: int, stop: Optional[int] = None) -> "TrajectoryRecord":
        sl = slice(start, stop)
        return TrajectoryRecord(
            graph=self.graph,
            target_distances=self.target_distances,
            mismatch=self.mismatch,
            times=self.times[sl],
            states=self.states[sl],
            edge_errors=self.edge_errors[sl],
            velocities=None if self.velocities is None else self.velocities[sl],
            error_rates=None if self.error_rates is None else self.error_rates[sl],
            status=self.status,
            message=self.message,
        )

    def to_csv(self, path) -> None:
        """Write ``t, x1x, x1y, ..., e1, ..., em`` rows with 17 significant digits."""
        g = self.graph
        header = ["t"]
        for i in range(1, g.n + 1):
            header += [f"x{i}x", f"x{i}y"]
        header += [f"e{k}" for k in range(1, g.m + 1)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            flat = self.states.reshape(len(self), -1)
            for t, xs, es in zip(self.times, flat, self.edge_errors):
                w.writerow([format(v, ".17g") for v in (t, *xs, *es)])


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Load ``(times, states, edge_errors)`` from a trajectory CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = sum(1 for h in header if h.startswith("x") and h.endswith("x"))
    m = sum(1 for h in header if h.startswith("e"))
    data = np.array([[float(v) for v in r] for r in body]).reshape(len(body), 1 + 2 * n + m)
    return data[:, 0], data[:, 1 : 1 + 2 * n].reshape(-1, n, 2), data[:, 1 + 2 * n :]


def _assemble(g, d, mu, ts, ys, status, message) -> TrajectoryRecord:
    states = np.array(ys).reshape(len(ys), g.n, 2)
    H = incidence_transpose(g)
    z = np.einsum("kn,tnc->tkc", H, states)
    errors = np.einsum("tkc,tkc->tk", z, z) - d**2
    rec = TrajectoryRecord(g, d, mu, np.array(ts, dtype=float), states, errors, status=status, message=message)
    return rec.fill_derivatives()


def integrate(s: Scenario) -> TrajectoryRecord:
    """Integrate the closed loop from ``s.initial_state`` over ``[0, s.horizon]``.

    Output is sampled every ``s.integrator.stride`` time units using the
    stepper's dense output.

    Raises
    ------
    IntegrationError
        On step-size underflow or a non-finite state; the partial record up to
        the last valid sample is attached.
    """
    cfg = s.integrator
    g = s.graph
    d, mu = s.target_distances, s.mismatch
    fun = _FastField(g, d, mu)
    try:
        stepper_cls = _METHODS[cfg.method]
    except KeyError:
        raise ValueError(f"unknown integration method {cfg.method!r}") from None

    n_out = int(np.floor(s.horizon / cfg.stride + 1e-9)) + 1
    grid = np.arange(n_out) * cfg.stride
    if grid[-1] < s.horizon - 1e-12:
        grid = np.append(grid, s.horizon)

    solver = stepper_cls(fun, 0.0, s.initial_state.ravel(), s.horizon,
                         rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step)
    ts, ys = [0.0], [s.initial_state.ravel().copy()]
    nxt = 1
    while solver.status == "running" and nxt < len(grid):
        msg = solver.step()
        if solver.status == "failed":
            rec = _assemble(g, d, mu, ts, ys, "step_underflow", msg or "step failed")
            raise IntegrationError(f"integration failed at t={solver.t:.6g}: {msg}", rec)
        if not np.all(np.isfinite(solver.y)):
            rec = _assemble(g, d, mu, ts, ys, "non_finite", "state became non-finite")
            raise IntegrationError(f"non-finite state at t={solver.t:.6g}", rec)
        if nxt < len(grid) and grid[nxt] <= solver.t:
            dense = solver.dense_output()
            while nxt < len(grid) and grid[nxt] <= solver.t:
                ts.append(float(grid[nxt]))
                ys.append(dense(grid[nxt]))
                nxt += 1
    log.debug("integrated %d samples, final t=%g", len(ts), ts[-1])
    return _assemble(g, d, mu, ts, ys, "ok", "")


# ---------------------------------------------------------------------------
# Realizations and initial conditions
# ---------------------------------------------------------------------------


def distances_from_coordinates(g: FormationGraph, x) -> np.ndarray:
    return np.linalg.norm(edge_vectors(g, x), axis=1)


def triangle_realization(g: FormationGraph, d) -> np.ndarray:
    """Place a triangle with the given edge lengths by the law of cosines.

    The first edge's tail sits at the origin and its head on the positive
    horizontal axis; the third vertex goes in the upper half plane.
    """
    if g.n != 3 or g.m != 3:
        raise ValueError("triangle_realization needs a 3-vertex, 3-edge graph")
    d = np.asarray(d, dtype=float)
    a, b = g.edges[0]
    c = ({0, 1, 2} - {a, b}).pop()
    dab = d[0]
    dac = d[g.edge_label(a, c)]
    dbc = d[g.edge_label(b, c)]
    cos_a = (dab**2 + dac**2 - dbc**2) / (2 * dab * dac)
    if not -1.0 < cos_a < 1.0:
        raise ValueError("distances violate the strict triangle inequality")
    x = np.zeros((3, 2))
    x[b] = (dab, 0.0)
    x[c] = (dac * cos_a, dac * np.sqrt(1.0 - cos_a**2))
    return x


def perturbed_realization(base, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Move every point by an independent offset drawn uniformly from a disc of ``radius``."""
    base = np.asarray(base, dtype=float)
    r = radius * np.sqrt(rng.uniform(size=len(base)))
    th = rng.uniform(0.0, 2 * np.pi, size=len(base))
    return base + np.column_stack([r * np.cos(th), r * np.sin(th)])
