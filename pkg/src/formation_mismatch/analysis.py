"""Post-hoc analysis of closed-loop trajectories.

Once the edge errors have settled at their equilibrium value the edge vectors
obey a linear law ``Zdot = Z A`` for any two non-parallel edges stacked in
``Z``.  The formation is then stationary, drifting at a common constant
velocity, or rotating rigidly at angular speed ``omega`` about a fixed centre.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import TrajectoryRecord, m_matrix
from .graph import FormationGraph, as_multipoint
from .rigidity import K, independent_edge_pair, wedge


class AnalysisError(RuntimeError):
    pass


class NotConvergedError(AnalysisError):
    pass


class InsufficientDecayError(AnalysisError):
    pass


class SquareSubsystemError(AnalysisError):
    pass


@dataclass
class AnalysisSettings:
    convergence_tol: float = 1e-9
    convergence_window: int = 10
    zdot_tol: float = 1e-7  # relative to mean edge length
    xdot_tol: float = 1e-7  # relative to mean edge length
    min_decades: float = 2.0
    reconstruction_tol: float = 1e-4
    derivative: str = "field"  # or "central"


# ---------------------------------------------------------------------------
# Convergence of the edge errors
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceFit:
    rate: float
    residual: float
    t_start: float
    t_end: float


def fit_convergence(tr: TrajectoryRecord, target, floor: float = 1e-9,
                    min_decades: float = 2.0) -> ConvergenceFit:
    """Exponential rate of ``|e(t) - target|`` from a log-linear least-squares fit.

    The fitted segment runs from the first sample at or below 1% of the peak
    deviation to the last sample above ``floor * (1 + |target|)``, which keeps
    the initial transient and the round-off plateau out of the fit.

    Raises
    ------
    InsufficientDecayError
        If that segment covers fewer than ``min_decades`` decades or 5 samples.
    """
    target = np.asarray(target, dtype=float)
    dev = np.linalg.norm(tr.edge_errors - target, axis=1)
    lo = floor * (1.0 + np.linalg.norm(target))
    peak = int(np.argmax(dev))
    hi = 1e-2 * dev[peak]
    if hi <= lo:
        raise InsufficientDecayError(f"deviation peak {dev[peak]:.3g} too close to floor {lo:.3g}")
    after = np.arange(peak, len(dev))
    start_candidates = after[dev[after] <= hi]
    if start_candidates.size == 0:
        raise InsufficientDecayError("deviation never drops below 1% of its peak")
    i0 = int(start_candidates[0])
    below = np.flatnonzero(dev[i0:] <= lo)
    i1 = i0 + int(below[0]) if below.size else len(dev)
    seg = slice(i0, i1)
    t, y = tr.times[seg], np.log(dev[seg])
    if len(t) < 5 or (y[0] - y.min()) / math.log(10) < min_decades:
        raise InsufficientDecayError("decaying segment spans too little range")
    A = np.column_stack([np.ones_like(t), t])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return ConvergenceFit(float(coef[1]), float(np.sqrt(np.mean(resid**2))), float(t[0]), float(t[-1]))


def linearized_rate(g: FormationGraph, x, kept_edges=None) -> tuple[float, float]:
    """Decay-rate predictions at a realization ``x`` of zero error.

    Returns ``(reduced, full)``: ``-2 lambda_min`` of ``R~R~'`` over the kept
    edges, and ``-2 lambda_min`` of ``R~R~'(I + F'F)``, the linearized reduced
    error dynamics, where ``F`` expresses the dropped rows of ``R`` through the
    kept ones.  The two coincide for minimally rigid graphs.
    """
    from .rigidity import rigidity_matrix, rigidity_test

    R = rigidity_matrix(g, x)
    if kept_edges is None:
        kept_edges = rigidity_test(g, x).kept_edges
    kept = list(kept_edges)
    dropped = [k for k in range(g.m) if k not in kept]
    Rt = R[kept]
    Q0 = Rt @ Rt.T
    reduced = -2.0 * float(np.linalg.eigvalsh(Q0)[0])
    if not dropped:
        return reduced, reduced
    F = np.linalg.lstsq(Rt.T, R[dropped].T, rcond=None)[0].T
    lam = np.linalg.eigvals(Q0 @ (np.eye(len(kept)) + F.T @ F))
    return reduced, -2.0 * float(np.min(lam.real))


def estimate_equilibrium_output(tr: TrajectoryRecord, settings: AnalysisSettings | None = None,
                                return_std: bool = False):
    """Mean edge error over the post-convergence window.

    Raises
    ------
    NotConvergedError
        If the convergence criterion is not met at the end of the record.
    """
    settings = settings or AnalysisSettings()
    ci = tr.converged_index(settings.convergence_tol, settings.convergence_window)
    if ci is None:
        raise NotConvergedError("edge errors have not converged")
    window = tr.edge_errors[ci:]
    mean = window.mean(axis=0)
    if return_std:
        return mean, window.std(axis=0)
    return mean


# ---------------------------------------------------------------------------
# Square subsystem
# ---------------------------------------------------------------------------


@dataclass
class SquareSubsystem:
    p: int
    q: int
    times: np.ndarray
    Z_series: np.ndarray  # (N, 2, 2), columns z_p, z_q
    Zdot_series: np.ndarray
    Q_bar: np.ndarray  # (2, m)
    A_bar: np.ndarray  # (2, 2)
    M_bar: np.ndarray  # (m, m)
    min_abs_det: float
    reconstruction_residual: float
    fit_residual: float

    @property
    def L(self) -> np.ndarray:
        L = np.zeros((self.Q_bar.shape[1], 2))
        L[self.p, 0] = L[self.q, 1] = 1.0
        return L


def square_coefficients(z: np.ndarray, p: int, q: int) -> np.ndarray:
    """Coefficients ``P`` with ``[z_1 ... z_m] = [z_p z_q] P`` built from inner products only."""
    zp, zq = z[p], z[q]
    pq, pp, qq = zp @ zq, zp @ zp, zq @ zq
    den = pp * qq - pq**2
    G = np.array([[pq, qq], [-pp, -pq]])
    C = np.vstack([-(z @ zq), z @ zp])
    return G @ C / den


def extract_square_subsystem(g: FormationGraph, tr: TrajectoryRecord, e_eq,
                             settings: AnalysisSettings | None = None,
                             pair: tuple[int, int] | None = None) -> SquareSubsystem:
    """Build the 2x2 subsystem over the samples of ``tr`` (normally the converged tail).

    ``Q_bar`` comes from the closed form at the last sample; ``A_bar`` is the
    least-squares solution of ``Zdot = Z A`` stacked over all samples.
    """
    settings = settings or AnalysisSettings()
    z = tr.edge_vectors
    if pair is None:
        pair = independent_edge_pair(g, tr.states[-1])
        if pair is None:
            raise SquareSubsystemError("no independent edge pair at the terminal state")
    p, q = pair
    Zs = np.stack([z[:, p], z[:, q]], axis=2)
    scale2 = float(np.max(np.einsum("tkc,tkc->tk", z, z)))
    dets = np.abs(np.linalg.det(Zs))
    if dets.min() < 1e-8 * scale2:
        raise SquareSubsystemError(f"degenerate Z: min |det| = {dets.min():.3g}")

    if settings.derivative == "field":
        zdot = tr.edge_vector_rates
        Zd = np.stack([zdot[:, p], zdot[:, q]], axis=2)
        rows = slice(None)
    elif settings.derivative == "central":
        h = np.diff(tr.times)
        Zd = np.full_like(Zs, np.nan)
        Zd[1:-1] = (Zs[2:] - Zs[:-2]) / (h[1:] + h[:-1])[:, None, None]
        rows = slice(1, -1)
    else:
        raise ValueError(f"unknown derivative mode {settings.derivative!r}")

    Zstack = Zs[rows].reshape(-1, 2)
    Zdstack = Zd[rows].reshape(-1, 2)
    A_bar, *_ = np.linalg.lstsq(Zstack, Zdstack, rcond=None)
    fit_res = float(np.linalg.norm(Zstack @ A_bar - Zdstack) / max(np.linalg.norm(Zdstack), 1e-300))

    Q_bar = square_coefficients(z[-1], p, q)
    recon = np.linalg.norm(z.transpose(0, 2, 1) - Zs @ Q_bar, axis=(1, 2)) / np.linalg.norm(z, axis=(1, 2))
    rec_res = float(recon.max())
    if rec_res > settings.reconstruction_tol:
        raise SquareSubsystemError(f"reconstruction residual {rec_res:.3g} above threshold")

    return SquareSubsystem(
        p=p, q=q, times=tr.times.copy(), Z_series=Zs, Zdot_series=Zd,
        Q_bar=Q_bar, A_bar=A_bar, M_bar=m_matrix(g, e_eq, tr.mismatch),
        min_abs_det=float(dets.min()), reconstruction_residual=rec_res, fit_residual=fit_res,
    )


def orbit_diagnostics(ss: SquareSubsystem) -> dict[str, float]:
    """Residuals of the rigid-rotation structure of a converged square subsystem."""
    Zs = ss.Z_series
    G = np.einsum("tci,tcj->tij", Zs, Zs)
    Gm = G.mean(axis=0)
    zz_var = float(np.max(np.linalg.norm(G - Gm, axis=(1, 2))) / np.linalg.norm(Gm))

    W = Zs @ ss.A_bar @ np.linalg.inv(Zs)
    sym = 0.5 * (W + W.transpose(0, 2, 1))
    skew_defect = float(np.max(np.linalg.norm(sym, axis=(1, 2))))

    eig = np.linalg.eigvals(ss.A_bar)
    omega = float(np.max(np.abs(eig.imag)))
    QM = ss.Q_bar @ ss.M_bar
    inter = float(np.linalg.norm(QM - ss.A_bar @ ss.Q_bar) / max(np.linalg.norm(QM), 1e-300))
    return {
        "zz_variation": zz_var,
        "skew_defect": skew_defect,
        "eig_real_max": float(np.max(np.abs(eig.real))),
        "eig_imag_mismatch": float(abs(abs(eig[0].imag) - abs(eig[1].imag))),
        "omega_from_eig": omega,
        "intertwining": inter,
        "QL_identity": float(np.max(np.abs(ss.Q_bar @ ss.L - np.eye(2)))),
        "reconstruction": ss.reconstruction_residual,
        "A_fit": ss.fit_residual,
        "min_abs_det": ss.min_abs_det,
    }


# ---------------------------------------------------------------------------
# Genericity of the mismatch
# ---------------------------------------------------------------------------


def genericity_vector(x, g: FormationGraph) -> np.ndarray:
    """Wedges ``(x_head - c) ^ (x_tail - c)`` about the centroid ``c``, one per edge.

    With the errors at equilibrium, the edge vectors stand still exactly when
    this vector is orthogonal to the mismatch.
    """
    pts = as_multipoint(g, x)
    c = pts.mean(axis=0)
    return wedge(pts[g.heads] - c, pts[g.tails] - c)


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


@dataclass
class OutcomeReport:
    kind: str  # stationary | drift | orbit | undetermined
    equilibrium_output: Optional[np.ndarray] = None
    convergence_rate: Optional[float] = None
    drift_velocity: Optional[np.ndarray] = None
    omega: Optional[float] = None
    sigma: Optional[int] = None
    center: Optional[np.ndarray] = None
    residuals: dict[str, float] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def conv(v):
            if isinstance(v, np.ndarray):
                return [float(a) for a in v.ravel()]
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, dict):
                return {k: conv(w) for k, w in v.items()}
            if isinstance(v, (list, tuple)):
                return [conv(w) for w in v]
            return v

        return {k: conv(getattr(self, k)) for k in (
            "kind", "equilibrium_output", "convergence_rate", "drift_velocity",
            "omega", "sigma", "center", "residuals", "diagnostics")}


def fit_rotation_center(x: np.ndarray, xdot: np.ndarray, spin: float) -> np.ndarray:
    """Least-squares centre ``c`` of ``xdot = spin K (x - c)`` over all rows of ``x``."""
    A = np.tile(spin * K, (len(x), 1))
    b = (x @ (spin * K).T - xdot).ravel()
    c, *_ = np.linalg.lstsq(A, b, rcond=None)
    return c


def classify_outcome(g: FormationGraph, tr: TrajectoryRecord,
                     settings: AnalysisSettings | None = None) -> OutcomeReport:
    """Stationary, drift or orbit, judged over the post-convergence window."""
    settings = settings or AnalysisSettings()
    if tr.velocities is None or tr.error_rates is None:
        tr.fill_derivatives()
    ci = tr.converged_index(settings.convergence_tol, settings.convergence_window)
    if ci is None:
        return OutcomeReport("undetermined", diagnostics={
            "reason": "edge errors did not converge",
            "final_error_rate": float(np.linalg.norm(tr.error_rates[-1])) if len(tr) else None,
        })
    tail = tr.slice(ci)
    e_eq = tail.edge_errors.mean(axis=0)
    rep = OutcomeReport("undetermined", equilibrium_output=e_eq)
    rep.residuals["equilibrium_std"] = float(np.max(tail.edge_errors.std(axis=0)))
    rep.diagnostics["converged_at"] = float(tr.times[ci])
    rep.diagnostics["window_samples"] = len(tail)
    try:
        rep.convergence_rate = fit_convergence(tr, e_eq).rate
    except InsufficientDecayError as exc:
        rep.diagnostics["convergence_fit"] = str(exc)

    z = tail.edge_vectors
    znorm2 = np.einsum("tkc,tkc->tk", z, z)
    rep.residuals["edge_norm"] = float(np.max(np.abs(znorm2 - (e_eq + tail.target_distances**2))))
    scale = float(np.mean(np.sqrt(znorm2)))
    zdot = tail.edge_vector_rates
    xdot = tail.velocities
    zdot_level = float(np.max(np.linalg.norm(zdot, axis=(1, 2)))) / scale
    xdot_level = float(np.max(np.linalg.norm(xdot, axis=(1, 2)))) / scale
    rep.residuals["zdot_norm"] = zdot_level
    rep.residuals["xdot_norm"] = xdot_level

    if zdot_level <= settings.zdot_tol:
        if xdot_level <= settings.xdot_tol:
            rep.kind = "stationary"
            return rep
        v = xdot.mean(axis=(0, 1))
        rep.kind = "drift"
        rep.drift_velocity = v
        rep.residuals["drift_spread"] = float(np.max(np.linalg.norm(xdot - v, axis=2)))
        return rep

    try:
        ss = extract_square_subsystem(g, tail, e_eq, settings)
    except SquareSubsystemError as exc:
        rep.diagnostics["reason"] = str(exc)
        return rep
    diag = orbit_diagnostics(ss)
    omega = diag["omega_from_eig"]
    if omega <= settings.zdot_tol:
        rep.diagnostics["reason"] = "z varies but A has no rotational part"
        rep.residuals.update(diag)
        return rep

    W = ss.Z_series[-1] @ ss.A_bar @ np.linalg.inv(ss.Z_series[-1])
    skew21 = 0.5 * (W[1, 0] - W[0, 1])
    sigma = 1 if skew21 > 0 else -1
    spin = sigma * omega

    X = tail.states
    center = fit_rotation_center(X.reshape(-1, 2), xdot.reshape(-1, 2), spin)
    per_agent = np.array([fit_rotation_center(X[:, i], xdot[:, i], spin) for i in range(g.n)])
    radii = np.linalg.norm(X - center, axis=2)
    model = xdot - spin * (X - center) @ K.T
    # rotation direction seen by each edge on its own
    edge_turn = np.sign(np.median(wedge(z, zdot), axis=0))

    rep.kind = "orbit"
    rep.omega = omega
    rep.sigma = sigma
    rep.center = center
    rep.residuals.update(diag)
    rep.residuals["circle_fit"] = float(np.max(np.abs(radii - radii.mean(axis=0))))
    rep.residuals["center_spread"] = float(np.max(np.linalg.norm(per_agent - center, axis=1)))
    rep.residuals["rotation_model"] = float(np.max(np.linalg.norm(model, axis=2)))
    rep.residuals["edge_sigma_disagreement"] = float(np.sum(edge_turn != sigma))
    rep.diagnostics["square_pair"] = [ss.p, ss.q]
    rep.diagnostics["radii"] = radii.mean(axis=0)
    rep.diagnostics["agent_centers"] = per_agent
    return rep


def write_orbit_residuals_csv(path, tr: TrajectoryRecord, report: OutcomeReport) -> None:
    """Per-sample residuals of the fitted orbit over the post-convergence window."""
    if report.kind != "orbit":
        raise ValueError("orbit residuals need an orbit report")
    t0 = report.diagnostics["converged_at"]
    tail = tr.slice(int(np.searchsorted(tr.times, t0)))
    radii = np.linalg.norm(tail.states - report.center, axis=2)
    rdev = radii - radii.mean(axis=0)
    z = tail.edge_vectors
    edev = np.einsum("tkc,tkc->tk", z, z) - (report.equilibrium_output + tail.target_distances**2)
    spin = report.sigma * report.omega
    model = np.linalg.norm(tail.velocities - spin * (tail.states - report.center) @ K.T, axis=2)
    n, m = tr.graph.n, tr.graph.m
    header = (["t"] + [f"radius_dev{i}" for i in range(1, n + 1)]
              + [f"edge_norm_dev{k}" for k in range(1, m + 1)]
              + [f"model_dev{i}" for i in range(1, n + 1)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(tail.times, rdev, edev, model):
            w.writerow([format(v, ".17g") for v in (row[0], *row[1], *row[2], *row[3])])
