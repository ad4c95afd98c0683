"""Integrate-then-classify runs and mismatch sweeps."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .analysis import AnalysisSettings, OutcomeReport, classify_outcome
from .dynamics import IntegrationError, Scenario, TrajectoryRecord, integrate

log = logging.getLogger(__name__)

KINDS = ("stationary", "drift", "orbit", "undetermined")
MIN_SAMPLES_PER_PERIOD = 20


def run_scenario(s: Scenario, settings: AnalysisSettings | None = None) -> tuple[TrajectoryRecord, OutcomeReport]:
    """Integrate ``s`` and classify the outcome.

    An orbit sampled at fewer than 20 points per period is integrated again on
    a finer output grid before the final classification.
    """
    tr = integrate(s)
    rep = classify_outcome(s.graph, tr, settings)
    if rep.kind == "orbit":
        period = 2 * math.pi / rep.omega
        if period / s.integrator.stride < MIN_SAMPLES_PER_PERIOD:
            stride = period / MIN_SAMPLES_PER_PERIOD
            log.info("re-integrating with stride %.4g to resolve period %.4g", stride, period)
            s = replace(s, integrator=replace(s.integrator, stride=stride))
            tr = integrate(s)
            rep = classify_outcome(s.graph, tr, settings)
    return tr, rep


def sample_ball(rng: np.random.Generator, count: int, dim: int, radius: float) -> np.ndarray:
    """``count`` points uniformly distributed in the ``dim``-ball of ``radius``."""
    u = rng.standard_normal((count, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = radius * rng.uniform(size=count) ** (1.0 / dim)
    return u * r[:, None]


def _sweep_one(args) -> dict:
    index, s, settings = args
    try:
        _, rep = run_scenario(s, settings)
        kind, omega = rep.kind, rep.omega
        reason = rep.diagnostics.get("reason")
    except (IntegrationError, ValueError, np.linalg.LinAlgError) as exc:
        kind, omega, reason = "undetermined", None, str(exc)
    row = {"index": index, "mismatch": [float(v) for v in s.mismatch], "kind": kind, "omega": omega}
    if reason:
        row["reason"] = reason
    return row


def sweep(base: Scenario, mismatches: np.ndarray, settings: AnalysisSettings | None = None,
          workers: int = 1) -> dict:
    """Classify the outcome for each mismatch vector and tabulate the kinds.

    Per-sample failures count as undetermined.  Rows are ordered by sample
    index whatever the execution order.
    """
    jobs = [(i, replace(base, mismatch=np.asarray(mu, dtype=float)), settings)
            for i, mu in enumerate(mismatches)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    rows.sort(key=lambda r: r["index"])
    counts = {k: sum(r["kind"] == k for r in rows) for k in KINDS}
    total = max(len(rows), 1)
    return {
        "count": len(rows),
        "counts": counts,
        "fractions": {k: counts[k] / total for k in KINDS},
        "samples": rows,
    }
