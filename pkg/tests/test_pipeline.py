import numpy as np
import pytest

from conftest import EQUILATERAL
from formation_mismatch import pipeline
from formation_mismatch.dynamics import IntegrationError, IntegratorSettings, Scenario
from formation_mismatch.graph import FormationGraph
from formation_mismatch.pipeline import run_scenario, sample_ball, sweep

TRI = FormationGraph.cycle_triangle()


def test_sample_ball_is_uniform(rng):
    pts = sample_ball(rng, 20000, 3, 0.05)
    r = np.linalg.norm(pts, axis=1)
    assert r.max() <= 0.05
    # radius of a uniform point in the 3-ball has CDF (r/R)^3
    assert np.median(r) == pytest.approx(0.05 * 0.5 ** (1 / 3), rel=0.02)
    assert np.abs(pts.mean(axis=0)).max() < 1e-3


def test_coarse_grid_is_refined():
    s = Scenario(TRI, [1, 1, 1], [0.05, 0.03, 0.02], EQUILATERAL + 0.02, 600.0,
                 IntegratorSettings(stride=20.0))
    tr, rep = run_scenario(s)
    assert rep.kind == "orbit"
    period = 2 * np.pi / rep.omega
    assert tr.times[1] - tr.times[0] <= period / pipeline.MIN_SAMPLES_PER_PERIOD + 1e-9


def test_sweep_counts_failures_as_undetermined(monkeypatch):
    def boom(s, settings=None):
        raise IntegrationError("forced", None)

    monkeypatch.setattr(pipeline, "run_scenario", boom)
    base = Scenario(TRI, [1, 1, 1], np.zeros(3), EQUILATERAL, 1.0)
    table = sweep(base, np.zeros((2, 3)))
    assert table["counts"]["undetermined"] == 2
    assert table["samples"][0]["reason"] == "forced"
    assert table["fractions"]["undetermined"] == 1.0
