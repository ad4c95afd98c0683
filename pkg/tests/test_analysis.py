import numpy as np
import pytest

from conftest import EQUILATERAL, QUAD
from formation_mismatch.analysis import (
    AnalysisSettings,
    InsufficientDecayError,
    NotConvergedError,
    SquareSubsystemError,
    classify_outcome,
    estimate_equilibrium_output,
    extract_square_subsystem,
    fit_convergence,
    fit_rotation_center,
    genericity_vector,
    linearized_rate,
    orbit_diagnostics,
    square_coefficients,
    write_orbit_residuals_csv,
)
from formation_mismatch.dynamics import (
    IntegratorSettings,
    Scenario,
    TrajectoryRecord,
    distances_from_coordinates,
    integrate,
    perturbed_realization,
)
from formation_mismatch.graph import FormationGraph, edge_vectors
from formation_mismatch.pipeline import run_scenario
from formation_mismatch.rigidity import K, rigidity_matrix, wedge

TRI = FormationGraph.cycle_triangle()
MU_GENERIC = np.array([0.05, 0.03, 0.02])
MU_SUM_ZERO = np.array([0.05, -0.02, -0.03])


def _triangle_run(mu, horizon, stride=0.1, seed=1):
    x0 = perturbed_realization(EQUILATERAL, 0.1, np.random.default_rng(seed))
    s = Scenario(TRI, [1, 1, 1], mu, x0, horizon, IntegratorSettings(stride=stride))
    return run_scenario(s)


@pytest.fixture(scope="module")
def orbit_run():
    return _triangle_run(MU_GENERIC, 600.0, stride=0.5)


@pytest.fixture(scope="module")
def drift_run():
    return _triangle_run(MU_SUM_ZERO, 60.0)


@pytest.fixture(scope="module")
def still_run():
    return _triangle_run(np.zeros(3), 20.0)


def _synthetic(times, errors):
    n = len(times)
    return TrajectoryRecord(TRI, np.ones(3), np.zeros(3), times, np.zeros((n, 3, 2)), errors)


def test_fit_convergence_recovers_synthetic_rate():
    t = np.linspace(0, 10, 201)
    e = np.outer(np.exp(-3.0 * t), [0.3, -0.2, 0.1])
    fit = fit_convergence(_synthetic(t, e), np.zeros(3))
    assert fit.rate == pytest.approx(-3.0, rel=1e-9)
    assert fit.residual < 1e-9


def test_fit_convergence_rejects_flat_record():
    t = np.linspace(0, 10, 50)
    with pytest.raises(InsufficientDecayError):
        fit_convergence(_synthetic(t, np.full((50, 3), 1e-12)), np.zeros(3))


def test_fit_convergence_rejects_short_decay():
    t = np.linspace(0, 1, 50)
    e = np.outer(np.exp(-1.0 * t), [1.0, 0.0, 0.0])
    with pytest.raises(InsufficientDecayError):
        fit_convergence(_synthetic(t, e), np.zeros(3))


def test_unperturbed_triangle(still_run):
    tr, rep = still_run
    assert rep.kind == "stationary"
    assert np.linalg.norm(rep.equilibrium_output) <= 1e-7
    reduced, full = linearized_rate(TRI, tr.states[-1])
    assert reduced == full
    assert rep.convergence_rate == pytest.approx(reduced, rel=0.2)


def test_equilibrium_output_estimate(still_run):
    tr, _ = still_run
    mean, std = estimate_equilibrium_output(tr, return_std=True)
    assert np.linalg.norm(mean) <= 1e-7 and np.all(std <= 1e-7)


def test_equilibrium_output_needs_convergence():
    x0 = perturbed_realization(EQUILATERAL, 0.1, np.random.default_rng(0))
    tr = integrate(Scenario(TRI, [1, 1, 1], np.zeros(3), x0, 0.5))
    with pytest.raises(NotConvergedError):
        estimate_equilibrium_output(tr)
    assert classify_outcome(TRI, tr).kind == "undetermined"


def test_k4_unperturbed_converges():
    g = FormationGraph.complete(4)
    d = distances_from_coordinates(g, QUAD)
    x0 = perturbed_realization(QUAD, 0.1, np.random.default_rng(2))
    tr, rep = run_scenario(Scenario(g, d, np.zeros(6), x0, 20.0))
    assert rep.kind == "stationary"
    fit = fit_convergence(tr, rep.equilibrium_output)
    assert fit.rate < 0 and fit.residual <= 0.1


def test_linearized_rate_full_matches_rigidity_spectrum():
    # the reduced linearization shares its spectrum with the nonzero part of RR'
    g = FormationGraph.complete(4)
    R = rigidity_matrix(g, QUAD)
    lam = np.linalg.eigvalsh(R @ R.T)
    positive = lam[lam > 1e-9 * lam[-1]]
    reduced, full = linearized_rate(g, QUAD)
    assert full == pytest.approx(-2.0 * positive.min(), rel=1e-9)
    assert full <= reduced < 0


def test_equilibrium_output_roughly_linear_in_mismatch():
    mu = np.array([0.01, 0.006, 0.004])
    _, a = _triangle_run(mu, 60.0)
    _, b = _triangle_run(2 * mu, 60.0)
    ratio = np.linalg.norm(b.equilibrium_output) / np.linalg.norm(a.equilibrium_output)
    assert ratio == pytest.approx(2.0, rel=0.25)


def test_square_coefficients_reconstruct(rng):
    g = FormationGraph.complete(5)
    z = edge_vectors(g, rng.normal(size=(5, 2)))
    P = square_coefficients(z, 0, 1)
    np.testing.assert_allclose(np.column_stack([z[0], z[1]]) @ P, z.T, atol=1e-12)
    np.testing.assert_allclose(P[:, :2], np.eye(2), atol=1e-12)


def test_genericity_vector_triangle(rng):
    x = rng.normal(size=(3, 2))
    w = genericity_vector(x, TRI)
    np.testing.assert_allclose(w, -wedge(x[1] - x[0], x[0] - x[2]) / 3.0 * np.ones(3), atol=1e-13)


def test_genericity_vector_collinear():
    x = np.array([[0.0, 0.0], [1.0, 2.0], [3.0, 6.0]])
    np.testing.assert_allclose(genericity_vector(x, TRI), 0.0, atol=1e-14)


def test_rotation_center_recovers_known_motion(rng):
    c, spin = np.array([0.7, -1.2]), -0.3
    x = rng.normal(size=(40, 2))
    xdot = spin * (x - c) @ K.T
    np.testing.assert_allclose(fit_rotation_center(x, xdot, spin), c, atol=1e-12)


def test_drift(drift_run):
    tr, rep = drift_run
    assert rep.kind == "drift"
    assert rep.residuals["zdot_norm"] <= 1e-7
    assert rep.residuals["drift_spread"] <= 1e-7
    # velocity of the centroid averages the tail-side mismatch terms
    z = tr.edge_vectors[-1]
    np.testing.assert_allclose(rep.drift_velocity, (z * MU_SUM_ZERO[:, None]).sum(axis=0) / 3, atol=1e-6)
    w = genericity_vector(tr.states[-1], TRI)
    assert abs(w @ MU_SUM_ZERO) <= 1e-8 * np.linalg.norm(w) * np.linalg.norm(MU_SUM_ZERO)


def test_orbit(orbit_run):
    tr, rep = orbit_run
    assert rep.kind == "orbit" and rep.omega > 0
    r = rep.residuals
    assert r["edge_norm"] <= 1e-6
    assert r["circle_fit"] <= 1e-5 and r["center_spread"] <= 1e-5
    assert r["eig_real_max"] <= 1e-6 * rep.omega
    assert r["skew_defect"] <= 1e-6 * rep.omega
    assert r["zz_variation"] <= 1e-6
    assert r["edge_sigma_disagreement"] == 0
    # direction of travel from the agents themselves
    x, v = tr.states[-1], tr.velocities[-1]
    assert np.all(np.sign(wedge(x - rep.center, v)) == rep.sigma)
    w = genericity_vector(tr.states[-1], TRI)
    assert abs(w @ MU_GENERIC) > 1e-3 * np.linalg.norm(w) * np.linalg.norm(MU_GENERIC)


def test_orbit_period_matches_revolution(orbit_run):
    tr, rep = orbit_run
    i0 = int(np.searchsorted(tr.times, rep.diagnostics["converged_at"]))
    rel = tr.states[i0:, 0] - rep.center
    angle = np.unwrap(np.arctan2(rel[:, 1], rel[:, 0]))
    rate = np.polyfit(tr.times[i0:], angle, 1)[0]
    assert rate == pytest.approx(rep.sigma * rep.omega, rel=1e-6)


def test_square_subsystem_structure(orbit_run):
    tr, rep = orbit_run
    tail = tr.slice(int(np.searchsorted(tr.times, rep.diagnostics["converged_at"])))
    ss = extract_square_subsystem(TRI, tail, rep.equilibrium_output)
    diag = orbit_diagnostics(ss)
    assert ss.reconstruction_residual <= 1e-6
    assert diag["QL_identity"] <= 1e-10
    assert diag["intertwining"] <= 1e-5


def test_central_differences_agree_with_field(orbit_run):
    tr, rep = orbit_run
    tail = tr.slice(int(np.searchsorted(tr.times, rep.diagnostics["converged_at"])))
    ss = extract_square_subsystem(TRI, tail, rep.equilibrium_output, AnalysisSettings(derivative="central"))
    omega = orbit_diagnostics(ss)["omega_from_eig"]
    assert omega == pytest.approx(rep.omega, rel=1e-3)
    with pytest.raises(ValueError):
        extract_square_subsystem(TRI, tail, rep.equilibrium_output, AnalysisSettings(derivative="spline"))


def test_square_subsystem_degenerate():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 1e-12]])
    tr = _synthetic(np.array([0.0, 1.0]), np.zeros((2, 3)))
    tr.states = np.stack([x, x])
    tr.velocities = np.zeros_like(tr.states)
    with pytest.raises(SquareSubsystemError):
        extract_square_subsystem(TRI, tr, np.zeros(3), pair=(0, 1))


def test_report_serializes(orbit_run):
    import json

    _, rep = orbit_run
    doc = json.loads(json.dumps(rep.to_dict()))
    assert doc["kind"] == "orbit" and len(doc["center"]) == 2


def test_orbit_residual_csv(tmp_path, orbit_run, drift_run):
    tr, rep = orbit_run
    path = tmp_path / "res.csv"
    write_orbit_residuals_csv(path, tr, rep)
    rows = path.read_text().splitlines()
    assert rows[0].startswith("t,radius_dev1") and len(rows) > 100
    with pytest.raises(ValueError):
        write_orbit_residuals_csv(path, *drift_run)
