"""Acceptance gate: one test per criterion, each printing a PASS line with
its runtime.  Tolerances are pinned here, not configurable.

Run as `pytest tests/test_acceptance.py -v -s` to see the per-criterion lines.
"""

import math
import time

import numpy as np
import pytest

from entroflow import (
    BridgeSpec,
    DiscreteDistribution,
    EmpiricalMeasure,
    GaussianMeasure,
    MVCoefficientField,
    MismatchCase,
    SemimartingaleWitness,
    bridge_decomposition_experiment,
    bridge_epsilon_sweep,
    bridge_law_linear,
    bridge_path,
    entropy_cost_experiment,
    euler_maruyama,
    exp_moment_certificate,
    flow_map,
    gaussian_sample,
    interpolation_bound_check,
    kl_gaussian,
    kl_knn,
    linear_sde_law,
    mismatch_singularity_experiment,
    synchronous_pair,
    talagrand_experiment,
    time_grid,
    w2_empirical_1d,
    w2_empirical_ot,
    w2_exact,
    w2_stability_experiment,
)
from entroflow.catalog import (
    constant_drift_field,
    constant_drift_spec,
    heat_field,
    heat_spec,
    mean_field_ou,
    ou_field,
    ou_spec,
)
from entroflow.dynamics import DynamicsError

from _refs import random_spd


class _Gate:
    def __init__(self, number, title, budget_s):
        self.number, self.title, self.budget = number, title, budget_s

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        overtime = exc_type is None and elapsed >= self.budget
        status = "PASS" if exc_type is None and not overtime else "FAIL"
        print(f"ACCEPTANCE {self.number} ({self.title}): {status} ({elapsed:.2f}s)")
        if overtime:
            raise AssertionError(f"runtime {elapsed:.1f}s exceeds {self.budget}s budget")
        return False


def test_criterion_1_talagrand_sharpness():
    with _Gate(1, "Talagrand sharpness", 1.0):
        for d in (1, 2, 3):
            m = np.zeros(d)
            m[:] = 0.8
            rep = talagrand_experiment(GaussianMeasure(m, np.eye(d)))
            assert abs(rep.params["ratio_2ent_over_w2sq"] - 1.0) <= 1e-9
        rng = np.random.default_rng(2024)
        for _ in range(100):
            d = int(rng.integers(1, 4))
            nu = GaussianMeasure(rng.standard_normal(d), random_spd(rng, d))
            rep = talagrand_experiment(nu)
            assert rep.verdict == "holds"


def test_criterion_2_entropy_cost_sharp_limit():
    with _Gate(2, "entropy-cost sharp constant at vanishing curvature", 1.0):
        x1, x2 = np.array([0.0]), np.array([1.3])
        dx2 = float(np.sum((x1 - x2) ** 2))
        t_grid = np.geomspace(0.01, 1.0, 25)
        rep = entropy_cost_experiment(heat_spec(1), heat_spec(1), x1, x2, t_grid)
        assert rep.params["sharp_dev"] <= 1e-10
        for t in t_grid:
            ent = kl_gaussian(
                GaussianMeasure(x1, [[2 * t]]), GaussianMeasure(x2, [[2 * t]])
            )
            assert abs(ent - dx2 / (4 * t)) <= 1e-10 / t


def test_criterion_3_entropy_cost_rate_for_diffusion_pair():
    with _Gate(3, "1/t entropy rate for differing diffusions", 1.0):
        t_grid = [2.0**-k for k in range(12, 0, -1)]
        rep = entropy_cost_experiment(
            ou_spec(1, 1.0, 1.0), ou_spec(1, 1.0, 2.0), [0.0], [1.0], t_grid
        )
        t_ent = np.asarray(rep.params["t_entropy"])
        ref = t_ent[-1]  # the t = 2^-1 value
        assert np.max(t_ent) <= 10.0 * ref
        assert np.min(t_ent) <= 10.0 * ref
        assert rep.verdict == "holds"


def test_criterion_4_entropy_bound_validity_and_singularity():
    with _Gate(4, "entropy bound margin and diffusion-gap blowup", 30.0):
        t, c = 0.5, 1.0
        x0 = [0.0]
        n_mc = 400  # ~1e5 draws across the 264 quadrature nodes
        s_heat = heat_spec(1, 1.0, x0=x0, horizon=t)
        s_drift = constant_drift_spec(1, c, 1.0, x0=x0, horizon=t)
        cases = [
            MismatchCase(
                heat_field(1, 1.0, horizon=t),
                constant_drift_field(1, c, 1.0, horizon=t),
                lambda s: linear_sde_law(s_heat, s),
                kl_gaussian(linear_sde_law(s_heat, t), linear_sde_law(s_drift, t)),
                "drift-gap",
            ),
            MismatchCase(
                heat_field(1, 1.0, horizon=t),
                heat_field(1, 2.0, horizon=t),
                lambda s: linear_sde_law(s_heat, s),
                kl_gaussian(linear_sde_law(s_heat, t), linear_sde_law(heat_spec(1, 2.0, x0=x0, horizon=t), t)),
                "diffusion-gap",
            ),
        ]
        rep = mismatch_singularity_experiment(cases, t, n_mc=n_mc, seed=41)
        by = {row["label"]: row for row in rep.params["cases"]}
        drift = by["drift-gap"]
        assert not drift["diverged"]
        assert drift["true_entropy"] == pytest.approx(c * c * t / 4.0, abs=1e-12)
        assert drift["bound"] == pytest.approx(c * c * t / 2.0, rel=1e-6)
        assert drift["true_entropy"] <= drift["bound"] - c * c * t / 5.0  # real margin
        assert by["diffusion-gap"]["diverged"]
        assert rep.verdict == "divergent"


def test_criterion_5_bridge_decomposition_battery():
    with _Gate(5, "bridge entropy decomposition battery", 10.0):
        rng = np.random.default_rng(51)
        found = 0
        while found < 50:
            d = int(rng.integers(1, 3))
            a1, a2 = rng.uniform(0.6, 1.6, 2)
            s1 = heat_spec(d, a1) if rng.random() < 0.5 else ou_spec(d, rng.uniform(0.3, 1.5), a1)
            s2 = heat_spec(d, a2) if rng.random() < 0.5 else ou_spec(d, rng.uniform(0.3, 1.5), a2)
            rep = bridge_decomposition_experiment(
                s1,
                s2,
                rng.standard_normal(d),
                rng.standard_normal(d),
                float(rng.uniform(0.2, 1.0)),
                float(rng.uniform(0.05, 0.5)),
                float(rng.uniform(1.5, 4.0)),
            )
            if rep.verdict == "degenerate":
                continue
            found += 1
            assert rep.left <= rep.right + 1e-9
        # first term decreases monotonically in the switch fraction and
        # vanishes at the no-switch endpoint
        rows = bridge_epsilon_sweep(
            heat_spec(1, 1.0), heat_spec(1, 2.0), [0.0], 1.0, p=2.0,
            eps_values=(1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0),
        )
        vals = [v for _, v in rows]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] == pytest.approx(0.0, abs=1e-12)


def test_criterion_6_interpolation_property_suite():
    with _Gate(6, "entropy interpolation property suite", 5.0):
        rng = np.random.default_rng(61)
        for _ in range(1000):
            n = int(rng.integers(2, 9))
            labels = range(n)
            trip = [DiscreteDistribution(labels, rng.uniform(0.005, 1.0, n)) for _ in range(3)]
            p = float(rng.uniform(1.0 + 1e-9, 10.0))
            rep = interpolation_bound_check(*trip, p=p)
            assert rep.left <= rep.right + 1e-9


def test_criterion_7_exponential_moment_certificate():
    with _Gate(7, "exponential moment certificate", 60.0):
        d, t0, lam, k1 = 2, 0.2, 0.5, 4.0
        k = k1 * (1 + lam / 2) / (1 - k1 * t0) + 1.0
        witness = SemimartingaleWitness(
            k1=k1, lam=lam, k=k, t0=t0, horizon=1.0, xi0=0.0, compensator=lambda t: d * t
        )
        draws = gaussian_sample(GaussianMeasure(np.zeros(d), t0 * np.eye(d)), 100_000, seed=71)
        xi = np.einsum("nd,nd->n", draws.points, draws.points)
        rep = exp_moment_certificate(witness, xi)
        assert rep.verdict == "holds"
        # parameters violating the slack condition are rejected pre-simulation
        with pytest.raises(DynamicsError):
            SemimartingaleWitness(
                k1=k1, lam=lam, k=k1, t0=t0, horizon=1.0, xi0=0.0, compensator=lambda t: d * t
            )


def test_criterion_8_simulation_fidelity():
    with _Gate(8, "simulation fidelity against closed forms", 60.0):
        n, t = 10_000, 0.5
        # heat and OU moments at 3 sigma
        for spec, field, x0 in (
            (heat_spec(2, 1.0, x0=[0.0, 0.0]), heat_field(2, 1.0), [0.0, 0.0]),
            (ou_spec(2, 1.0, 0.5, x0=[1.0, -1.0]), ou_field(2, 1.0, 0.5), [1.0, -1.0]),
        ):
            law = linear_sde_law(spec, t)
            ens = euler_maruyama(field, x0, time_grid(t, 128), seed=81, n_paths=n)
            got = ens.terminal_measure()
            for i in range(2):
                se_m = math.sqrt(law.cov[i, i] / n)
                se_v = math.sqrt(2 * law.cov[i, i] ** 2 / n)
                assert abs(got.mean()[i] - law.mean[i]) < 3 * se_m + 3e-3
                assert abs(got.cov()[i, i] - law.cov[i, i]) < 3 * se_v + 6e-3
        # bridge simulation against the switched closed form
        t1, eps = 1.0, 0.5
        law_b = bridge_law_linear(
            ou_spec(1, 1.0, 0.5, horizon=t1), heat_spec(1, 1.0, horizon=t1), [1.0], eps * t1, t1
        )
        spec_b = BridgeSpec(ou_field(1, 1.0, 0.5, horizon=t1), heat_field(1, 1.0, horizon=t1), t1=t1, epsilon=eps)
        bens = bridge_path(spec_b, [1.0], time_grid(t1, 128), seed=82, n_paths=n)
        got_b = bens.terminal_measure()
        se_m = math.sqrt(law_b.cov[0, 0] / n)
        se_v = math.sqrt(2 * law_b.cov[0, 0] ** 2 / n)
        assert abs(got_b.mean()[0] - law_b.mean[0]) < 3 * se_m + 3e-3
        assert abs(got_b.cov()[0, 0] - law_b.cov[0, 0]) < 3 * se_v + 8e-3
        # synchronous additive coupling: separation constant at bit level
        f = heat_field(2, 1.0)
        x1, x2 = np.array([0.4, -0.1]), np.array([1.0, 0.3])
        pair = synchronous_pair(f, f, x1, x2, time_grid(1.0, 256), seed=83, n_pairs=64)
        d0 = float(np.linalg.norm(x1 - x2))
        assert np.all(pair.separation == d0)


def _measured_sensitivity(field, rng, n_probe=64):
    """Finite-difference bounds on the drift's state and measure sensitivity."""
    k_x = 0.0
    k_mu = 0.0
    for _ in range(n_probe):
        mu = EmpiricalMeasure(rng.normal(size=(6, field.dim)))
        nu = EmpiricalMeasure(mu.points + rng.normal(scale=0.4, size=(6, field.dim)))
        t = float(rng.uniform(0, 0.5))
        x = rng.normal(size=(4, field.dim))
        y = x + rng.normal(scale=0.5, size=x.shape)
        dx = np.linalg.norm(y - x, axis=1).max()
        k_x = max(k_x, float(np.linalg.norm(field.drift(t, y, mu) - field.drift(t, x, mu), axis=1).max()) / dx)
        w2 = w2_exact(mu, nu)
        if w2 > 1e-9:
            dmu = float(np.linalg.norm(field.drift(t, x, nu) - field.drift(t, x, mu), axis=1).max())
            k_mu = max(k_mu, dmu / w2)
    return k_x, k_mu


def test_criterion_9_meanfield_stability():
    with _Gate(9, "mean-field transport stability", 300.0):
        t_grid = [0.1, 0.25, 0.5]
        # contractive distribution-free drift: ratio below 1 at 3 sigma
        contractive = MVCoefficientField.from_static(ou_field(1, 1.0, 0.5))
        rep = w2_stability_experiment(
            contractive,
            GaussianMeasure([0.0], [[0.25]]),
            GaussianMeasure([2.0], [[0.25]]),
            t_grid,
            1024,
            64,
            seed=91,
            bound=1.0,
        )
        assert rep.verdict == "holds"
        # interacting case: Gronwall bound from measured sensitivities
        field = mean_field_ou(1, 1.0, 0.5)
        k_x, k_mu = _measured_sensitivity(field, np.random.default_rng(92))
        bound = math.exp((k_x + k_mu) * t_grid[-1]) * 1.2
        rep2 = w2_stability_experiment(
            field,
            EmpiricalMeasure([[0.0]]),
            EmpiricalMeasure([[1.5]]),
            t_grid,
            1024,
            64,
            seed=93,
            bound=bound,
        )
        assert rep2.verdict == "holds"
        # self-convergence of the particle flow toward a finer reference
        mu0 = GaussianMeasure([0.5], [[1.0]])
        ref = flow_map(field, mu0, 0.5, 4096, 64, seed=94)
        dists = []
        for n in (64, 256, 1024):
            cloud = flow_map(field, mu0, 0.5, n, 64, seed=94)
            dists.append(w2_exact(cloud, ref))
        assert dists[0] > dists[1] > dists[2]


def test_criterion_10_estimator_calibration():
    with _Gate(10, "estimator calibration", 60.0):
        # k-NN KL within 0.1 of the closed form at 1e4 samples
        pairs = [
            (GaussianMeasure([1.0], [[1.0]]), GaussianMeasure([0.0], [[1.0]])),
            (GaussianMeasure([0.5, 0.5], np.eye(2)), GaussianMeasure.standard(2)),
        ]
        for i, (g1, g2) in enumerate(pairs):
            a = gaussian_sample(g1, 10_000, seed=101 + i)
            b = gaussian_sample(g2, 10_000, seed=201 + i)
            assert abs(kl_knn(a, b, k=5) - kl_gaussian(g1, g2)) < 0.1
        same = gaussian_sample(GaussianMeasure.standard(2), 10_000, seed=103)
        other = gaussian_sample(GaussianMeasure.standard(2), 10_000, seed=104)
        assert abs(kl_knn(same, other, k=5)) < 0.05
        # discrete OT on 500 points against the 1-D quantile solver
        mu = gaussian_sample(GaussianMeasure([0.0], [[1.0]]), 500, seed=105)
        nu = gaussian_sample(GaussianMeasure([1.0], [[0.49]]), 500, seed=106)
        exact = w2_empirical_ot(mu, nu, method="exact")[0]
        assert abs(exact - w2_empirical_1d(mu, nu)) < 1e-6
