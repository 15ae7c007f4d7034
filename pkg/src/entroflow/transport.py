"""Quadratic Wasserstein distance W2 and optimal couplings.

Three regimes are covered exactly or to solver tolerance:

* Gaussian closed form
    W2(N(m1,S1), N(m2,S2))^2 = |m1-m2|^2 + tr(S1 + S2 - 2 (S2^1/2 S1 S2^1/2)^1/2)
* exact 1-D via the sorted quantile (comonotone) coupling
* discrete optimal transport: assignment fast path for equal-size uniform
  clouds, a network LP for weighted clouds, and log-domain Sinkhorn for the
  entropic regularization.
"""

import json

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.special import logsumexp
import scipy.sparse as sp

from .measures import EmpiricalMeasure, GaussianMeasure, MeasureError

#: memory budget for exact discrete OT (number of cost-matrix entries)
MAX_EXACT_ENTRIES = 4_000_000

SINKHORN_TOL = 1e-7
SINKHORN_MAX_ITER = 10_000


class TransportError(ValueError):
    pass


class SinkhornDivergedError(TransportError):
    """Entropic iteration did not meet the marginal tolerance in budget."""


class CouplingPlan:
    """A transport plan between two empirical measures.

    matrix[i, j] is the mass moved from mu point i to nu point j; row sums
    equal mu.weights, column sums equal nu.weights (within 1e-9), and cost
    is sum_ij matrix[i,j] |x_i - y_j|^2.
    """

    __slots__ = ("mu", "nu", "matrix", "cost", "debiased_cost")

    def __init__(self, mu, nu, matrix, cost, debiased_cost=None):
        self.mu = mu
        self.nu = nu
        self.matrix = np.asarray(matrix, dtype=float)
        self.cost = float(cost)
        self.debiased_cost = debiased_cost

    def marginal_violation(self):
        row = np.max(np.abs(self.matrix.sum(axis=1) - self.mu.weights))
        col = np.max(np.abs(self.matrix.sum(axis=0) - self.nu.weights))
        return max(row, col)

    def recompute_cost(self):
        return float(np.sum(self.matrix * _cost_matrix(self.mu, self.nu)))

    def validate(self, marginal_tol=1e-9, cost_rtol=1e-9):
        if np.any(self.matrix < -marginal_tol):
            raise TransportError("plan has negative mass")
        if self.marginal_violation() > marginal_tol:
            raise TransportError("plan marginals violated beyond 1e-9")
        ref = self.recompute_cost()
        if abs(ref - self.cost) > cost_rtol * max(1.0, abs(ref)):
            raise TransportError("stored cost disagrees with the plan")
        return self

    def to_json_dict(self, mass_floor=0.0):
        ii, jj = np.nonzero(self.matrix > mass_floor)
        return {
            "cost": self.cost,
            "rows": int(self.matrix.shape[0]),
            "cols": int(self.matrix.shape[1]),
            "triplets": [
                (int(i), int(j), float(self.matrix[i, j])) for i, j in zip(ii, jj)
            ],
        }

    def to_json(self):
        return json.dumps(self.to_json_dict())


def _cost_matrix(mu, nu):
    x, y = mu.points, nu.points
    # |x|^2 + |y|^2 - 2<x,y>, clamped at 0 against rounding
    sq = (
        np.einsum("nd,nd->n", x, x)[:, None]
        + np.einsum("md,md->m", y, y)[None, :]
        - 2.0 * x @ y.T
    )
    return np.maximum(sq, 0.0)


def _sqrtm_spd(mat):
    w, v = np.linalg.eigh(mat)
    w = np.maximum(w, 0.0)
    return (v * np.sqrt(w)) @ v.T


def w2_gaussian(g1, g2):
    """Exact W2 between Gaussians (Bures closed form)."""
    if not (isinstance(g1, GaussianMeasure) and isinstance(g2, GaussianMeasure)):
        raise MeasureError("w2_gaussian needs GaussianMeasure inputs")
    if g1.dim != g2.dim:
        raise MeasureError("dimension mismatch")
    dm = g1.mean - g2.mean
    r2 = _sqrtm_spd(g2.cov)
    cross = _sqrtm_spd(r2 @ g1.cov @ r2)
    val = dm @ dm + np.trace(g1.cov) + np.trace(g2.cov) - 2.0 * np.trace(cross)
    return float(np.sqrt(max(val, 0.0)))


def gaussian_optimal_map(g1, g2):
    """(A, b) with T(x) = A x + b pushing g1 onto g2 optimally."""
    r1 = _sqrtm_spd(g1.cov)
    r1i = np.linalg.inv(r1)
    a = r1i @ _sqrtm_spd(r1 @ g2.cov @ r1) @ r1i
    return a, g2.mean - a @ g1.mean


def w2_empirical_1d(mu, nu):
    """Exact W2 in one dimension via the comonotone rearrangement."""
    if mu.dim != 1 or nu.dim != 1:
        raise TransportError("w2_empirical_1d needs 1-D measures")
    xs = np.argsort(mu.points[:, 0], kind="stable")
    ys = np.argsort(nu.points[:, 0], kind="stable")
    x, wx = mu.points[xs, 0], mu.weights[xs]
    y, wy = nu.points[ys, 0], nu.weights[ys]
    i = j = 0
    rx, ry = wx[0], wy[0]
    cost = 0.0
    while True:
        m = min(rx, ry)
        d = x[i] - y[j]
        cost += m * d * d
        rx -= m
        ry -= m
        if rx <= 1e-17:
            i += 1
            if i == x.size:
                break
            rx = wx[i]
        if ry <= 1e-17:
            j += 1
            if j == y.size:
                break
            ry = wy[j]
    return float(np.sqrt(max(cost, 0.0)))


def _exact_plan(mu, nu):
    n, m = mu.n_points, nu.n_points
    if n * m > MAX_EXACT_ENTRIES:
        raise TransportError(
            f"exact OT refused: {n}x{m} cost entries exceed {MAX_EXACT_ENTRIES}; "
            "use method='entropic'"
        )
    cost = _cost_matrix(mu, nu)
    if n == m and mu.is_uniform() and nu.is_uniform():
        # assignment fast path: the common Monte Carlo case
        rows, cols = linear_sum_assignment(cost)
        plan = np.zeros((n, m))
        plan[rows, cols] = 1.0 / n
        total = float(cost[rows, cols].sum() / n)
        return CouplingPlan(mu, nu, plan, total)
    # general weighted LP: min <c, pi>, rows sum to mu.w, cols sum to nu.w.
    # One column constraint dropped (marginals are rank deficient).
    row_mat = sp.kron(sp.eye(n), np.ones((1, m)), format="csr")
    col_mat = sp.kron(np.ones((1, n)), sp.eye(m), format="csr")[:-1]
    a_eq = sp.vstack([row_mat, col_mat], format="csr")
    b_eq = np.concatenate([mu.weights, nu.weights[:-1]])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise TransportError(f"exact OT LP failed: {res.message}")
    plan = res.x.reshape(n, m)
    return CouplingPlan(mu, nu, plan, float(np.sum(plan * cost)))


def _sinkhorn_potentials(log_a, log_b, cost, epsilon, max_iter, tol, a, b):
    f = np.zeros(log_a.size)
    g = np.zeros(log_b.size)
    for _ in range(max_iter):
        g = -epsilon * logsumexp((f[:, None] - cost) / epsilon + log_a[:, None], axis=0)
        f = -epsilon * logsumexp((g[None, :] - cost) / epsilon + log_b[None, :], axis=1)
        log_plan = (
            (f[:, None] + g[None, :] - cost) / epsilon + log_a[:, None] + log_b[None, :]
        )
        plan = np.exp(log_plan)
        err = max(
            np.max(np.abs(plan.sum(axis=1) - a)), np.max(np.abs(plan.sum(axis=0) - b))
        )
        if err < tol:
            return plan
    raise SinkhornDivergedError(
        f"no convergence after {max_iter} iterations (marginal error {err:.2e}); "
        "reduce epsilon or use method='exact'"
    )


def _entropic_plan(mu, nu, epsilon, max_iter, tol, debias):
    cost = _cost_matrix(mu, nu)
    log_a = np.log(np.maximum(mu.weights, 1e-300))
    log_b = np.log(np.maximum(nu.weights, 1e-300))
    plan = _sinkhorn_potentials(log_a, log_b, cost, epsilon, max_iter, tol, mu.weights, nu.weights)
    raw = float(np.sum(plan * cost))
    debiased = None
    if debias:
        self_mu = _entropic_plan(mu, mu, epsilon, max_iter, tol, debias=False).cost
        self_nu = _entropic_plan(nu, nu, epsilon, max_iter, tol, debias=False).cost
        debiased = raw - 0.5 * (self_mu + self_nu)
    return CouplingPlan(mu, nu, plan, raw, debiased_cost=debiased)


def w2_empirical_ot(
    mu,
    nu,
    method="exact",
    epsilon=None,
    max_iter=SINKHORN_MAX_ITER,
    tol=SINKHORN_TOL,
):
    """Discrete OT distance and plan.

    method='exact' solves the linear program (assignment fast path for
    equal-size uniform clouds).  method='entropic' runs log-domain Sinkhorn
    at regularization epsilon > 0 and additionally reports the debiased cost
    (raw cost minus half the two self-transport costs) on the plan.

    Returns (distance, plan) with distance = sqrt(plan cost).
    """
    if not (isinstance(mu, EmpiricalMeasure) and isinstance(nu, EmpiricalMeasure)):
        raise MeasureError("w2_empirical_ot needs EmpiricalMeasure inputs")
    if mu.dim != nu.dim:
        raise MeasureError("dimension mismatch")
    if method == "exact":
        plan = _exact_plan(mu, nu)
    elif method == "entropic":
        if epsilon is None or epsilon <= 0:
            raise TransportError("entropic method needs epsilon > 0")
        plan = _entropic_plan(mu, nu, epsilon, max_iter, tol, debias=True)
    else:
        raise TransportError(f"unknown method {method!r}")
    return float(np.sqrt(max(plan.cost, 0.0))), plan


def optimal_coupling_discrete(mu, nu):
    """Exact optimal plan attaining W2^2 between two point clouds."""
    return _exact_plan(mu, nu)


def w2_exact(m1, m2):
    """Dispatch to the sharpest available exact W2 for the input pair."""
    if isinstance(m1, GaussianMeasure) and isinstance(m2, GaussianMeasure):
        return w2_gaussian(m1, m2)
    if isinstance(m1, EmpiricalMeasure) and isinstance(m2, EmpiricalMeasure):
        if m1.dim == 1:
            return w2_empirical_1d(m1, m2)
        return w2_empirical_ot(m1, m2, method="exact")[0]
    raise MeasureError("w2_exact needs two Gaussians or two empirical measures")
