"""Built-in coefficient fields for the experiment runner.

Arbitrary user code injection is out of scope for a reproducibility tool, so
the CLI selects dynamics from this catalog by name with numeric parameters:

    heat(a)              driftless, diffusion a*I
    ou(rate, a)          linear drift -rate*x, diffusion a*I
    drift-gap(c, a)      driftless vs constant drift c, shared diffusion a*I
    diffusion-gap(a1,a2) driftless pair with diffusion gap a1*I vs a2*I
    mean-field-ou(rate,a)   drift rate*(mean(mu) - x), diffusion a*I
    dini-power-drift(alpha,gamma,a)  bounded Dini drift gamma*phi(|x|) + heat

Every static entry exposes both the simulation view (CoefficientField) and,
when linear, the closed-form view (LinearSDESpec).
"""

import numpy as np

from .dynamics import CoefficientField, DiniModulus
from .meanfield import MVCoefficientField
from .oracles import LinearSDESpec

__all__ = [
    "heat_field",
    "ou_field",
    "constant_drift_field",
    "heat_spec",
    "ou_spec",
    "constant_drift_spec",
    "mean_field_ou",
    "dini_power_drift_field",
    "FIELD_NAMES",
    "make_field",
    "make_linear_spec",
    "make_mv_field",
]

FIELD_NAMES = ("heat", "ou", "drift-gap", "diffusion-gap", "mean-field-ou", "dini-power-drift")


def _const_diag_diffusion(d, a_scale):
    sig = np.sqrt(2.0 * a_scale) * np.eye(d)
    a = a_scale * np.eye(d)

    def diffusion(t, x):
        return np.broadcast_to(a, (x.shape[0], d, d))

    def sigma(t, x):
        return np.broadcast_to(sig, (x.shape[0], d, d))

    def div_a(t, x):
        return np.zeros_like(x)

    return diffusion, sigma, div_a


def _zero_drift(t, x):
    return np.zeros_like(x)


def heat_field(d=1, a_scale=1.0, horizon=1.0):
    diffusion, sigma, div_a = _const_diag_diffusion(d, a_scale)
    return CoefficientField(
        dim=d,
        drift_dini=_zero_drift,
        drift_lipschitz=_zero_drift,
        diffusion=diffusion,
        sigma_fn=sigma,
        div_a_fn=div_a,
        bound=max(a_scale, 1.0 / a_scale) + 1.0,
        modulus=DiniModulus.power(1.0),
        horizon=horizon,
        label=f"heat(a={a_scale})",
    )


def heat_spec(d=1, a_scale=1.0, x0=None, horizon=1.0):
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    return LinearSDESpec.from_point(
        x0, np.zeros((d, d)), np.zeros(d), np.sqrt(2.0 * a_scale) * np.eye(d), horizon=horizon
    )


def ou_field(d=1, rate=1.0, a_scale=0.5, horizon=1.0):
    diffusion, sigma, div_a = _const_diag_diffusion(d, a_scale)
    return CoefficientField(
        dim=d,
        drift_dini=_zero_drift,
        drift_lipschitz=lambda t, x: -rate * x,
        diffusion=diffusion,
        sigma_fn=sigma,
        div_a_fn=div_a,
        bound=max(a_scale, 1.0 / a_scale, rate) + 1.0,
        modulus=DiniModulus.power(1.0),
        horizon=horizon,
        label=f"ou(rate={rate},a={a_scale})",
    )


def ou_spec(d=1, rate=1.0, a_scale=0.5, x0=None, horizon=1.0):
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    return LinearSDESpec.from_point(
        x0, -rate * np.eye(d), np.zeros(d), np.sqrt(2.0 * a_scale) * np.eye(d), horizon=horizon
    )


def constant_drift_field(d=1, c=1.0, a_scale=1.0, horizon=1.0):
    diffusion, sigma, div_a = _const_diag_diffusion(d, a_scale)
    drift = np.full(d, float(c)) if np.ndim(c) == 0 else np.asarray(c, dtype=float)
    return CoefficientField(
        dim=d,
        drift_dini=_zero_drift,
        drift_lipschitz=lambda t, x: np.broadcast_to(drift, x.shape),
        diffusion=diffusion,
        sigma_fn=sigma,
        div_a_fn=div_a,
        bound=max(a_scale, 1.0 / a_scale, float(np.linalg.norm(drift))) + 1.0,
        modulus=DiniModulus.power(1.0),
        horizon=horizon,
        label=f"drift(c={c},a={a_scale})",
    )


def constant_drift_spec(d=1, c=1.0, a_scale=1.0, x0=None, horizon=1.0):
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    drift = np.full(d, float(c)) if np.ndim(c) == 0 else np.asarray(c, dtype=float)
    return LinearSDESpec.from_point(
        x0, np.zeros((d, d)), drift, np.sqrt(2.0 * a_scale) * np.eye(d), horizon=horizon
    )


def mean_field_ou(d=1, rate=1.0, a_scale=0.5):
    """Drift rate*(mean(mu) - x): the cloud mean is conserved in expectation."""

    def drift(t, x, mu):
        return rate * (mu.mean() - x)

    def diffusion(t, x, mu):
        return np.broadcast_to(a_scale * np.eye(d), (x.shape[0], d, d))

    def sigma(t, x, mu):
        return np.broadcast_to(np.sqrt(2.0 * a_scale) * np.eye(d), (x.shape[0], d, d))

    return MVCoefficientField(
        dim=d,
        drift=drift,
        diffusion=diffusion,
        sigma_fn=sigma,
        div_a_fn=lambda t, x, mu: np.zeros_like(x),
        bound=max(rate, a_scale, 1.0 / a_scale) + 1.0,
        w2_lipschitz=rate,
        label=f"mean-field-ou(rate={rate},a={a_scale})",
    )


def dini_power_drift_field(d=1, alpha=0.5, gamma=0.5, a_scale=1.0, horizon=1.0):
    """Bounded drift gamma * |x|^alpha * sign(x) per coordinate, capped at |x|=1.

    The coordinatewise map r -> min(|r|,1)^alpha sign(r) has modulus
    2 phi(|dx|) for phi(r) = r^alpha, so the field sits in the Dini class
    without being Lipschitz at the origin.
    """
    modulus = DiniModulus.power(alpha)
    diffusion, sigma, div_a = _const_diag_diffusion(d, a_scale)

    def drift0(t, x):
        capped = np.minimum(np.abs(x), 1.0)
        return gamma * np.sign(x) * capped**alpha

    return CoefficientField(
        dim=d,
        drift_dini=drift0,
        drift_lipschitz=_zero_drift,
        diffusion=diffusion,
        sigma_fn=sigma,
        div_a_fn=div_a,
        bound=max(a_scale, 1.0 / a_scale, gamma * np.sqrt(d) * 2.0) + 1.0,
        modulus=modulus,
        horizon=horizon,
        label=f"dini(alpha={alpha},gamma={gamma})",
    )


def make_field(name, d=1, horizon=1.0, **params):
    """Catalog lookup for the simulation view of a named static field."""
    if name == "heat":
        return heat_field(d, params.get("a", 1.0), horizon)
    if name == "ou":
        return ou_field(d, params.get("rate", 1.0), params.get("a", 0.5), horizon)
    if name == "drift-gap":
        return constant_drift_field(d, params.get("c", 1.0), params.get("a", 1.0), horizon)
    if name == "dini-power-drift":
        return dini_power_drift_field(
            d, params.get("alpha", 0.5), params.get("gamma", 0.5), params.get("a", 1.0), horizon
        )
    raise KeyError(f"no static field named {name!r}; choose from {FIELD_NAMES}")


def make_linear_spec(name, d=1, horizon=1.0, **params):
    """Catalog lookup for the closed-form view of a named linear field."""
    if name == "heat":
        return heat_spec(d, params.get("a", 1.0), horizon=horizon)
    if name == "ou":
        return ou_spec(d, params.get("rate", 1.0), params.get("a", 0.5), horizon=horizon)
    if name == "drift-gap":
        return constant_drift_spec(d, params.get("c", 1.0), params.get("a", 1.0), horizon=horizon)
    raise KeyError(f"no linear spec named {name!r}")


def make_mv_field(name, d=1, **params):
    if name == "mean-field-ou":
        return mean_field_ou(d, params.get("rate", 1.0), params.get("a", 0.5))
    if name in ("heat", "ou", "drift-gap", "dini-power-drift"):
        return MVCoefficientField.from_static(make_field(name, d, **params))
    raise KeyError(f"no mean-field entry named {name!r}")
