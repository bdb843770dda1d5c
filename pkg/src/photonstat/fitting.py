"""Damped least-squares engine and the photophysical model fits.

The engine is a classic Levenberg-Marquardt loop: damping factor lambda
starts at 1e-3, multiplies by 10 on a rejected step and divides by 10 on an
accepted one; the normal equations are scaled by the diagonal of JtJ.
Convergence requires both the relative step size and the relative cost
decrease to fall below ``tol`` (an accepted cost at the floating-point noise
floor, or a rejected step smaller than ``tol``, also terminates).

Weights follow the Poisson convention where fits consume histogram counts:
sigma = sqrt(count), with sigma = 1 for empty bins.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .correlate import CorrelationHistogram, LifetimeHistogram
from .emitter import K_B_EV

__all__ = [
    "FitResult",
    "lm_fit",
    "g2_three_level",
    "exp_decay",
    "quenching_curve",
    "lorentzian",
    "gaussian",
    "fit_g2",
    "rho_from_sb",
    "correct_background",
    "fit_lifetime",
    "fit_quenching",
    "fit_linear",
]


@dataclass
class FitResult:
    """Parameter vector, covariance estimate and convergence status."""

    model: str
    params: dict[str, float]
    covariance: np.ndarray | None
    residual_norm: float
    converged: bool
    iterations: int
    flags: list[str] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def uncertainties(self) -> dict[str, float]:
        """1-sigma uncertainties from the covariance diagonal."""
        names = list(self.params)
        if self.covariance is None:
            return {k: float("nan") for k in names}
        d = np.sqrt(np.maximum(np.diag(self.covariance), 0.0))
        return {k: float(d[i]) for i, k in enumerate(names)}

    def to_json_dict(self) -> dict:
        return {
            "model": self.model,
            "params": {k: float(v) for k, v in self.params.items()},
            "uncertainties": self.uncertainties(),
            "residual_norm": float(self.residual_norm),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "flags": list(self.flags),
            "info": {k: _jsonable(v) for k, v in self.info.items()},
        }


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _fd_jacobian(model, x, theta, f0):
    n, p = f0.size, theta.size
    J = np.empty((n, p))
    for j in range(p):
        h = np.sqrt(np.finfo(float).eps) * max(abs(theta[j]), 1e-8)
        tp = theta.copy()
        tp[j] += h
        J[:, j] = (model(x, *tp) - f0) / h
    return J


def lm_fit(model, x, y, init, sigma=None, jac=None, param_names=None,
           tol=1e-8, max_iter=200, model_name="custom") -> FitResult:
    """Levenberg-Marquardt local minimizer of sum(((y - f(x; theta)) / sigma)^2).

    ``model(x, *theta)`` evaluates the curve; ``jac(x, *theta)`` optionally
    returns the (n, p) model Jacobian (forward differences otherwise).
    NaN from the model raises; a singular or non-finite normal-equations
    system yields ``converged=False`` with a diagnostic flag.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = np.asarray(init, dtype=float).copy()
    p = theta.size
    if x.shape[0] < p + 1:
        raise ValueError(f"need at least {p + 1} data points for {p} parameters")
    if not np.all(np.isfinite(theta)):
        raise ValueError("initial parameters must be finite")
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    if param_names is None:
        param_names = [f"p{j}" for j in range(p)]

    def cost_and_resid(th):
        with np.errstate(all="ignore"):
            f = np.asarray(model(x, *th), dtype=float)
            if np.any(np.isnan(f)):
                raise RuntimeError("model evaluation returned NaN")
            r = (y - f) * w
            return float(r @ r), r, f

    cost, r, f = cost_and_resid(theta)
    # Floating-point noise floor for exactly-representable fits.
    cost_floor = 16.0 * y.size * (np.finfo(float).eps
                                  * max(1.0, float(np.max(np.abs(y * w))))) ** 2
    lam = 1e-3
    converged = False
    flags: list[str] = []
    iterations = 0
    J = None

    while iterations < max_iter and not converged:
        iterations += 1
        with np.errstate(all="ignore"):
            Jm = jac(x, *theta) if jac is not None else _fd_jacobian(model, x,
                                                                     theta, f)
            J = np.asarray(Jm, dtype=float) * w[:, None]
            H = J.T @ J
            g = J.T @ r
        D = np.diag(H).copy()
        D[~np.isfinite(D) | (D <= 0)] = 1.0

        accepted = False
        while not accepted:
            try:
                step = np.linalg.solve(H + lam * np.diag(D), g)
            except np.linalg.LinAlgError:
                step = np.full(p, np.nan)
            if not np.all(np.isfinite(step)):
                lam *= 10.0
                if lam > 1e15:
                    flags.append("singular jacobian: normal equations unsolvable")
                    cov = None
                    return FitResult(model_name,
                                     dict(zip(param_names, theta)), cov,
                                     float(np.sqrt(cost)), False, iterations,
                                     flags)
                continue
            rel_step = float(np.linalg.norm(step)) <= tol * (
                float(np.linalg.norm(theta)) + tol)
            trial = theta + step
            with np.errstate(all="ignore"):
                trial_cost, trial_r, trial_f = cost_and_resid(trial)
            if np.isfinite(trial_cost) and trial_cost <= cost:
                rel_decrease = (cost - trial_cost) <= tol * max(cost, 1e-300)
                theta, cost, r, f = trial, trial_cost, trial_r, trial_f
                lam = max(lam / 10.0, 1e-15)
                accepted = True
                if (rel_step and rel_decrease) or cost <= cost_floor:
                    converged = True
            else:
                lam *= 10.0
                if rel_step:
                    # No improvement possible at this scale: treat as converged.
                    converged = True
                    accepted = True
                if lam > 1e15:
                    accepted = True  # give up on this iteration

    # Covariance from the final Jacobian.
    with np.errstate(all="ignore"):
        Jm = jac(x, *theta) if jac is not None else _fd_jacobian(model, x, theta, f)
        J = np.asarray(Jm, dtype=float) * w[:, None]
        H = J.T @ J
    cov = None
    if np.all(np.isfinite(H)):
        rank = np.linalg.matrix_rank(H)
        if rank < p:
            flags.append("singular jacobian: covariance from pseudo-inverse")
            cov = np.linalg.pinv(H)
        else:
            cov = np.linalg.inv(H)
        if sigma is None:
            dof = max(x.shape[0] - p, 1)
            cov = cov * (cost / dof)
        cov = 0.5 * (cov + cov.T)
    else:
        flags.append("singular jacobian: non-finite normal equations")
        converged = False

    return FitResult(
        model=model_name,
        params={k: float(v) for k, v in zip(param_names, theta)},
        covariance=cov,
        residual_norm=float(np.sqrt(cost)),
        converged=converged,
        iterations=iterations,
        flags=flags,
    )


# ---------------------------------------------------------------------------
# model curves (with analytic Jacobians)


def g2_three_level(tau_ps, g2_0, a, tau1_ps, tau2_ps):
    """Antibunching dip plus bunching shoulder, baseline fixed at 1:

    g2(tau) = 1 - (1 - g2_0 + a) exp(-|tau|/tau1) + a exp(-|tau|/tau2)

    so that g2(0) = g2_0 and g2(inf) = 1.
    """
    at = np.abs(tau_ps)
    return (1.0 - (1.0 - g2_0 + a) * np.exp(-at / tau1_ps)
            + a * np.exp(-at / tau2_ps))


def g2_three_level_jac(tau_ps, g2_0, a, tau1_ps, tau2_ps):
    at = np.abs(tau_ps)
    e1 = np.exp(-at / tau1_ps)
    e2 = np.exp(-at / tau2_ps)
    c = 1.0 - g2_0 + a
    return np.stack(
        [e1, e2 - e1, -c * e1 * at / tau1_ps**2, a * e2 * at / tau2_ps**2],
        axis=-1,
    )


def exp_decay(t, amplitude, tau, offset):
    return amplitude * np.exp(-t / tau) + offset


def exp_decay_jac(t, amplitude, tau, offset):
    e = np.exp(-t / tau)
    return np.stack([e, amplitude * e * t / tau**2, np.ones_like(e)], axis=-1)


def quenching_curve(temperature_k, i0, a, e_ev):
    """Thermally activated quenching I(T) = I0 / (1 + A exp(-E/(k_b T)))."""
    q = np.exp(-e_ev / (K_B_EV * np.asarray(temperature_k, dtype=float)))
    return i0 / (1.0 + a * q)


def quenching_curve_jac(temperature_k, i0, a, e_ev):
    T = np.asarray(temperature_k, dtype=float)
    q = np.exp(-e_ev / (K_B_EV * T))
    denom = (1.0 + a * q) ** 2
    return np.stack(
        [1.0 / (1.0 + a * q), -i0 * q / denom, i0 * a * q / (K_B_EV * T) / denom],
        axis=-1,
    )


def lorentzian(energy, center, fwhm, amplitude):
    g = fwhm / 2.0
    u = np.asarray(energy, dtype=float) - center
    return amplitude * g**2 / (u**2 + g**2)


def lorentzian_jac(energy, center, fwhm, amplitude):
    g = fwhm / 2.0
    u = np.asarray(energy, dtype=float) - center
    den = (u**2 + g**2) ** 2
    return np.stack(
        [
            amplitude * g**2 * 2.0 * u / den,
            amplitude * g * u**2 / den,
            g**2 / (u**2 + g**2),
        ],
        axis=-1,
    )


def lorentzian_area(fwhm, amplitude) -> float:
    return float(np.pi * amplitude * fwhm / 2.0)


def gaussian(energy, center, fwhm, amplitude):
    s = fwhm / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    u = np.asarray(energy, dtype=float) - center
    return amplitude * np.exp(-(u**2) / (2.0 * s**2))


def gaussian_jac(energy, center, fwhm, amplitude):
    s = fwhm / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    u = np.asarray(energy, dtype=float) - center
    e = np.exp(-(u**2) / (2.0 * s**2))
    return np.stack(
        [
            amplitude * e * u / s**2,
            amplitude * e * u**2 / (s**2 * fwhm),
            e,
        ],
        axis=-1,
    )


def gaussian_area(fwhm, amplitude) -> float:
    s = fwhm / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    return float(amplitude * s * np.sqrt(2.0 * np.pi))


# ---------------------------------------------------------------------------
# the specific photophysical fits


def _poisson_sigma(counts) -> np.ndarray:
    return np.maximum(np.sqrt(np.asarray(counts, dtype=float)), 1.0)


def fit_g2(hist: CorrelationHistogram) -> FitResult:
    """Fit the three-level antibunching model to a normalized histogram.

    Reports g2_0 = model(0) directly and classifies the source as a single
    photon emitter when g2_0 < 0.5 (``info['single_photon']``).
    """
    if hist.g2 is None:
        raise ValueError("histogram is not normalized; call normalize() first")
    x = hist.tau_centers()
    y = hist.g2
    sigma = _poisson_sigma(hist.counts) * (
        hist.duration_ps / (hist.n_a * hist.n_b * hist.bin_width_ps)
    )

    # Deterministic initializer from the curve shape.
    center = hist.n_half
    g2_0 = float(np.clip(0.5 * (y[center - 1] + y[center]), 0.0, 2.0))
    a0 = float(max(np.max(y) - 1.0, 0.0))
    half = 0.5 * (1.0 + g2_0)
    above = np.nonzero((x > 0) & (y >= half))[0]
    tau1 = float(x[above[0]]) if above.size else hist.max_tau_ps / 20.0
    tau1 = max(tau1, 0.5 * hist.bin_width_ps)
    init = [g2_0, a0, tau1, 8.0 * tau1]

    res = lm_fit(
        g2_three_level, x, y, init, sigma=sigma, jac=g2_three_level_jac,
        param_names=["g2_0", "a", "tau1_ps", "tau2_ps"],
        model_name="g2_three_level",
    )
    res.info["single_photon"] = bool(res.params["g2_0"] < 0.5)
    return res


def rho_from_sb(signal_rate: float, background_rate: float) -> float:
    """Signal fraction rho = S / (S + B) in [0, 1]."""
    if signal_rate < 0 or background_rate < 0:
        raise ValueError("rates must be >= 0")
    total = signal_rate + background_rate
    if total <= 0:
        raise ValueError("S + B must be > 0")
    return signal_rate / total


def correct_background(g2, rho: float):
    """Remove uncorrelated-background dilution:

    g2_corrected(tau) = (g2(tau) - (1 - rho^2)) / rho^2

    Accepts a scalar, an array, or a normalized CorrelationHistogram (whose
    metadata then records rho).  Exact inverse of the mixing map
    g2 -> rho^2 g2 + (1 - rho^2).
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must be in (0, 1]")
    if isinstance(g2, CorrelationHistogram):
        if g2.g2 is None:
            raise ValueError("histogram is not normalized; call normalize() first")
        corrected = (g2.g2 - (1.0 - rho**2)) / rho**2
        return replace(g2, g2=corrected, meta=dict(g2.meta, rho=float(rho)))
    return (np.asarray(g2, dtype=float) - (1.0 - rho**2)) / rho**2


def fit_lifetime(hist: LifetimeHistogram, fit_start_ps: float) -> FitResult:
    """Tail fit of A exp(-t/tau) + C on bins past the pulse region."""
    t = hist.bin_centers()
    mask = t >= fit_start_ps
    if int(mask.sum()) < 10:
        raise ValueError("fewer than 10 bins past fit_start")
    t = t[mask]
    y = hist.counts[mask].astype(float)
    sigma = _poisson_sigma(y)

    n_tail = max(3, y.size // 10)
    offset0 = float(np.mean(y[-n_tail:]))
    amp0 = max(float(y[0] - offset0), 1.0)
    span = float(t[-1] - t[0])
    positive = y - offset0 > 0
    if positive.sum() >= 2:
        # Log-linear slope over the decaying part seeds tau.
        tt, ll = t[positive], np.log(y[positive] - offset0)
        slope = np.polyfit(tt, ll, 1)[0]
        tau0 = -1.0 / slope if slope < 0 else span / 3.0
    else:
        tau0 = span / 3.0
    tau0 = float(np.clip(tau0, hist.bin_width_ps * 0.1, 100.0 * span))
    amp0 = amp0 * np.exp(min(t[0] / tau0, 700.0))

    res = lm_fit(
        exp_decay, t, y, [amp0, tau0, offset0], sigma=sigma, jac=exp_decay_jac,
        param_names=["amplitude", "tau_ps", "offset"], model_name="exp_decay",
    )
    tau = res.params["tau_ps"]
    amp = res.params["amplitude"]
    tau_var = res.covariance[1, 1] if res.covariance is not None else np.inf
    no_decay = abs(amp) <= 1e-6 * max(abs(res.params["offset"]), float(y.max()), 1.0)
    if (not np.isfinite(tau) or tau <= 0 or tau > 50.0 * span
            or not np.isfinite(tau_var) or no_decay):
        res.flags.append("tau unbounded")
    return res


def fit_quenching(temperature_k, intensity) -> FitResult:
    """Fit the thermally activated quenching law to (T, I) points.

    Requires >= 4 points spanning >= 300 K and positive intensities.  The
    initializer is deterministic: I0 from the brightest point, E from the
    intensity range ratio at the mid temperature, A from the hottest point.
    Residuals are weighted relative to I (intensity errors are
    multiplicative, so sigma proportional to I is the maximum-likelihood
    weighting).  A constant series converges with the flag
    ``E unconstrained``.
    """
    T = np.asarray(temperature_k, dtype=float)
    I = np.asarray(intensity, dtype=float)
    if T.size < 4:
        raise ValueError("need at least 4 (T, I) points")
    if T.max() - T.min() < 300.0:
        raise ValueError("temperature span must be >= 300 K")
    if np.any(I <= 0):
        raise ValueError("intensities must be > 0")

    i0 = float(I.max())
    ratio = float(I.max() / I.min())
    t_mid = 0.5 * (T.min() + T.max())
    e0 = K_B_EV * t_mid * np.log(ratio)
    hot = int(np.argmax(T))
    if I[hot] < i0:
        a0 = (i0 / I[hot] - 1.0) * np.exp(min(e0 / (K_B_EV * T[hot]), 700.0))
    else:
        a0 = 0.0

    res = lm_fit(
        quenching_curve, T, I, [i0, a0, e0], sigma=I,
        jac=quenching_curve_jac,
        param_names=["i0", "a", "e_ev"], model_name="quenching",
    )
    a_fit, e_fit = res.params["a"], res.params["e_ev"]
    with np.errstate(all="ignore"):
        depth = a_fit * np.exp(-e_fit / (K_B_EV * T.max()))
    if not np.isfinite(depth) or depth < 1e-2:
        res.flags.append("E unconstrained")
    return res


def fit_linear(x, y) -> FitResult:
    """Ordinary least-squares line; slope is in y-units per x-unit."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least 2 points")
    if np.ptp(x) == 0:
        raise ValueError("degenerate x: all abscissae equal")
    X = np.stack([x, np.ones_like(x)], axis=-1)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    rss = float(resid @ resid)
    dof = max(x.size - 2, 1)
    cov = np.linalg.inv(X.T @ X) * (rss / dof if x.size > 2 else 0.0)
    return FitResult(
        model="linear",
        params={"slope": float(beta[0]), "intercept": float(beta[1])},
        covariance=cov,
        residual_norm=float(np.sqrt(rss)),
        converged=True,
        iterations=0,
    )
