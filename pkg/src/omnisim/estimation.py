"""Two-part grey-box calibration.

Part A: ordinary least squares on steady-state (speed, voltage) samples of
an unloaded motor recovers the viscous and Coulomb friction through the
coefficient map of the steady-state voltage line.

Part B: the controller gains and then the body yaw inertia are fitted by
minimizing the mean squared error between a measured velocity log and the
simulator's response to the same excitation, using RPROP (sign-based
per-parameter steps, Riedmiller & Braun 1993, RPROP- variant) or plain
steepest descent. Gradients come from finite differences through the full
simulation, so Coulomb and saturation kinks only ever flip a sign.
"""

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import SimConfig, simulate
from .signals import ResponseLog, profile_from_log

GAIN_BOUNDS = ((0.0, 10.0), (0.0, 10.0), (0.0, 10.0))
INERTIA_BOUNDS = ((0.1, 5.0),)

_SUPPLY_LIMIT_V = 24.0


class DegenerateSamplesError(ValueError):
    """Sample set cannot support a line fit (fewer than two distinct speeds)."""


@dataclass(frozen=True)
class SteadySample:
    """One steady-state point of an unloaded motor: shaft speed vs voltage."""

    omega_shaft: float
    voltage: float
    wheel_id: int = 0
    essay_id: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.omega_shaft) and math.isfinite(self.voltage)):
            raise ValueError("sample values must be finite")
        if abs(self.voltage) > _SUPPLY_LIMIT_V:
            raise ValueError(f"|voltage| exceeds the {_SUPPLY_LIMIT_V} V supply range")


@dataclass(frozen=True)
class FrictionFit:
    slope: float
    intercept: float
    b_viscous: float
    f_coulomb: float
    residual_rms: float


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "rprop"
    eta_plus: float = 1.2
    eta_minus: float = 0.5
    delta0: float = 0.1
    delta_min: float = 1e-8
    delta_max: float = 1.0
    learning_rate: float = 0.1
    fd_epsilon: float = 1e-6
    max_iters: int = 300
    cost_tol: float = 1e-12
    param_tol: float = 1e-9

    def __post_init__(self):
        if self.method not in ("rprop", "steepest_descent"):
            raise ValueError(f"unknown method {self.method!r}")
        if not 0.0 < self.eta_minus < 1.0 < self.eta_plus:
            raise ValueError("require 0 < eta_minus < 1 < eta_plus")
        if not self.delta_min <= self.delta0 <= self.delta_max:
            raise ValueError("require delta_min <= delta0 <= delta_max")
        if not self.learning_rate > 0.0:
            raise ValueError("learning_rate must be > 0")
        for name in ("fd_epsilon", "cost_tol", "param_tol"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


@dataclass
class FitResult:
    """Outcome of a minimization run.

    cost_history holds the best cost seen up to each iteration (entry 0 is
    the starting cost), so it is non-increasing; params is the best-seen
    point, not necessarily the last iterate.
    """

    params: dict
    final_cost: float
    iterations: int
    converged: bool
    cost_history: list = field(repr=False)


def fit_friction(samples, motor_consts) -> FrictionFit:
    """OLS line u = a*omega + b over pooled samples, inverted to (B_v, F_c).

    motor_consts is (R_i, K_t). B_v = (a - K_t)*K_t/R_i and
    F_c = b*K_t/R_i. Warns when the slope is at or below K_t, which would
    mean negative viscous friction.
    """
    ri, kt = motor_consts
    if len(samples) < 2:
        raise DegenerateSamplesError("need at least two samples")
    w = np.array([s.omega_shaft for s in samples], dtype=float)
    u = np.array([s.voltage for s in samples], dtype=float)
    if float(np.ptp(w)) < 1e-12:
        raise DegenerateSamplesError("all samples share the same shaft speed")
    slope, intercept = (float(c) for c in np.polyfit(w, u, 1))
    resid = u - (slope * w + intercept)
    rms = float(np.sqrt(np.mean(resid * resid)))
    if slope <= kt:
        warnings.warn(
            f"fitted slope {slope:.6g} <= K_t {kt:.6g}: negative viscous friction",
            RuntimeWarning,
            stacklevel=2,
        )
    return FrictionFit(
        slope=slope,
        intercept=intercept,
        b_viscous=(slope - kt) * kt / ri,
        f_coulomb=intercept * kt / ri,
        residual_rms=rms,
    )


def mse_cost(simulated, measured) -> float:
    """Mean squared error (1/n) * sum((sim_i - meas_i)^2)."""
    a = np.asarray(simulated, dtype=float)
    b = np.asarray(measured, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"series length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("series must contain at least one sample")
    d = a - b
    return float(np.mean(d * d))


def _checked_cost(cost_fn, p, context="cost"):
    c = float(cost_fn(np.asarray(p, dtype=float)))
    if not math.isfinite(c):
        raise ValueError(f"non-finite {context} at parameters {np.asarray(p)}")
    return c


def finite_diff_gradient(cost_fn, p, cfg: OptimizerConfig, scales=None, bounds=None) -> np.ndarray:
    """Central-difference gradient with per-parameter steps fd_epsilon*max(|p_k|, scale_k).

    Falls back to one-sided differences where a perturbation would leave
    the given bounds.
    """
    p = np.asarray(p, dtype=float)
    n = p.size
    scales = np.ones(n) if scales is None else np.asarray(scales, dtype=float)
    g = np.empty(n)
    center = None
    for k in range(n):
        h = cfg.fd_epsilon * max(abs(p[k]), scales[k])
        lo, hi = (-math.inf, math.inf) if bounds is None else bounds[k]
        up_ok = p[k] + h <= hi
        dn_ok = p[k] - h >= lo
        if not (up_ok or dn_ok):
            g[k] = 0.0
            continue
        try:
            if up_ok and dn_ok:
                pk = p.copy()
                pk[k] += h
                c_up = _checked_cost(cost_fn, pk)
                pk[k] = p[k] - h
                c_dn = _checked_cost(cost_fn, pk)
                g[k] = (c_up - c_dn) / (2.0 * h)
            else:
                if center is None:
                    center = _checked_cost(cost_fn, p)
                pk = p.copy()
                if up_ok:
                    pk[k] += h
                    g[k] = (_checked_cost(cost_fn, pk) - center) / h
                else:
                    pk[k] -= h
                    g[k] = (center - _checked_cost(cost_fn, pk)) / h
        except ValueError as exc:
            raise ValueError(f"gradient evaluation failed for parameter {k}: {exc}") from exc
    return g


def _prepare(p0, bounds, scales):
    p = np.asarray(p0, dtype=float).copy()
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    if np.any(p < lo) or np.any(p > hi):
        raise ValueError(f"p0 {p} outside bounds")
    scales = np.ones_like(p) if scales is None else np.asarray(scales, dtype=float)
    return p, lo, hi, scales


def _result(names, best_p, best_cost, iterations, converged, history):
    names = tuple(names) if names is not None else tuple(f"p{k}" for k in range(best_p.size))
    params = {name: float(val) for name, val in zip(names, best_p)}
    return FitResult(
        params=params,
        final_cost=float(best_cost),
        iterations=iterations,
        converged=converged,
        cost_history=history,
    )


def rprop_minimize(cost_fn, p0, bounds, cfg: OptimizerConfig, scales=None, names=None) -> FitResult:
    """RPROP- minimization with bound clamping.

    Per-parameter step sizes grow by eta_plus while the gradient sign
    holds and shrink by eta_minus when it flips; the update is always
    -sign(g)*delta (no weight-backtracking). Stops on max_iters, on the
    best cost reaching cost_tol, or when an update moves no parameter by
    more than param_tol.
    """
    p, lo, hi, scales = _prepare(p0, bounds, scales)
    bounds_list = list(zip(lo, hi))
    delta = cfg.delta0 * scales.copy()
    dmin = cfg.delta_min * scales
    dmax = cfg.delta_max * scales
    cost = _checked_cost(cost_fn, p)
    best_cost = cost
    best_p = p.copy()
    history = [cost]
    prev_g = np.zeros_like(p)
    iterations = 0
    converged = best_cost <= cfg.cost_tol
    while not converged and iterations < cfg.max_iters:
        g = finite_diff_gradient(cost_fn, p, cfg, scales=scales, bounds=bounds_list)
        prod = g * prev_g
        grow = prod > 0.0
        shrink = prod < 0.0
        delta[grow] = np.minimum(delta[grow] * cfg.eta_plus, dmax[grow])
        delta[shrink] = np.maximum(delta[shrink] * cfg.eta_minus, dmin[shrink])
        p_new = np.clip(p - np.sign(g) * delta, lo, hi)
        moved = float(np.max(np.abs(p_new - p)))
        p = p_new
        prev_g = g
        cost = _checked_cost(cost_fn, p)
        if cost < best_cost:
            best_cost = cost
            best_p = p.copy()
        history.append(best_cost)
        iterations += 1
        if best_cost <= cfg.cost_tol or moved <= cfg.param_tol:
            converged = True
    return _result(names, best_p, best_cost, iterations, converged, history)


def steepest_descent_minimize(cost_fn, p0, bounds, cfg: OptimizerConfig, scales=None, names=None) -> FitResult:
    """Fixed-rate gradient descent; the rate is halved within a step while it increases cost."""
    p, lo, hi, scales = _prepare(p0, bounds, scales)
    bounds_list = list(zip(lo, hi))
    cost = _checked_cost(cost_fn, p)
    best_cost = cost
    best_p = p.copy()
    history = [cost]
    iterations = 0
    converged = best_cost <= cfg.cost_tol
    while not converged and iterations < cfg.max_iters:
        g = finite_diff_gradient(cost_fn, p, cfg, scales=scales, bounds=bounds_list)
        if float(np.max(np.abs(g))) == 0.0:
            converged = True
            break
        alpha = cfg.learning_rate
        accepted = False
        for _ in range(40):
            p_try = np.clip(p - alpha * g, lo, hi)
            c_try = _checked_cost(cost_fn, p_try)
            if c_try <= cost:
                accepted = True
                break
            alpha *= 0.5
        iterations += 1
        if not accepted:
            history.append(best_cost)
            converged = True
            break
        moved = float(np.max(np.abs(p_try - p)))
        p = p_try
        cost = c_try
        if cost < best_cost:
            best_cost = cost
            best_p = p.copy()
        history.append(best_cost)
        if best_cost <= cfg.cost_tol or moved <= cfg.param_tol:
            converged = True
    return _result(names, best_p, best_cost, iterations, converged, history)


def _minimize(opt: OptimizerConfig, cost_fn, p0, bounds, scales, names):
    if opt.method == "steepest_descent":
        return steepest_descent_minimize(cost_fn, p0, bounds, opt, scales=scales, names=names)
    return rprop_minimize(cost_fn, p0, bounds, opt, scales=scales, names=names)


def _fit_profile(measured: ResponseLog, cfg: SimConfig):
    if len(measured) < 2:
        raise ValueError("measured log must contain at least 2 samples")
    if abs(measured.sample_period_s - cfg.control_dt_s) > 1e-9:
        raise ValueError(
            f"log sample period {measured.sample_period_s} does not match "
            f"control period {cfg.control_dt_s}"
        )
    return profile_from_log(measured)


def stage1_fit_gains(measured: ResponseLog, cfg: SimConfig, opt: OptimizerConfig) -> FitResult:
    """Fit (kp, ki, kd) so the simulated yaw-rate response matches the log.

    The excitation is rebuilt from the log's reference columns; all
    physical parameters stay at their cfg values and cfg.gains is the
    starting point.
    """
    profile = _fit_profile(measured, cfg)
    w_meas = np.array(measured.w, dtype=float)
    duration = profile.total_duration_s

    def cost_fn(p):
        kp, ki, kd = (float(x) for x in p)
        trial = replace(cfg, gains=replace(cfg.gains, kp=kp, ki=ki, kd=kd), duration_s=duration)
        return mse_cost(simulate(trial, profile).w, w_meas)

    p0 = np.array([cfg.gains.kp, cfg.gains.ki, cfg.gains.kd])
    scales = np.maximum(np.abs(p0), 1e-3)
    return _minimize(opt, cost_fn, p0, GAIN_BOUNDS, scales, ("kp", "ki", "kd"))


def stage2_fit_inertia(measured: ResponseLog, cfg: SimConfig, opt: OptimizerConfig) -> FitResult:
    """Fit the body yaw inertia j_z with the (stage-1) gains held fixed."""
    profile = _fit_profile(measured, cfg)
    w_meas = np.array(measured.w, dtype=float)
    duration = profile.total_duration_s

    def cost_fn(p):
        trial = replace(cfg, body=replace(cfg.body, j_z=float(p[0])), duration_s=duration)
        return mse_cost(simulate(trial, profile).w, w_meas)

    p0 = np.array([cfg.body.j_z])
    scales = np.array([max(abs(cfg.body.j_z), 0.1)])
    return _minimize(opt, cost_fn, p0, INERTIA_BOUNDS, scales, ("j_z",))
