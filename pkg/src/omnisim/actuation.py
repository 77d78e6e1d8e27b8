"""DC motor + gearbox + wheel assembly, discrete PID and reference limiter.

The motor uses the steady-state electrical model u = R*i + Ke*w together
with the mechanical balance J*dw/dt = Kt*i - Bv*w - Fc*sign(w). All
quantities are referred to the gearbox output shaft. Ke equals Kt in SI
units, so a single k_torque constant serves both roles.
"""

import math
from dataclasses import dataclass


class VoltageRangeError(ValueError):
    """Requested voltage exceeds the supply limit."""


@dataclass(frozen=True)
class MotorParams:
    """Electrical and mechanical constants of one motor set.

    j_reflected is the lumped inertia of motor + gearbox + wheel at the
    output shaft; it only matters for the isolated motor simulation (the
    robot-level model slaves the wheels to the body).
    """

    r_internal_ohm: float = 0.317
    k_torque: float = 0.0302
    b_viscous: float = 0.0324
    f_coulomb: float = 0.036735
    u_max_volts: float = 24.0
    j_reflected: float = 1e-3

    def __post_init__(self):
        if not self.r_internal_ohm > 0.0:
            raise ValueError("r_internal_ohm must be > 0")
        if not self.k_torque > 0.0:
            raise ValueError("k_torque must be > 0")
        if self.b_viscous < 0.0:
            raise ValueError("b_viscous must be >= 0")
        if self.f_coulomb < 0.0:
            raise ValueError("f_coulomb must be >= 0")
        if not self.u_max_volts > 0.0:
            raise ValueError("u_max_volts must be > 0")
        if not self.j_reflected > 0.0:
            raise ValueError("j_reflected must be > 0")


@dataclass(frozen=True)
class MotorState:
    omega_shaft: float = 0.0
    current: float = 0.0
    voltage_applied: float = 0.0


@dataclass(frozen=True)
class PidGains:
    """Gains of the ideal-form controller kp + ki/s + kd*s, discretised at period_s."""

    kp: float
    ki: float
    kd: float = 0.0
    period_s: float = 0.04
    u_limit: float = 24.0
    integral_limit: float = math.inf

    def __post_init__(self):
        if self.kp < 0.0 or self.ki < 0.0 or self.kd < 0.0:
            raise ValueError("gains must be >= 0")
        if not self.period_s > 0.0:
            raise ValueError("period_s must be > 0")
        if not self.u_limit > 0.0:
            raise ValueError("u_limit must be > 0")


@dataclass(frozen=True)
class PidState:
    integral_accum: float = 0.0
    prev_error: float = 0.0


@dataclass(frozen=True)
class AccelLimiter:
    """Slope limiter applied to wheel-shaft speed references."""

    max_accel_rad_s2: float = 61.09
    current_ref: float = 0.0

    def __post_init__(self):
        if not self.max_accel_rad_s2 > 0.0:
            raise ValueError("max_accel_rad_s2 must be > 0")


def motor_current(params: MotorParams, u: float, omega: float) -> float:
    """Armature current at applied voltage u and shaft speed omega.

    Raises VoltageRangeError if |u| exceeds the supply limit.
    """
    if abs(u) > params.u_max_volts:
        raise VoltageRangeError(
            f"|u|={abs(u):.3f} V exceeds supply limit {params.u_max_volts} V"
        )
    return (u - params.k_torque * omega) / params.r_internal_ohm


def motor_torque(params: MotorParams, i: float, omega: float) -> float:
    """Net shaft torque: Kt*i minus viscous and Coulomb friction.

    At omega == 0 the shaft is held by static friction: if the drive
    torque Kt*i does not exceed f_coulomb the net torque is zero,
    otherwise the excess over the Coulomb level acts. This avoids the
    sign-chatter a raw sign(omega) term produces around rest.
    """
    drive = params.k_torque * i
    if omega == 0.0:
        if abs(drive) <= params.f_coulomb:
            return 0.0
        return drive - math.copysign(params.f_coulomb, drive)
    return drive - params.b_viscous * omega - math.copysign(params.f_coulomb, omega)


def steady_state_voltage(params: MotorParams, omega: float) -> float:
    """Voltage that holds the unloaded shaft at omega in steady state.

    u = (R*Bv/Kt + Kt)*omega + R*Fc/Kt for omega >= 0, extended to
    negative speeds by odd symmetry of the friction terms.
    """
    slope = (
        params.r_internal_ohm * params.b_viscous / params.k_torque + params.k_torque
    )
    intercept = params.r_internal_ohm * params.f_coulomb / params.k_torque
    if omega < 0.0:
        return slope * omega - intercept
    if omega == 0.0:
        return intercept
    return slope * omega + intercept


def motor_step(params: MotorParams, state: MotorState, u: float, dt: float) -> MotorState:
    """Advance the isolated motor one explicit-Euler step of length dt.

    The applied voltage is clamped to the supply limit and recorded. A
    shaft that would be reversed through zero by friction alone (drive
    torque below the Coulomb level) stops exactly at zero instead.
    """
    if not dt > 0.0:
        raise ValueError("dt must be > 0")
    u = min(max(u, -params.u_max_volts), params.u_max_volts)
    w = state.omega_shaft
    i = (u - params.k_torque * w) / params.r_internal_ohm
    tau = motor_torque(params, i, w)
    w_new = w + dt * tau / params.j_reflected
    if w != 0.0 and w_new * w < 0.0:
        stall_drive = params.k_torque * u / params.r_internal_ohm
        if abs(stall_drive) <= params.f_coulomb:
            w_new = 0.0
    return MotorState(omega_shaft=w_new, current=i, voltage_applied=u)


def pid_step(gains: PidGains, state: PidState, ref: float, meas: float):
    """One controller tick; returns (u, new PidState).

    The integral is accumulated first (clamped to integral_limit), then
    u = kp*e + ki*integral + kd*(e - prev_e)/T is saturated to u_limit.
    If the output saturates while the error pushes the same direction the
    integral update is revoked (conditional anti-windup).
    """
    e = ref - meas
    t = gains.period_s
    integral = state.integral_accum + e * t
    lim = gains.integral_limit
    integral = min(max(integral, -lim), lim)
    u_raw = gains.kp * e + gains.ki * integral + gains.kd * (e - state.prev_error) / t
    u = min(max(u_raw, -gains.u_limit), gains.u_limit)
    if u != u_raw and u_raw * e > 0.0:
        integral = state.integral_accum
    return u, PidState(integral_accum=integral, prev_error=e)


def limit_reference(lim: AccelLimiter, target: float, dt: float):
    """Move the emitted reference toward target by at most max_accel*dt.

    Returns (emitted_ref, new AccelLimiter).
    """
    if not dt > 0.0:
        raise ValueError("dt must be > 0")
    max_step = lim.max_accel_rad_s2 * dt
    delta = target - lim.current_ref
    if delta > max_step:
        delta = max_step
    elif delta < -max_step:
        delta = -max_step
    new_ref = lim.current_ref + delta
    return new_ref, AccelLimiter(lim.max_accel_rad_s2, new_ref)
