"""Full-robot simulation: three controlled wheels driving a planar rigid body.

One robot_step spans one controller period: the body-velocity reference is
distributed to wheel-shaft references, slope-limited, fed to the per-wheel
PID controllers, and the resulting voltages are held while the motor and
body dynamics integrate forward with explicit Euler at the physics step.
Wheel shaft speeds are slaved to the body velocity throughout (no slip).
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .actuation import AccelLimiter, MotorParams, MotorState, PidGains, PidState, limit_reference, pid_step
from .kinematics import BodyVelocity, Pose, RobotGeometry, body_to_wheels, kinematic_matrix, normalize_angle
from .signals import ExcitationProfile, ResponseLog, reference_at

_TWO_PI = 2.0 * math.pi


class NonFiniteStateError(RuntimeError):
    """Simulation state became non-finite (diverged)."""


@dataclass(frozen=True)
class BodyParams:
    mass_kg: float = 26.2
    j_z: float = 0.705
    include_coriolis: bool = False

    def __post_init__(self):
        if not self.mass_kg > 0.0:
            raise ValueError("mass_kg must be > 0")
        if not self.j_z > 0.0:
            raise ValueError("j_z must be > 0")


@dataclass(frozen=True)
class SimConfig:
    geometry: RobotGeometry
    body: BodyParams
    motor: MotorParams
    gains: PidGains
    physics_dt_s: float = 0.001
    control_dt_s: float = 0.04
    duration_s: float = 12.0
    accel_limit_rad_s2: float = 61.09
    encoder_quantization: bool = False
    encoder_ppr: int = 256

    def __post_init__(self):
        if not self.physics_dt_s > 0.0:
            raise ValueError("physics_dt_s must be > 0")
        ratio = self.control_dt_s / self.physics_dt_s
        if ratio < 1.0 - 1e-9 or abs(ratio - round(ratio)) > 1e-6:
            raise ValueError("control_dt_s must be an integer multiple of physics_dt_s")
        if not self.duration_s > 0.0:
            raise ValueError("duration_s must be > 0")
        if not self.accel_limit_rad_s2 > 0.0:
            raise ValueError("accel_limit_rad_s2 must be > 0")
        if abs(self.gains.period_s - self.control_dt_s) > 1e-12:
            raise ValueError("gains.period_s must equal control_dt_s")

    @property
    def substeps(self) -> int:
        return int(round(self.control_dt_s / self.physics_dt_s))


@dataclass(frozen=True)
class RobotState:
    pose: Pose
    body_vel: BodyVelocity
    motors: tuple
    pids: tuple
    limiters: tuple


@lru_cache(maxsize=32)
def _matrix_entries(geom: RobotGeometry):
    return tuple(float(x) for x in kinematic_matrix(geom).ravel())


def initial_state(cfg: SimConfig, body_vel: BodyVelocity = BodyVelocity(), pose: Pose = Pose()) -> RobotState:
    """State with wheel speeds and limiter references consistent with body_vel."""
    wheels = body_to_wheels(cfg.geometry, body_vel)
    inv_r = 1.0 / cfg.geometry.wheel_radius_m
    shafts = (wheels.v1 * inv_r, wheels.v2 * inv_r, wheels.v3 * inv_r)
    return RobotState(
        pose=pose,
        body_vel=body_vel,
        motors=tuple(MotorState(omega_shaft=s) for s in shafts),
        pids=(PidState(), PidState(), PidState()),
        limiters=tuple(AccelLimiter(cfg.accel_limit_rad_s2, s) for s in shafts),
    )


def kinetic_energy(cfg: SimConfig, state: RobotState) -> float:
    bv = state.body_vel
    return 0.5 * cfg.body.mass_kg * (bv.v * bv.v + bv.vn * bv.vn) + 0.5 * cfg.body.j_z * bv.omega * bv.omega


def _substep(ent, inv_r, mass, jz, coriolis, kt, ri, bv, fc, dt, v, vn, w, x, y, th, u1, u2, u3):
    """One explicit-Euler physics step on plain floats; returns the new state tuple.

    Uses the same per-wheel torque rule as actuation.motor_torque. When no
    wheel drive exceeds Coulomb friction and the step fails to dissipate
    kinetic energy (or every wheel shaft crosses zero) the body velocity
    snaps to exact rest, so Coulomb friction never chatters around zero.
    """
    a11, a12, a13, a21, a22, a23, a31, a32, a33 = ent
    w1 = (a11 * v + a12 * vn + a13 * w) * inv_r
    w2 = (a21 * v + a22 * vn + a23 * w) * inv_r
    w3 = (a31 * v + a32 * vn + a33 * w) * inv_r
    i1 = (u1 - kt * w1) / ri
    i2 = (u2 - kt * w2) / ri
    i3 = (u3 - kt * w3) / ri
    d1 = kt * i1
    d2 = kt * i2
    d3 = kt * i3
    if w1 == 0.0:
        t1 = 0.0 if abs(d1) <= fc else d1 - math.copysign(fc, d1)
    else:
        t1 = d1 - bv * w1 - math.copysign(fc, w1)
    if w2 == 0.0:
        t2 = 0.0 if abs(d2) <= fc else d2 - math.copysign(fc, d2)
    else:
        t2 = d2 - bv * w2 - math.copysign(fc, w2)
    if w3 == 0.0:
        t3 = 0.0 if abs(d3) <= fc else d3 - math.copysign(fc, d3)
    else:
        t3 = d3 - bv * w3 - math.copysign(fc, w3)
    f1 = t1 * inv_r
    f2 = t2 * inv_r
    f3 = t3 * inv_r
    av = (a11 * f1 + a21 * f2 + a31 * f3) / mass
    avn = (a12 * f1 + a22 * f2 + a32 * f3) / mass
    aw = (a13 * f1 + a23 * f2 + a33 * f3) / jz
    if coriolis:
        av += w * vn
        avn -= w * v
    v_new = v + dt * av
    vn_new = vn + dt * avn
    w_new = w + dt * aw
    if abs(d1) <= fc and abs(d2) <= fc and abs(d3) <= fc:
        ke_old = mass * (v * v + vn * vn) + jz * w * w
        ke_new = mass * (v_new * v_new + vn_new * vn_new) + jz * w_new * w_new
        if ke_new >= ke_old:
            v_new = vn_new = w_new = 0.0
        else:
            n1 = a11 * v_new + a12 * vn_new + a13 * w_new
            n2 = a21 * v_new + a22 * vn_new + a23 * w_new
            n3 = a31 * v_new + a32 * vn_new + a33 * w_new
            if n1 * w1 <= 0.0 and n2 * w2 <= 0.0 and n3 * w3 <= 0.0:
                v_new = vn_new = w_new = 0.0
    cth = math.cos(th)
    sth = math.sin(th)
    x = x + dt * (v * cth - vn * sth)
    y = y + dt * (v * sth + vn * cth)
    th = normalize_angle(th + dt * w)
    return v_new, vn_new, w_new, x, y, th, i1, i2, i3


def _quantized(cfg: SimConfig, omega_shaft: float) -> float:
    counts_per_rev = cfg.encoder_ppr * 4.0 * cfg.geometry.gear_ratio
    scale = counts_per_rev * cfg.control_dt_s / _TWO_PI
    return round(omega_shaft * scale) / scale


def robot_step(cfg: SimConfig, state: RobotState, body_ref: BodyVelocity) -> RobotState:
    """Advance the robot one control period under the given body reference."""
    geom = cfg.geometry
    ent = _matrix_entries(geom)
    a11, a12, a13, a21, a22, a23, a31, a32, a33 = ent
    inv_r = 1.0 / geom.wheel_radius_m
    rv, rvn, rw = body_ref.v, body_ref.vn, body_ref.omega
    shaft_ref1 = (a11 * rv + a12 * rvn + a13 * rw) * inv_r
    shaft_ref2 = (a21 * rv + a22 * rvn + a23 * rw) * inv_r
    shaft_ref3 = (a31 * rv + a32 * rvn + a33 * rw) * inv_r

    tdt = cfg.control_dt_s
    ref1, lim1 = limit_reference(state.limiters[0], shaft_ref1, tdt)
    ref2, lim2 = limit_reference(state.limiters[1], shaft_ref2, tdt)
    ref3, lim3 = limit_reference(state.limiters[2], shaft_ref3, tdt)

    m1, m2, m3 = state.motors
    if cfg.encoder_quantization:
        meas1 = _quantized(cfg, m1.omega_shaft)
        meas2 = _quantized(cfg, m2.omega_shaft)
        meas3 = _quantized(cfg, m3.omega_shaft)
    else:
        meas1, meas2, meas3 = m1.omega_shaft, m2.omega_shaft, m3.omega_shaft

    gains = cfg.gains
    u1, pid1 = pid_step(gains, state.pids[0], ref1, meas1)
    u2, pid2 = pid_step(gains, state.pids[1], ref2, meas2)
    u3, pid3 = pid_step(gains, state.pids[2], ref3, meas3)
    u_max = cfg.motor.u_max_volts
    u1 = min(max(u1, -u_max), u_max)
    u2 = min(max(u2, -u_max), u_max)
    u3 = min(max(u3, -u_max), u_max)

    motor = cfg.motor
    body = cfg.body
    v, vn, w = state.body_vel.v, state.body_vel.vn, state.body_vel.omega
    x, y, th = state.pose.x, state.pose.y, state.pose.theta
    i1 = i2 = i3 = 0.0
    dt = cfg.physics_dt_s
    for _ in range(cfg.substeps):
        v, vn, w, x, y, th, i1, i2, i3 = _substep(
            ent, inv_r, body.mass_kg, body.j_z, body.include_coriolis,
            motor.k_torque, motor.r_internal_ohm, motor.b_viscous,
            motor.f_coulomb, dt, v, vn, w, x, y, th, u1, u2, u3,
        )

    if not (math.isfinite(v) and math.isfinite(vn) and math.isfinite(w)
            and math.isfinite(x) and math.isfinite(y) and math.isfinite(th)):
        raise NonFiniteStateError(
            f"non-finite state: v={v}, vn={vn}, w={w}, x={x}, y={y}, theta={th}"
        )

    w1 = (a11 * v + a12 * vn + a13 * w) * inv_r
    w2 = (a21 * v + a22 * vn + a23 * w) * inv_r
    w3 = (a31 * v + a32 * vn + a33 * w) * inv_r
    return RobotState(
        pose=Pose(x, y, th),
        body_vel=BodyVelocity(v, vn, w),
        motors=(
            MotorState(w1, i1, u1),
            MotorState(w2, i2, u2),
            MotorState(w3, i3, u3),
        ),
        pids=(pid1, pid2, pid3),
        limiters=(lim1, lim2, lim3),
    )


def open_loop_step(cfg: SimConfig, state: RobotState, voltages) -> RobotState:
    """One physics step with voltages forced directly on the motors.

    Bypasses limiters and controllers (their states are carried along
    unchanged); voltages are clamped to the supply limit and recorded.
    """
    geom = cfg.geometry
    ent = _matrix_entries(geom)
    a11, a12, a13, a21, a22, a23, a31, a32, a33 = ent
    inv_r = 1.0 / geom.wheel_radius_m
    u_max = cfg.motor.u_max_volts
    u1, u2, u3 = (min(max(float(u), -u_max), u_max) for u in voltages)
    motor = cfg.motor
    body = cfg.body
    v, vn, w = state.body_vel.v, state.body_vel.vn, state.body_vel.omega
    x, y, th = state.pose.x, state.pose.y, state.pose.theta
    v, vn, w, x, y, th, i1, i2, i3 = _substep(
        ent, inv_r, body.mass_kg, body.j_z, body.include_coriolis,
        motor.k_torque, motor.r_internal_ohm, motor.b_viscous,
        motor.f_coulomb, cfg.physics_dt_s, v, vn, w, x, y, th, u1, u2, u3,
    )
    if not (math.isfinite(v) and math.isfinite(vn) and math.isfinite(w)):
        raise NonFiniteStateError(f"non-finite state: v={v}, vn={vn}, w={w}")
    w1 = (a11 * v + a12 * vn + a13 * w) * inv_r
    w2 = (a21 * v + a22 * vn + a23 * w) * inv_r
    w3 = (a31 * v + a32 * vn + a33 * w) * inv_r
    return RobotState(
        pose=Pose(x, y, th),
        body_vel=BodyVelocity(v, vn, w),
        motors=(MotorState(w1, i1, u1), MotorState(w2, i2, u2), MotorState(w3, i3, u3)),
        pids=state.pids,
        limiters=state.limiters,
    )


def simulate(cfg: SimConfig, profile: ExcitationProfile, start: RobotState = None) -> ResponseLog:
    """Run the closed-loop robot over cfg.duration_s, logging at the control period.

    References come from the profile; past its end the last segment's
    reference is held. Identical inputs produce bit-identical logs.
    """
    period = cfg.control_dt_s
    n = int(math.floor(cfg.duration_s / period + 1e-9))
    total = profile.total_duration_s
    state = initial_state(cfg) if start is None else start
    rows = np.empty((n + 1, 13))

    def ref_at(t):
        if t < total:
            return reference_at(profile, t)
        return profile.final_reference

    for k in range(n):
        t = k * period
        ref = ref_at(t)
        try:
            new_state = robot_step(cfg, state, ref)
        except NonFiniteStateError as exc:
            raise NonFiniteStateError(
                f"simulation diverged at control step {k} (t={t:.6g} s): {exc}"
            ) from exc
        bv = state.body_vel
        ms = state.motors
        nm = new_state.motors
        rows[k] = (
            t, ref.v, ref.vn, ref.omega,
            bv.v, bv.vn, bv.omega,
            ms[0].omega_shaft, ms[1].omega_shaft, ms[2].omega_shaft,
            nm[0].voltage_applied, nm[1].voltage_applied, nm[2].voltage_applied,
        )
        state = new_state

    t = n * period
    ref = ref_at(t)
    bv = state.body_vel
    ms = state.motors
    rows[n] = (
        t, ref.v, ref.vn, ref.omega,
        bv.v, bv.vn, bv.omega,
        ms[0].omega_shaft, ms[1].omega_shaft, ms[2].omega_shaft,
        ms[0].voltage_applied, ms[1].voltage_applied, ms[2].voltage_applied,
    )
    return ResponseLog(period, rows)
