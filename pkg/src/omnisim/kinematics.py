"""Velocity transforms between the robot body frame and the three wheels.

The robot carries three omnidirectional wheels spaced 120 degrees apart at
a distance d from the geometric centre. Body velocity is (v, vn, omega):
forward speed, orthogonal speed and yaw rate. Wheel speeds are the linear
rim speeds in m/s; dividing by the wheel radius gives the output-shaft
angular speed.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

_DET_EPS = 1e-9

# Wheel placement angles (rad) from the forward axis, CCW. The driving
# direction of each wheel is the CCW tangent at its mount point, so row i
# of the kinematic matrix is [-sin(a_i), cos(a_i), d]. This layout puts
# wheel 1 front-right, wheel 2 front-left, wheel 3 at the rear.
DEFAULT_WHEEL_ANGLES = (-math.pi / 3.0, math.pi / 3.0, math.pi)


class SingularGeometryError(ValueError):
    """The kinematic matrix of this wheel layout is not invertible."""


@dataclass(frozen=True)
class RobotGeometry:
    """Wheel layout and gearing of the robot.

    Attributes:
        wheel_distance_m: distance d from the centre to each wheel (m).
        wheel_radius_m: wheel radius (m).
        gear_ratio: motor-to-wheel reduction, >= 1.
        wheel_angles_rad: placement angle of each wheel from the forward
            axis (rad). Defaults give the standard 120 degree layout.
    """

    wheel_distance_m: float = 0.195
    wheel_radius_m: float = 0.0513
    gear_ratio: float = 12.0
    wheel_angles_rad: tuple = DEFAULT_WHEEL_ANGLES

    def __post_init__(self):
        if not self.wheel_distance_m > 0.0:
            raise ValueError("wheel_distance_m must be > 0")
        if not self.wheel_radius_m > 0.0:
            raise ValueError("wheel_radius_m must be > 0")
        if not self.gear_ratio >= 1.0:
            raise ValueError("gear_ratio must be >= 1")
        if len(self.wheel_angles_rad) != 3:
            raise ValueError("expected exactly three wheel angles")
        det = float(np.linalg.det(kinematic_matrix(self)))
        if abs(det) <= _DET_EPS:
            raise SingularGeometryError(
                f"kinematic matrix is singular (det={det:.3e}) for wheel "
                f"angles {self.wheel_angles_rad}"
            )


@dataclass(frozen=True)
class BodyVelocity:
    """Body-frame velocity: forward v (m/s), orthogonal vn (m/s), yaw omega (rad/s)."""

    v: float = 0.0
    vn: float = 0.0
    omega: float = 0.0


@dataclass(frozen=True)
class WheelSpeeds:
    """Linear rim speeds of the three wheels (m/s)."""

    v1: float
    v2: float
    v3: float


@dataclass(frozen=True)
class Pose:
    """Global-frame pose; theta is kept in (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    r = math.fmod(theta + math.pi, 2.0 * math.pi)
    if r <= 0.0:
        r += 2.0 * math.pi
    return r - math.pi


def kinematic_matrix(geom: RobotGeometry) -> np.ndarray:
    """3x3 map from body velocity (v, vn, omega) to wheel rim speeds."""
    d = geom.wheel_distance_m
    return np.array(
        [[-math.sin(a), math.cos(a), d] for a in geom.wheel_angles_rad]
    )


@lru_cache(maxsize=32)
def inverse_kinematic_matrix(geom: RobotGeometry) -> np.ndarray:
    """Closed-form inverse of the kinematic matrix, cached per geometry."""
    m = kinematic_matrix(geom)
    det = float(np.linalg.det(m))
    if abs(det) <= _DET_EPS:
        raise SingularGeometryError(f"kinematic matrix is singular (det={det:.3e})")
    return np.linalg.inv(m)


def body_to_wheels(geom: RobotGeometry, body: BodyVelocity) -> WheelSpeeds:
    """Distribute a body velocity onto the three wheel rims.

    Row i evaluates -sin(a_i)*v + cos(a_i)*vn + d*omega; with the default
    angles this is the familiar
        v1 =  sin(pi/3)*v + cos(pi/3)*vn + d*omega
        v2 = -sin(pi/3)*v + cos(pi/3)*vn + d*omega
        v3 =           -vn + d*omega
    """
    m = kinematic_matrix(geom)
    vec = m @ np.array([body.v, body.vn, body.omega])
    return WheelSpeeds(float(vec[0]), float(vec[1]), float(vec[2]))


def wheels_to_body(geom: RobotGeometry, wheels: WheelSpeeds) -> BodyVelocity:
    """Recover the body velocity from the three wheel rim speeds."""
    inv = inverse_kinematic_matrix(geom)
    vec = inv @ np.array([wheels.v1, wheels.v2, wheels.v3])
    return BodyVelocity(float(vec[0]), float(vec[1]), float(vec[2]))


def wheel_rim_to_shaft(geom: RobotGeometry, rim_speed: float) -> float:
    """Convert a wheel rim speed (m/s) to output-shaft angular speed (rad/s)."""
    return rim_speed / geom.wheel_radius_m
