"""Versioned YAML configuration documents and shipped presets.

A document mirrors the runtime objects section by section (geometry, body,
motor, gains, sim, profile, optimizer). Unknown keys are rejected so typos
fail loudly. Motor and geometry defaults come from the drive datasheets
and robot measurements; the friction, gain and inertia values are the
calibrated ones, with the "starting" preset keeping the pre-calibration
inertia for identification runs.
"""

import copy
import math
from dataclasses import dataclass

import yaml

from .actuation import MotorParams, PidGains
from .dynamics import BodyParams, SimConfig
from .estimation import OptimizerConfig
from .kinematics import RobotGeometry
from .signals import ExcitationProfile, custom_profile, pure_linear_profile, pure_rotation_profile

CONFIG_VERSION = 1

_SCHEMA = {
    "version": None,
    "geometry": {"wheel_distance_m", "wheel_radius_m", "gear_ratio", "wheel_angles_deg"},
    "body": {"mass_kg", "j_z", "j_x", "j_y", "include_coriolis"},
    "motor": {"r_internal_ohm", "k_torque", "b_viscous", "f_coulomb", "u_max_volts", "j_reflected"},
    "gains": {"kp", "ki", "kd", "u_limit", "integral_limit"},
    "sim": {
        "physics_dt_s",
        "control_dt_s",
        "duration_s",
        "accel_limit_rad_s2",
        "encoder_quantization",
        "encoder_ppr",
        "measurement_noise_std",
    },
    "profile": {"kind", "segments"},
    "optimizer": {
        "method",
        "eta_plus",
        "eta_minus",
        "delta0",
        "delta_min",
        "delta_max",
        "learning_rate",
        "fd_epsilon",
        "max_iters",
        "cost_tol",
        "param_tol",
    },
}

_PROFILE_KINDS = ("pure_rotation", "pure_linear", "custom")


class ConfigError(ValueError):
    """Configuration document is missing, malformed or invalid."""


@dataclass(frozen=True)
class Setup:
    """Runtime objects built from one validated document."""

    sim: SimConfig
    optimizer: OptimizerConfig
    profile: ExcitationProfile
    measurement_noise_std: float


def _base_document() -> dict:
    return {
        "version": CONFIG_VERSION,
        "geometry": {
            "wheel_distance_m": 0.195,
            "wheel_radius_m": 0.0513,
            "gear_ratio": 12.0,
            "wheel_angles_deg": [-60.0, 60.0, 180.0],
        },
        "body": {
            "mass_kg": 26.2,
            "j_z": 1.1,
            "j_x": 0.629,  # recorded for completeness; planar model ignores x/y inertia
            "j_y": 0.658,
            "include_coriolis": False,
        },
        "motor": {
            "r_internal_ohm": 0.317,
            "k_torque": 0.0302,
            "b_viscous": 0.0324,
            "f_coulomb": 0.036735,
            "u_max_volts": 24.0,
            "j_reflected": 1.0e-3,
        },
        "gains": {
            "kp": 0.06472,
            "ki": 0.043796,
            "kd": 0.0,
            "u_limit": 24.0,
            "integral_limit": 1000.0,
        },
        "sim": {
            "physics_dt_s": 0.001,
            "control_dt_s": 0.04,
            "duration_s": None,  # null means: run for the profile duration
            "accel_limit_rad_s2": 61.09,
            "encoder_quantization": False,
            "encoder_ppr": 256,
            "measurement_noise_std": 0.0,
        },
        "profile": {
            "kind": "pure_rotation",
            "segments": [
                [2.0, 1.2],
                [2.0, -1.2],
                [2.0, 0.9],
                [2.0, -0.9],
                [2.0, 1.5],
                [2.0, -1.5],
            ],
        },
        "optimizer": {
            "method": "rprop",
            "eta_plus": 1.2,
            "eta_minus": 0.5,
            "delta0": 0.1,
            "delta_min": 1.0e-8,
            "delta_max": 1.0,
            "learning_rate": 0.1,
            "fd_epsilon": 1.0e-6,
            "max_iters": 300,
            "cost_tol": 1.0e-12,
            "param_tol": 1.0e-9,
        },
    }


def _preset_rotation() -> dict:
    return _base_document()


def _preset_linear() -> dict:
    doc = _base_document()
    doc["profile"] = {
        "kind": "pure_linear",
        "segments": [
            [3.0, 2.5],
            [3.0, -2.5],
            [3.0, 2.0],
            [3.0, -2.0],
        ],
    }
    return doc


def _preset_starting() -> dict:
    doc = _base_document()
    doc["body"]["j_z"] = 0.705
    return doc


_PRESETS = {
    "rotation": _preset_rotation,
    "linear": _preset_linear,
    "starting": _preset_starting,
}


def preset_names():
    return sorted(_PRESETS)


def preset_document(name: str) -> dict:
    try:
        return _PRESETS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        ) from None


def load_document(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must contain a mapping")
    return doc


def dump_document(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply repeatable key=value overrides with dotted paths (e.g. gains.kp=0.1)."""
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise ConfigError(f"override {item!r} has an unparseable value") from None
        node = doc
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r} traverses a non-mapping key")
        node[parts[-1]] = value
    return doc


def validate_document(doc: dict) -> None:
    version = doc.get("version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}, expected {CONFIG_VERSION}")
    for section, value in doc.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        allowed = _SCHEMA[section]
        if allowed is None:
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        for key in value:
            if key not in allowed:
                raise ConfigError(f"unknown key {section}.{key}")


def _merged(doc: dict) -> dict:
    base = _base_document()
    for section, value in doc.items():
        if isinstance(value, dict) and isinstance(base.get(section), dict):
            base[section].update(value)
        else:
            base[section] = value
    return base


def _build_profile(section: dict) -> ExcitationProfile:
    kind = section.get("kind")
    segments = section.get("segments")
    if kind not in _PROFILE_KINDS:
        raise ConfigError(f"profile.kind must be one of {_PROFILE_KINDS}, got {kind!r}")
    if not isinstance(segments, list) or not segments:
        raise ConfigError("profile.segments must be a non-empty list")
    try:
        if kind == "pure_rotation":
            return pure_rotation_profile([(s[0], s[1]) for s in segments])
        if kind == "pure_linear":
            return pure_linear_profile([(s[0], s[1]) for s in segments])
        return custom_profile([(s[0], s[1], s[2], s[3]) for s in segments])
    except (TypeError, IndexError, ValueError) as exc:
        raise ConfigError(f"invalid profile segments: {exc}") from exc


def build_setup(doc: dict) -> Setup:
    """Validate a document, fill defaults and construct the runtime objects."""
    validate_document(doc)
    doc = _merged(doc)
    try:
        geo = doc["geometry"]
        geometry = RobotGeometry(
            wheel_distance_m=float(geo["wheel_distance_m"]),
            wheel_radius_m=float(geo["wheel_radius_m"]),
            gear_ratio=float(geo["gear_ratio"]),
            wheel_angles_rad=tuple(math.radians(a) for a in geo["wheel_angles_deg"]),
        )
        bod = doc["body"]
        body = BodyParams(
            mass_kg=float(bod["mass_kg"]),
            j_z=float(bod["j_z"]),
            include_coriolis=bool(bod["include_coriolis"]),
        )
        mot = doc["motor"]
        motor = MotorParams(
            r_internal_ohm=float(mot["r_internal_ohm"]),
            k_torque=float(mot["k_torque"]),
            b_viscous=float(mot["b_viscous"]),
            f_coulomb=float(mot["f_coulomb"]),
            u_max_volts=float(mot["u_max_volts"]),
            j_reflected=float(mot["j_reflected"]),
        )
        sim = doc["sim"]
        gn = doc["gains"]
        gains = PidGains(
            kp=float(gn["kp"]),
            ki=float(gn["ki"]),
            kd=float(gn["kd"]),
            period_s=float(sim["control_dt_s"]),
            u_limit=float(gn["u_limit"]),
            integral_limit=float(gn["integral_limit"]),
        )
        profile = _build_profile(doc["profile"])
        duration = sim["duration_s"]
        if duration is None:
            duration = profile.total_duration_s
        sim_cfg = SimConfig(
            geometry=geometry,
            body=body,
            motor=motor,
            gains=gains,
            physics_dt_s=float(sim["physics_dt_s"]),
            control_dt_s=float(sim["control_dt_s"]),
            duration_s=float(duration),
            accel_limit_rad_s2=float(sim["accel_limit_rad_s2"]),
            encoder_quantization=bool(sim["encoder_quantization"]),
            encoder_ppr=int(sim["encoder_ppr"]),
        )
        opt = doc["optimizer"]
        optimizer = OptimizerConfig(
            method=str(opt["method"]),
            eta_plus=float(opt["eta_plus"]),
            eta_minus=float(opt["eta_minus"]),
            delta0=float(opt["delta0"]),
            delta_min=float(opt["delta_min"]),
            delta_max=float(opt["delta_max"]),
            learning_rate=float(opt["learning_rate"]),
            fd_epsilon=float(opt["fd_epsilon"]),
            max_iters=int(opt["max_iters"]),
            cost_tol=float(opt["cost_tol"]),
            param_tol=float(opt["param_tol"]),
        )
        noise = float(sim["measurement_noise_std"])
        if noise < 0.0:
            raise ValueError("measurement_noise_std must be >= 0")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return Setup(sim=sim_cfg, optimizer=optimizer, profile=profile, measurement_noise_std=noise)


def load_setup(path, overrides=None) -> Setup:
    doc = load_document(path)
    if overrides:
        doc = apply_overrides(doc, overrides)
    return build_setup(doc)


def preset_setup(name: str, overrides=None) -> Setup:
    doc = preset_document(name)
    if overrides:
        doc = apply_overrides(doc, overrides)
    return build_setup(doc)
