"""Piecewise-constant excitation profiles and the shared response log."""

from dataclasses import dataclass, field

import numpy as np

from .kinematics import BodyVelocity

LOG_COLUMNS = (
    "t",
    "v_ref",
    "vn_ref",
    "w_ref",
    "v",
    "vn",
    "w",
    "w1",
    "w2",
    "w3",
    "u1",
    "u2",
    "u3",
)


@dataclass(frozen=True)
class ExcitationProfile:
    """Ordered (duration_s, BodyVelocity) reference segments."""

    segments: tuple

    def __post_init__(self):
        if len(self.segments) == 0:
            raise ValueError("profile needs at least one segment")
        for dur, ref in self.segments:
            if not dur > 0.0:
                raise ValueError("segment durations must be > 0")
            if not isinstance(ref, BodyVelocity):
                raise TypeError("segment references must be BodyVelocity")

    @property
    def total_duration_s(self) -> float:
        return float(sum(dur for dur, _ in self.segments))

    @property
    def final_reference(self) -> BodyVelocity:
        return self.segments[-1][1]


def pure_rotation_profile(steps) -> ExcitationProfile:
    """Profile with only the yaw-rate reference active; steps are (duration_s, omega)."""
    if not steps:
        raise ValueError("empty step list")
    return ExcitationProfile(
        tuple((float(d), BodyVelocity(0.0, 0.0, float(w))) for d, w in steps)
    )


def pure_linear_profile(steps) -> ExcitationProfile:
    """Profile with only the forward-speed reference active; steps are (duration_s, v)."""
    if not steps:
        raise ValueError("empty step list")
    return ExcitationProfile(
        tuple((float(d), BodyVelocity(float(v), 0.0, 0.0)) for d, v in steps)
    )


def custom_profile(segments) -> ExcitationProfile:
    """Profile from (duration_s, v, vn, omega) rows."""
    if not segments:
        raise ValueError("empty segment list")
    return ExcitationProfile(
        tuple(
            (float(d), BodyVelocity(float(v), float(vn), float(w)))
            for d, v, vn, w in segments
        )
    )


def reference_at(profile: ExcitationProfile, t: float) -> BodyVelocity:
    """Reference of the segment containing t; boundaries belong to the later segment."""
    if t < 0.0 or t >= profile.total_duration_s:
        raise ValueError(
            f"t={t} outside profile range [0, {profile.total_duration_s})"
        )
    edge = 0.0
    for dur, ref in profile.segments:
        edge += dur
        if t < edge:
            return ref
    return profile.segments[-1][1]  # guard against float edge accumulation


@dataclass
class ResponseLog:
    """Time series of references, responses, wheel shaft speeds and voltages.

    rows is an (n, 13) array in LOG_COLUMNS order; columns are exposed as
    attributes (log.t, log.w, log.u1, ...).
    """

    sample_period_s: float
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        object.__setattr__(self, "rows", rows)
        if rows.ndim != 2 or rows.shape[1] != len(LOG_COLUMNS):
            raise ValueError(f"expected (n, {len(LOG_COLUMNS)}) rows, got {rows.shape}")
        if not self.sample_period_s > 0.0:
            raise ValueError("sample_period_s must be > 0")
        if not np.isfinite(rows).all():
            raise ValueError("log contains non-finite values")
        t = rows[:, 0]
        if len(t) > 1:
            if np.any(np.diff(t) <= 0.0):
                raise ValueError("log time column must be strictly increasing")
            expected = np.arange(len(t)) * self.sample_period_s + t[0]
            if np.max(np.abs(t - expected)) > 1e-9:
                raise ValueError("log samples are not at the fixed period")

    def __getattr__(self, name):
        try:
            idx = LOG_COLUMNS.index(name)
        except ValueError:
            raise AttributeError(name) from None
        return self.rows[:, idx]

    def __len__(self):
        return self.rows.shape[0]


def profile_from_log(log: ResponseLog) -> ExcitationProfile:
    """Rebuild the excitation profile from a log's reference columns.

    Each sample's reference is held for one period; consecutive equal
    references merge into a single segment. The final row only marks the
    profile end, so n rows give a (n-1)*period profile.
    """
    if len(log) < 2:
        raise ValueError("log shorter than 2 samples cannot define a profile")
    refs = log.rows[:-1, 1:4]
    period = log.sample_period_s
    segments = []
    run_start = 0
    for k in range(1, len(refs) + 1):
        if k == len(refs) or not np.array_equal(refs[k], refs[run_start]):
            dur = (k - run_start) * period
            v, vn, w = refs[run_start]
            segments.append((dur, BodyVelocity(float(v), float(vn), float(w))))
            run_start = k
    return ExcitationProfile(tuple(segments))
