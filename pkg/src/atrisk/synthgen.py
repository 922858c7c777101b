"""Synthetic cohort generator with a planted recency-driven dropout signal.

Each student gets a latent engagement level, a class schedule with variable
gaps, and a per-day discrete-time logistic dropout hazard that grows with
days since the last class and shrinks with engagement and recent follow-ups.
The hazard intercept is calibrated by bisection so the realized dropout rate
hits the configured target. All randomness is fixed by the seed, so output
files are byte-identical across runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import CalibrationError, ValidationError
from .events import Cohort, ColumnSchema, ObservationPair, StudentRecord, write_events

INCLASS_COLUMNS = ("attention", "qa_rounds", "loudness", "speech_rate")
OUTCLASS_COLUMNS = ("order_discount", "order_courses", "followup_sentiment")


@dataclass(frozen=True)
class SimConfig:
    n_students: int = 500
    target_dropout_rate: float = 0.1616
    mean_span_days: int = 86
    class_gap_days: tuple[int, int] = (3, 7)
    recency_slope: float = 0.3  # hazard increase per day since last class
    engagement_slope: float = 0.8  # hazard decrease per unit engagement
    followup_relief: float = 0.4  # hazard decrease per recent follow-up
    teacher_effect_sd: float = 0.3
    n_teachers: int = 20
    decline_window_days: int = 7  # planted pre-dropout behavioral decline
    decline_strength: float = 1.0
    silent_exit_prob: float = 0.75  # fraction of dropouts who stop responding
    calibration_tol: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.target_dropout_rate < 1.0:
            raise ValidationError("target_dropout_rate must be in (0, 1)")
        if self.mean_span_days < 7 or self.n_students < 1:
            raise ValidationError("mean_span_days and n_students must be sensible")
        lo, hi = self.class_gap_days
        if not 1 <= lo <= hi:
            raise ValidationError("class_gap_days must be a valid (lo, hi) range")


def _sigmoid(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


@dataclass
class _Trajectory:
    """One student's pre-dropout plan plus latent variables."""

    student_id: str
    teacher_id: str
    engagement: float
    teacher_quality: float
    start_day: int
    end_day: int
    session_days: list[int]
    events: dict[int, ObservationPair]  # keyed by day, pre-truncation
    hazard_z: dict[int, float]  # day -> hazard logit minus the intercept
    uniform: float


def _plan_student(idx: int, cfg: SimConfig, teacher_quality: np.ndarray) -> _Trajectory:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, idx]))
    sid = f"s{idx:05d}"
    engagement = float(rng.normal())
    tid_idx = int(rng.integers(0, cfg.n_teachers))
    tid = f"t{tid_idx:03d}"
    tq = float(teacher_quality[tid_idx])

    start = int(rng.integers(1, 41))
    span = int(np.clip(rng.normal(cfg.mean_span_days, cfg.mean_span_days * 0.25),
                       21, 2 * cfg.mean_span_days))
    end = start + span
    lo, hi = cfg.class_gap_days

    events: dict[int, ObservationPair] = {}
    events[start] = ObservationPair(
        day=start,
        kind="purchase_event",
        outclass_values=_freeze(
            [
                float(np.clip(0.5 - 0.08 * engagement + rng.normal(0, 0.1), 0.05, 0.95)),
                float(rng.integers(5, 31)),
                0.0,
            ]
        ),
        teacher_id=tid,
    )

    session_days: list[int] = []
    day = start
    while True:
        gap = int(rng.integers(lo, hi + 1))
        if rng.uniform() < 0.25 * _sigmoid(-engagement):
            gap += int(rng.integers(3, 11))  # disengaged students skip classes
        day += gap
        if day >= end:
            break
        session_days.append(day)
        events[day] = ObservationPair(
            day=day,
            kind="class_session",
            inclass_values=_freeze(
                [
                    0.4 * engagement + float(rng.normal(0, 0.5)),
                    0.3 * engagement + float(rng.normal(0, 0.7)),
                    float(rng.normal(0, 1.0)),
                    float(rng.normal(0, 1.0)),
                ]
            ),
            teacher_id=tid,
        )
        if rng.uniform() < 0.08:
            rs_day = day + 2
            if rs_day < end and rs_day not in events:
                events[rs_day] = ObservationPair(day=rs_day, kind="reschedule", teacher_id=tid)

    # Daily follow-up contacts from the service staff, independent of the class
    # schedule, so observation days also fall inside long no-class gaps.
    for fu_day in range(start + 1, end):
        if fu_day in events or rng.uniform() >= 0.4:
            continue
        pol = 1 if rng.uniform() < _sigmoid(0.4 * engagement) else -1
        events[fu_day] = ObservationPair(
            day=fu_day,
            kind="follow_up",
            outclass_values=_freeze([0.0, 0.0, 0.2 * engagement + float(rng.normal(0, 0.6))]),
            teacher_id=tid,
            polarity=pol,
        )

    hazard_z: dict[int, float] = {}
    if session_days:
        fu_days = sorted(d for d, o in events.items() if o.kind == "follow_up")
        first_risk_day = session_days[0] + 1
        for d in range(first_risk_day, end + 1):
            prior_sessions = [s for s in session_days if s < d]
            gap_d = d - prior_sessions[-1] if prior_sessions else 0
            recent_fu = sum(1 for f in fu_days if d - 7 <= f < d)
            hazard_z[d] = (
                cfg.recency_slope * gap_d
                - cfg.engagement_slope * engagement
                - cfg.followup_relief * recent_fu
                + tq
            )

    return _Trajectory(
        student_id=sid,
        teacher_id=tid,
        engagement=engagement,
        teacher_quality=tq,
        start_day=start,
        end_day=end,
        session_days=session_days,
        events=events,
        hazard_z=hazard_z,
        uniform=float(rng.uniform()),
    )


def _freeze(values: list[float]) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def _plant_decline(
    kept: dict[int, ObservationPair],
    dropout_day: int,
    teacher_id: str,
    cfg: SimConfig,
    rng: np.random.Generator,
) -> None:
    """Degrade the final pre-dropout window in place (the planted recency signal).

    Severity rises convexly toward the dropout day, so observations closest to
    t_n are the most clearly at-risk: class features sink, follow-up sentiment
    turns negative, and some sessions are skipped outright. A fraction of
    dropouts additionally go silent for the last few days, so their terminal
    observations look different from students who stay in contact to the end.
    """
    window = cfg.decline_window_days
    if window <= 0:
        return
    start = min(kept)

    # Silent exits: drop all contact in the final 2-5 days before the event.
    if rng.uniform() < cfg.silent_exit_prob:
        gap = int(rng.integers(4, 7))
        if dropout_day - gap > start + 1:
            for d in [d for d in kept if d >= dropout_day - gap]:
                del kept[d]
    else:
        # Engaged exits: the service staff keeps reaching out, so these
        # students usually have an observation on the eve of the dropout.
        eve = dropout_day - 1
        if eve not in kept and eve > start and rng.uniform() < 0.7:
            kept[eve] = ObservationPair(
                day=eve,
                kind="follow_up",
                outclass_values=_freeze([0.0, 0.0, float(rng.normal(0, 0.6))]),
                teacher_id=teacher_id,
                polarity=1,
            )

    n_sessions = sum(1 for o in kept.values() if o.kind == "class_session")
    for d in sorted(kept):
        u = (dropout_day - d) / window
        if u >= 1.0:
            continue
        obs = kept[d]
        if u >= 0.6:
            # Last-ditch rally at the far edge of the window: a burst of
            # apparent engagement right before the collapse begins. It looks
            # exactly like an ordinary good day, so it carries no signal.
            lift = 3.2 * cfg.decline_strength * (u - 0.6) / 0.4
            if obs.kind == "class_session":
                vals = np.array(obs.inclass_values)
                vals[0] += 0.7 * lift
                kept[d] = replace(obs, inclass_values=_freeze(vals))
            elif obs.kind == "follow_up":
                vals = np.array(obs.outclass_values)
                vals[2] += lift
                kept[d] = replace(obs, outclass_values=_freeze(vals), polarity=1)
            continue
        sev = (1.0 - u) ** 2
        if obs.kind == "class_session":
            if n_sessions > 2 and rng.uniform() < 0.6 * sev:
                del kept[d]  # pre-dropout class skipping
                n_sessions -= 1
                continue
            vals = np.array(obs.inclass_values)
            vals[0] -= cfg.decline_strength * sev  # attention
            vals[1] -= 0.7 * cfg.decline_strength * sev  # qa_rounds
            vals[3] -= 0.5 * cfg.decline_strength * sev  # speech_rate
            kept[d] = replace(obs, inclass_values=_freeze(vals))
        elif obs.kind == "follow_up":
            vals = np.array(obs.outclass_values)
            vals[2] -= cfg.decline_strength * sev  # sentiment
            polarity = -1 if sev > 0.5 else obs.polarity
            kept[d] = replace(obs, outclass_values=_freeze(vals), polarity=polarity)


def _dropout_day(traj: _Trajectory, alpha: float) -> int | None:
    """First day the cumulative dropout probability crosses the student's uniform."""
    survival = 1.0
    for d in sorted(traj.hazard_z):
        survival *= 1.0 - _sigmoid(alpha + traj.hazard_z[d])
        if 1.0 - survival >= traj.uniform:
            return d
    return None


def _calibrate_alpha(trajectories: list[_Trajectory], cfg: SimConfig) -> float:
    """Bisect the hazard intercept until the realized rate hits the target."""
    target = cfg.target_dropout_rate
    n = len(trajectories)

    def rate(alpha: float) -> float:
        return sum(1 for t in trajectories if _dropout_day(t, alpha) is not None) / n

    lo, hi = -20.0, 5.0
    if rate(lo) > target or rate(hi) < target:
        raise CalibrationError(
            f"target rate {target} unreachable: rate({lo})={rate(lo):.4f}, "
            f"rate({hi})={rate(hi):.4f}"
        )
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if rate(mid) < target:
            lo = mid
        else:
            hi = mid
    alpha = hi
    realized = rate(alpha)
    if abs(realized - target) > cfg.calibration_tol:
        raise CalibrationError(
            f"calibration failed: realized rate {realized:.4f} vs target {target:.4f} "
            f"(tolerance {cfg.calibration_tol}); hazard steps may be too coarse"
        )
    return alpha


def generate_cohort(cfg: SimConfig) -> tuple[Cohort, list[dict], float]:
    """Simulate the cohort; returns (cohort, truth records, calibrated intercept)."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 999_983]))
    teacher_quality = rng.normal(0.0, cfg.teacher_effect_sd, size=cfg.n_teachers)
    trajectories = [
        _plan_student(i, cfg, teacher_quality) for i in range(cfg.n_students)
    ]
    alpha = _calibrate_alpha(trajectories, cfg)

    students: dict[str, StudentRecord] = {}
    truth: list[dict] = []
    for idx, traj in enumerate(trajectories):
        dd = _dropout_day(traj, alpha)
        if dd is not None:
            kept = {d: o for d, o in traj.events.items() if d < dd}
            _plant_decline(
                kept, dd, traj.teacher_id, cfg,
                np.random.default_rng(np.random.SeedSequence([cfg.seed, idx, 7])),
            )
            kept[dd] = ObservationPair(day=dd, kind="dropout_event", teacher_id=traj.teacher_id)
            status = "dropout"
        else:
            kept = dict(traj.events)
            status = "completion"
        obs = tuple(kept[d] for d in sorted(kept))
        students[traj.student_id] = StudentRecord(
            student_id=traj.student_id,
            observations=obs,
            final_status=status,
            teacher_id=traj.teacher_id,
        )
        truth.append(
            {
                "student": traj.student_id,
                "teacher": traj.teacher_id,
                "engagement": traj.engagement,
                "teacher_quality": traj.teacher_quality,
                "uniform": traj.uniform,
                "dropout_day": dd,
                "hazard": [
                    [d, _sigmoid(alpha + z)] for d, z in sorted(traj.hazard_z.items())
                ],
            }
        )

    schema = ColumnSchema(
        inclass_columns=INCLASS_COLUMNS, outclass_columns=OUTCLASS_COLUMNS
    )
    return Cohort(students=students, schema=schema), truth, alpha


def generate(cfg: SimConfig, out_dir: str | Path) -> dict[str, Path]:
    """Write events.jsonl, schema.json, and truth.jsonl under `out_dir`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cohort, truth, alpha = generate_cohort(cfg)
    events_path = out / "events.jsonl"
    schema_path = out / "schema.json"
    truth_path = out / "truth.jsonl"
    write_events(cohort, events_path)
    cohort.schema.dump(schema_path)
    with open(truth_path, "w") as fh:
        fh.write(json.dumps({"alpha": alpha, "config_seed": cfg.seed}, sort_keys=True))
        fh.write("\n")
        for rec in truth:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")
    return {"events": events_path, "schema": schema_path, "truth": truth_path}
