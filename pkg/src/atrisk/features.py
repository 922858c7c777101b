"""Feature assembly for <student, timestamp> pairs.

Three blocks, concatenated in fixed order: PCA-reduced aggregates of the
in-class vectors, aggregates of the out-of-class vectors, and time-variant
features (lookback-window counts/gaps plus teacher-history statistics).
Everything observed strictly after the query day is invisible to the output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InsufficientDataError, ValidationError
from .events import Cohort, ColumnSchema, StudentRecord

ALL_BLOCKS = ("in", "out", "time")
_RANK_TOL = 1e-10


@dataclass(frozen=True)
class FeatureConfig:
    lookback_days_list: tuple[int, ...] = (7, 14, 21, 30)
    pca_components: int | float = 4  # int = component count, float in (0,1] = variance fraction
    aggregators: frozenset[str] = frozenset({"mean", "last", "count"})
    blocks: tuple[str, ...] = ALL_BLOCKS

    def __post_init__(self):
        if list(self.lookback_days_list) != sorted(set(self.lookback_days_list)):
            raise ValidationError("lookback_days_list must be strictly increasing")
        if any(L < 1 for L in self.lookback_days_list):
            raise ValidationError("lookback lengths must be positive")
        if isinstance(self.pca_components, float):
            if not 0.0 < self.pca_components <= 1.0:
                raise ValidationError("fractional pca_components must be in (0, 1]")
        elif self.pca_components < 1:
            raise ValidationError("pca_components must be >= 1")
        if not self.aggregators <= {"mean", "sum", "last", "count"}:
            raise ValidationError(f"unknown aggregators: {self.aggregators}")
        if not set(self.blocks) <= set(ALL_BLOCKS):
            raise ValidationError(f"unknown feature blocks: {self.blocks}")


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) != len(self.names):
            raise ValidationError("feature values and names differ in length")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("feature vector contains non-finite values")


@dataclass(frozen=True)
class PCAModel:
    """Linear PCA of the in-class rows: mean plus row-orthonormal components."""

    mean: np.ndarray
    components: np.ndarray  # (k, d), rows are principal directions
    explained_variance: np.ndarray  # (k,), non-increasing

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def project(self, rows: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(rows) - self.mean) @ self.components.T


def fit_pca(rows: np.ndarray, config: FeatureConfig) -> PCAModel:
    """Fit PCA on the sample covariance (ddof=1) of the in-class rows.

    Components come from a symmetric eigendecomposition, sorted by descending
    eigenvalue, with a deterministic sign convention: the largest-magnitude
    entry of each component is positive.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] < 1:
        raise InsufficientDataError("fit_pca needs a 2-D matrix with >= 1 column")
    if rows.shape[0] < 2:
        raise InsufficientDataError("fit_pca needs at least 2 rows")
    if not np.all(np.isfinite(rows)):
        raise InsufficientDataError("fit_pca input contains non-finite values")

    mean = rows.mean(axis=0)
    cov = np.cov(rows, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.maximum(evals[order], 0.0)
    evecs = evecs[:, order].T  # rows = directions

    scale = max(float(evals[0]), 1.0)
    rank = int(np.sum(evals > _RANK_TOL * scale))
    if isinstance(config.pca_components, float):
        if rank == 0:
            k = 1  # zero-variance input with a fractional target
        else:
            total = float(evals.sum())
            cum = np.cumsum(evals) / total
            k = int(np.searchsorted(cum, config.pca_components - 1e-12) + 1)
            k = min(k, rank)
    else:
        k = min(int(config.pca_components), max(rank, 1))

    comps = evecs[:k].copy()
    for i in range(k):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    return PCAModel(mean=mean, components=comps, explained_variance=evals[:k].copy())


@dataclass(frozen=True)
class TeacherHistoryIndex:
    """Per-teacher session/student/dropout timelines for causal queries.

    All queries are strict in the day: only activity on days < the query day
    is counted, so the index can never leak a same-day outcome.
    """

    session_days: dict[str, np.ndarray]  # sorted class-session days per teacher
    student_first_days: dict[str, np.ndarray]  # sorted first-contact days per teacher
    student_dropout_days: dict[str, np.ndarray]  # sorted dropout days per teacher
    cohort_first_days: np.ndarray  # sorted, all students
    cohort_dropout_days: np.ndarray  # sorted, all dropout students

    def global_prior(self, day: int) -> float:
        seen = int(np.searchsorted(self.cohort_first_days, day))
        if seen == 0:
            return 0.0
        dropped = int(np.searchsorted(self.cohort_dropout_days, day))
        return dropped / seen

    def query(self, teacher_id: str, day: int) -> tuple[int, int, float]:
        """(courses taught, distinct students, dropout rate) before `day`."""
        sessions = self.session_days.get(teacher_id)
        if sessions is None:
            return 0, 0, self.global_prior(day)
        n_courses = int(np.searchsorted(sessions, day))
        n_students = int(np.searchsorted(self.student_first_days[teacher_id], day))
        if n_students == 0:
            return n_courses, 0, self.global_prior(day)
        n_dropped = int(np.searchsorted(self.student_dropout_days[teacher_id], day))
        return n_courses, n_students, n_dropped / n_students


def build_teacher_history(cohort: Cohort) -> TeacherHistoryIndex:
    sessions: dict[str, list[int]] = {}
    firsts: dict[str, list[int]] = {}
    drops: dict[str, list[int]] = {}
    cohort_firsts: list[int] = []
    cohort_drops: list[int] = []
    for student in cohort:
        cohort_firsts.append(student.first_day)
        if student.final_status == "dropout":
            cohort_drops.append(student.last_day)
        seen_teachers: set[str] = set()
        for obs in student.observations:
            if obs.kind != "class_session":
                continue
            tid = obs.teacher_id or student.teacher_id
            if not tid:
                continue
            sessions.setdefault(tid, []).append(obs.day)
            if tid not in seen_teachers:
                seen_teachers.add(tid)
                firsts.setdefault(tid, []).append(obs.day)
                if student.final_status == "dropout":
                    drops.setdefault(tid, []).append(student.last_day)
    return TeacherHistoryIndex(
        session_days={t: np.sort(np.array(v)) for t, v in sessions.items()},
        student_first_days={t: np.sort(np.array(v)) for t, v in firsts.items()},
        student_dropout_days={
            t: np.sort(np.array(drops.get(t, []), dtype=np.int64)) for t in sessions
        },
        cohort_first_days=np.sort(np.array(cohort_firsts, dtype=np.int64)),
        cohort_dropout_days=np.sort(np.array(cohort_drops, dtype=np.int64)),
    )


_VEC_AGGS = ("mean", "sum", "last")  # vector-valued aggregators, in emit order


@dataclass(frozen=True)
class _StudentArrays:
    """Per-student numpy views so assemble can binary-search instead of scan."""

    days: np.ndarray
    class_days: np.ndarray
    followup_days: np.ndarray
    pos_followup_days: np.ndarray
    neg_followup_days: np.ndarray
    reschedule_days: np.ndarray
    inclass_days: np.ndarray
    inclass_rows: np.ndarray  # (n_class, d_in)
    outclass_days: np.ndarray
    outclass_rows: np.ndarray  # (n_out, d_out)


# Keyed by id(); the stored record pins the object so ids cannot be recycled.
_STUDENT_CACHE: dict[int, tuple[StudentRecord, _StudentArrays]] = {}


def _student_arrays(student: StudentRecord, schema: ColumnSchema) -> _StudentArrays:
    cached = _STUDENT_CACHE.get(id(student))
    if cached is not None and cached[0] is student:
        return cached[1]
    obs = student.observations
    in_pairs = [(o.day, o.inclass_values) for o in obs if o.inclass_values is not None]
    out_pairs = [(o.day, o.outclass_values) for o in obs if o.outclass_values is not None]
    arrays = _StudentArrays(
        days=np.array([o.day for o in obs], dtype=np.int64),
        class_days=np.array(
            [o.day for o in obs if o.kind == "class_session"], dtype=np.int64
        ),
        followup_days=np.array(
            [o.day for o in obs if o.kind == "follow_up"], dtype=np.int64
        ),
        pos_followup_days=np.array(
            [o.day for o in obs if o.kind == "follow_up" and (o.polarity or 0) > 0],
            dtype=np.int64,
        ),
        neg_followup_days=np.array(
            [o.day for o in obs if o.kind == "follow_up" and (o.polarity or 0) < 0],
            dtype=np.int64,
        ),
        reschedule_days=np.array(
            [o.day for o in obs if o.kind == "reschedule"], dtype=np.int64
        ),
        inclass_days=np.array([d for d, _ in in_pairs], dtype=np.int64),
        inclass_rows=np.vstack([v for _, v in in_pairs])
        if in_pairs
        else np.empty((0, len(schema.inclass_columns))),
        outclass_days=np.array([d for d, _ in out_pairs], dtype=np.int64),
        outclass_rows=np.vstack([v for _, v in out_pairs])
        if out_pairs
        else np.empty((0, len(schema.outclass_columns))),
    )
    _STUDENT_CACHE[id(student)] = (student, arrays)
    return arrays


def feature_names(
    schema: ColumnSchema, pca: PCAModel, config: FeatureConfig
) -> tuple[str, ...]:
    return _feature_names(schema, pca.n_components, config)


@lru_cache(maxsize=256)
def _feature_names(
    schema: ColumnSchema, n_components: int, config: FeatureConfig
) -> tuple[str, ...]:
    names: list[str] = []
    if "in" in config.blocks:
        for agg in _VEC_AGGS:
            if agg in config.aggregators:
                names += [f"in_{agg}_pc{i + 1}" for i in range(n_components)]
        names.append("in_count")
    if "out" in config.blocks:
        for agg in _VEC_AGGS:
            if agg in config.aggregators:
                names += [f"out_{agg}_{c}" for c in schema.outclass_columns]
        names.append("out_count")
    if "time" in config.blocks:
        for L in config.lookback_days_list:
            names += [
                f"time_w{L}_classes",
                f"time_w{L}_followups",
                f"time_w{L}_reschedules",
                f"time_w{L}_pos_followups",
                f"time_w{L}_neg_followups",
                f"time_w{L}_gap_mean",
                f"time_w{L}_gap_count",
            ]
        names += [
            "time_days_since_last_class",
            "time_has_class",
            "time_days_since_first_obs",
            "time_teacher_courses",
            "time_teacher_students",
            "time_teacher_dropout_rate",
        ]
    return tuple(names)


def _vector_aggregates(
    stack: np.ndarray, width: int, config: FeatureConfig
) -> list[float]:
    out: list[float] = []
    n = stack.shape[0]
    if n:
        agg_values = {
            "mean": stack.mean(axis=0),
            "sum": stack.sum(axis=0),
            "last": stack[-1],
        }
    else:
        zero = np.zeros(width)
        agg_values = {"mean": zero, "sum": zero, "last": zero}
    for agg in _VEC_AGGS:
        if agg in config.aggregators:
            out.extend(float(v) for v in agg_values[agg])
    out.append(float(n))  # presence count; zeros above are "missing"
    return out


def assemble(
    student: StudentRecord,
    at_day: int,
    pca: PCAModel,
    hist: TeacherHistoryIndex,
    config: FeatureConfig,
    schema: ColumnSchema,
) -> FeatureVector:
    """Build the feature vector for one <student, at_day> pair.

    Only observations with day <= at_day contribute; teacher history is
    queried strictly before at_day. Missing blocks encode as zeros plus an
    explicit count column, never NaN.
    """
    if at_day < student.first_day:
        raise ValidationError(
            f"at_day {at_day} precedes first observation "
            f"day {student.first_day} of student {student.student_id}"
        )
    arrays = _student_arrays(student, schema)
    values: list[float] = []

    if "in" in config.blocks:
        n_in = int(np.searchsorted(arrays.inclass_days, at_day, side="right"))
        # mean/last commute with the affine projection, so aggregate raw rows
        # and project the aggregates; sum does not, hence the n * mean form.
        rows = arrays.inclass_rows[:n_in]
        out: list[float] = []
        if n_in:
            raw = {"mean": rows.mean(axis=0), "last": rows[-1]}
            agg_values = {k: pca.project(v)[0] for k, v in raw.items()}
            agg_values["sum"] = (
                rows.sum(axis=0) - n_in * pca.mean
            ) @ pca.components.T
        else:
            zero = np.zeros(pca.n_components)
            agg_values = {"mean": zero, "sum": zero, "last": zero}
        for agg in _VEC_AGGS:
            if agg in config.aggregators:
                out.extend(float(v) for v in agg_values[agg])
        out.append(float(n_in))
        values += out

    if "out" in config.blocks:
        n_out = int(np.searchsorted(arrays.outclass_days, at_day, side="right"))
        values += _vector_aggregates(
            arrays.outclass_rows[:n_out], len(schema.outclass_columns), config
        )

    if "time" in config.blocks:
        # One searchsorted per event-kind array covers every lookback window:
        # the count in (at_day - L, at_day] is idx(at_day) - idx(at_day - L).
        bounds = np.array(
            [at_day - L for L in config.lookback_days_list] + [at_day], dtype=np.int64
        )
        c_idx = arrays.class_days.searchsorted(bounds, side="right")
        fu_idx = arrays.followup_days.searchsorted(bounds, side="right")
        rs_idx = arrays.reschedule_days.searchsorted(bounds, side="right")
        pos_idx = arrays.pos_followup_days.searchsorted(bounds, side="right")
        neg_idx = arrays.neg_followup_days.searchsorted(bounds, side="right")
        n_class = int(c_idx[-1])
        for i, _L in enumerate(config.lookback_days_list):
            values.append(float(n_class - c_idx[i]))
            values.append(float(fu_idx[-1] - fu_idx[i]))
            values.append(float(rs_idx[-1] - rs_idx[i]))
            values.append(float(pos_idx[-1] - pos_idx[i]))
            values.append(float(neg_idx[-1] - neg_idx[i]))
            w_classes = arrays.class_days[c_idx[i] : n_class]
            n_gaps = len(w_classes) - 1
            if n_gaps > 0:
                values.append(float(w_classes[-1] - w_classes[0]) / n_gaps)
                values.append(float(n_gaps))
            else:
                values.append(0.0)
                values.append(0.0)
        if n_class:
            values.append(float(at_day - arrays.class_days[n_class - 1]))
            values.append(1.0)
        else:
            values.append(0.0)
            values.append(0.0)
        values.append(float(at_day - student.first_day))
        courses, students, rate = hist.query(student.teacher_id, at_day)
        values += [float(courses), float(students), float(rate)]

    return FeatureVector(
        values=np.array(values, dtype=np.float64),
        names=feature_names(schema, pca, config),
    )
