"""End-to-end training: features -> pairs -> augmentation -> sampling -> GBDT.

This is the glue the CLI and the sweep harness share. A TrainedPipeline
bundles the fitted model with the feature-space state (PCA, teacher history,
config, schema) needed to score any <student, day> pair causally.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import features as F
from . import labeling, trainer
from .augmentation import AugmentationConfig, augment
from .errors import InsufficientDataError
from .events import Cohort, ColumnSchema, StudentRecord
from .features import FeatureConfig, PCAModel, TeacherHistoryIndex
from .gbdt import GBDTConfig, GBDTModel
from .trainer import SamplerConfig


@dataclass(frozen=True)
class PipelineConfig:
    feature: FeatureConfig = FeatureConfig()
    augmentation: AugmentationConfig = AugmentationConfig()
    sampler: SamplerConfig = SamplerConfig()
    gbdt: GBDTConfig = GBDTConfig()
    model_kind: str = "gbdt"  # or "logistic" for the baseline

    def fingerprint(self) -> str:
        raw = json.dumps(
            {
                "lookbacks": list(self.feature.lookback_days_list),
                "pca": self.feature.pca_components,
                "aggregators": sorted(self.feature.aggregators),
                "blocks": list(self.feature.blocks),
                "aug_lookback": self.augmentation.lookback_days,
                "weighting": self.augmentation.weighting,
                "target_positive_fraction": self.sampler.target_positive_fraction,
                "sampler_seed": self.sampler.seed,
                "carry_weights": self.sampler.carry_weights,
                "gbdt": self.gbdt.to_dict(),
                "model_kind": self.model_kind,
            },
            sort_keys=True,
        )
        return hashlib.sha256(raw.encode()).hexdigest()[:16]


@dataclass
class TrainedPipeline:
    model: object  # GBDTModel or LogisticModel
    pca: PCAModel
    hist: TeacherHistoryIndex
    feature_config: FeatureConfig
    schema: ColumnSchema
    config: PipelineConfig
    n_pseudo_pairs: int = 0

    def assemble(self, student: StudentRecord, day: int) -> F.FeatureVector:
        return F.assemble(
            student, day, self.pca, self.hist, self.feature_config, self.schema
        )

    def score(self, student: StudentRecord, day: int) -> float:
        return trainer.predict(self.model, self.assemble(student, day))

    @property
    def scorer(self) -> "PipelineScorer":
        return PipelineScorer(self)


class PipelineScorer:
    """Callable (student, day) -> probability with a batched fast path."""

    def __init__(self, trained: TrainedPipeline):
        self._trained = trained

    def __call__(self, student: StudentRecord, day: int) -> float:
        return self._trained.score(student, day)

    def many(self, points: list[tuple[StudentRecord, int]]) -> np.ndarray:
        if not points:
            return np.empty(0)
        X = np.vstack([self._trained.assemble(s, d).values for s, d in points])
        return self._trained.model.predict_proba(X)


def _inclass_rows(cohort: Cohort) -> np.ndarray:
    rows = [
        o.inclass_values
        for sid in sorted(cohort.students)
        for o in cohort.students[sid].observations
        if o.inclass_values is not None
    ]
    if len(rows) < 2:
        raise InsufficientDataError("cohort has fewer than 2 class sessions; cannot fit PCA")
    return np.vstack(rows)


def train(cohort: Cohort, config: PipelineConfig) -> TrainedPipeline:
    """Run the full learning procedure on a (training) cohort."""
    pca = F.fit_pca(_inclass_rows(cohort), config.feature)
    hist = F.build_teacher_history(cohort)

    def assemble_fn(student: StudentRecord, day: int) -> F.FeatureVector:
        return F.assemble(student, day, pca, hist, config.feature, cohort.schema)

    positives, negatives = labeling.build_original_pairs(cohort)
    positives = [
        p.with_features(assemble_fn(cohort.students[p.student_id], p.day))
        for p in positives
    ]
    negatives = [
        p.with_features(assemble_fn(cohort.students[p.student_id], p.day))
        for p in negatives
    ]
    if config.augmentation.enabled:
        pseudo = augment(cohort, config.augmentation, assemble_fn)
    else:
        pseudo = []

    data = trainer.oversample(positives, pseudo, negatives, config.sampler)
    if config.model_kind == "logistic":
        model = trainer.fit_logistic_baseline(data)
    else:
        model = trainer.fit_gbdt(data, config.gbdt)
    return TrainedPipeline(
        model=model,
        pca=pca,
        hist=hist,
        feature_config=config.feature,
        schema=cohort.schema,
        config=config,
        n_pseudo_pairs=len(pseudo),
    )
