"""Sybil verdicts from dual-domain matching or from RSSI coincidence, plus scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import NodeId
from .matcher import solve
from .sensing import CHARACTERISTICS, NeighborTable
from .similarity import DEFAULT_MODE, EPS_D, WeightVector, similarity_stage

DETECTORS = ("va", "va_distance", "va_velocity", "rssi")


@dataclass(frozen=True)
class VAConfig:
    solver: str = "balanced"
    budget: int = 200
    eps_d: float = EPS_D
    mode: str = DEFAULT_MODE
    literal_f2: bool = False
    seed: int = 0


@dataclass(frozen=True)
class Verdict:
    receiver: NodeId
    accused: frozenset
    epoch: int
    # (VD track index, AD identity) pairs; None for detectors that do not match
    matches: Optional[tuple[tuple[int, NodeId], ...]] = None
    premise_violated: bool = False


def detect_va(
    vd_table: NeighborTable,
    ad_table: NeighborTable,
    cfg: VAConfig = VAConfig(),
    *,
    weights: Optional[WeightVector] = None,
    receiver: NodeId = -1,
    epoch: int = 0,
) -> Verdict:
    """Match VD tracks to AD identities; identities left to padding rows are Sybils."""
    kv, ka = len(vd_table), len(ad_table)
    if ka < kv:
        return Verdict(receiver, frozenset(), epoch, None, premise_violated=True)
    if ka == 0:
        return Verdict(receiver, frozenset(), epoch, ())
    costs, _ = similarity_stage(vd_table, ad_table, weights, cfg.eps_d, cfg.mode)
    kw = {}
    if cfg.solver == "balanced":
        kw = dict(budget=cfg.budget, seed=cfg.seed, literal_f2=cfg.literal_f2)
    elif cfg.solver == "exact":
        kw = dict(literal_f2=cfg.literal_f2)
    assignment = solve(costs, cfg.solver, **kw)
    ids = ad_table.identities
    matches = tuple((vd_table.identities[i], ids[c]) for i, c in enumerate(assignment.real_columns))
    accused = frozenset(ids[c] for c in assignment.unmatched)
    return Verdict(receiver, accused, epoch, matches)


def detect_va_single(
    vd_table: NeighborTable,
    ad_table: NeighborTable,
    which: str,
    cfg: VAConfig = VAConfig(),
    *,
    receiver: NodeId = -1,
    epoch: int = 0,
) -> Verdict:
    """Ablation: cost matrix from one characteristic only ("distance" or "velocity")."""
    key = "speed" if which in ("velocity", "speed") else which
    if key not in CHARACTERISTICS:
        raise ValueError(f"unknown characteristic {which!r}")
    w = WeightVector.indicator(CHARACTERISTICS.index(key), len(CHARACTERISTICS))
    return detect_va(vd_table, ad_table, cfg, weights=w, receiver=receiver, epoch=epoch)


def rssi_clusters(ranges: np.ndarray, threshold: float) -> list[np.ndarray]:
    """Single-linkage clusters of 1-D range estimates (link iff gap <= threshold)."""
    if ranges.size == 0:
        return []
    order = np.argsort(ranges, kind="stable")
    gaps = np.diff(ranges[order])
    cuts = np.flatnonzero(gaps > threshold) + 1
    return [np.sort(g) for g in np.split(order, cuts)]


def detect_rssi(ad_table: NeighborTable, threshold: float = 3.0, *, receiver: NodeId = -1, epoch: int = 0) -> Verdict:
    """Accuse every identity whose RSSI range estimate coincides with another's."""
    if ad_table.ranging is None:
        raise ValueError("AD table carries no ranging measurements")
    accused = set()
    for cluster in rssi_clusters(ad_table.ranging, threshold):
        if cluster.size >= 2:
            accused.update(ad_table.identities[i] for i in cluster)
    return Verdict(receiver, frozenset(accused), epoch, None)


@dataclass(frozen=True)
class GroundTruth:
    sybils: frozenset
    vd_nodes: tuple[NodeId, ...] = ()

    @classmethod
    def from_tables(cls, vd_table: NeighborTable, ad_table: NeighborTable) -> "GroundTruth":
        sybils = frozenset(i for i, src in zip(ad_table.identities, ad_table.ground_truth) if i != src)
        return cls(sybils, tuple(vd_table.ground_truth))


@dataclass(frozen=True)
class DetectionReport:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    matched_correct: int = 0
    matched_total: int = 0
    precision: float = 1.0
    recall: float = 1.0
    matching_accuracy: Optional[float] = None
    events: int = 0

    @classmethod
    def from_counts(cls, tp, fp, fn, mc=0, mt=0, has_matching=True, events=0) -> "DetectionReport":
        return cls(
            tp, fp, fn, mc, mt,
            precision=tp / (tp + fp) if tp + fp else 1.0,
            recall=tp / (tp + fn) if tp + fn else 1.0,
            matching_accuracy=(mc / mt if mt else 1.0) if has_matching else None,
            events=events,
        )

    def __add__(self, other: "DetectionReport") -> "DetectionReport":
        has = self.matching_accuracy is not None or other.matching_accuracy is not None
        return DetectionReport.from_counts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn,
            self.matched_correct + other.matched_correct, self.matched_total + other.matched_total,
            has_matching=has, events=self.events + other.events,
        )


def _single(verdict: Verdict, truth: GroundTruth) -> DetectionReport:
    tp = len(verdict.accused & truth.sybils)
    fp = len(verdict.accused - truth.sybils)
    fn = len(truth.sybils - verdict.accused)
    if verdict.matches is None:
        return DetectionReport.from_counts(tp, fp, fn, has_matching=False, events=1)
    mc = sum(1 for vd, ad in verdict.matches if truth.vd_nodes[vd] == ad)
    return DetectionReport.from_counts(tp, fp, fn, mc, len(verdict.matches), events=1)


def score(verdicts: Sequence[Verdict], truths: Sequence[GroundTruth], aggregation: str = "micro") -> DetectionReport:
    """Pool verdicts into precision, recall and matching accuracy.

    ``micro`` sums TP/FP/FN (and matched pairs) before dividing; ``macro``
    averages the per-verdict rates, keeping the pooled counts alongside.
    Empty denominators score 1.
    """
    if len(verdicts) != len(truths):
        raise ValueError("one ground truth per verdict required")
    singles = [_single(v, t) for v, t in zip(verdicts, truths)]
    pooled = sum(singles, DetectionReport.from_counts(0, 0, 0, has_matching=False))
    if not singles:
        return DetectionReport()
    if aggregation == "micro":
        return pooled
    if aggregation != "macro":
        raise ValueError(f"unknown aggregation {aggregation!r}")
    acc = [s.matching_accuracy for s in singles if s.matching_accuracy is not None and s.matched_total]
    return DetectionReport(
        pooled.tp, pooled.fp, pooled.fn, pooled.matched_correct, pooled.matched_total,
        precision=float(np.mean([s.precision for s in singles])),
        recall=float(np.mean([s.recall for s in singles])),
        matching_accuracy=(float(np.mean(acc)) if acc else 1.0) if pooled.matching_accuracy is not None else None,
        events=pooled.events,
    )
