"""Answer-log evaluation: accuracies, propagation (CCR/RR), spread proxies,
conflict rate, collapse detection, plasticity curves and failure modes.

Missing answers are hard errors everywhere; silently skipping probes would
bias the propagation ratios.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

from .errors import (
    CurveMismatch,
    EmptyFilter,
    MissingAnswer,
    MissingBaseline,
    MissingProbs,
    OutOfRange,
    SparseCurve,
    UnknownProbe,
    UnpairedProbe,
)
from .geometry import kl_divergence
from .kg import Mode
from .probes import Phase
from .util import load_jsonl


class DistanceKind(str, Enum):
    LABEL_CHANGE = "label_change"
    KL = "kl"


class FailureKind(str, Enum):
    UNDER_FORGETTING = "under_forgetting"
    OVER_SPREADING = "over_spreading"
    CONFLICT_EMERGENCE = "conflict_emergence"
    KNOWLEDGE_DRIFT = "knowledge_drift"
    INSTRUCTION_FOLLOWING_DROP = "instruction_following_drop"
    HALLUCINATION_INCREASE = "hallucination_increase"


@dataclass(frozen=True)
class AnswerRecord:
    probe_id: str
    model_id: str
    phase: Phase
    chosen_index: int
    choice_probs: Optional[tuple[float, float, float, float]] = None

    def __post_init__(self) -> None:
        if not 0 <= self.chosen_index <= 3:
            raise ValueError("chosen_index must be in 0..3")
        if self.choice_probs is not None:
            probs = tuple(float(p) for p in self.choice_probs)
            if len(probs) != 4:
                raise ValueError("choice_probs must hold 4 values")
            if any(p < 0 for p in probs):
                raise ValueError("choice_probs must be non-negative")
            if abs(sum(probs) - 1.0) > 1e-3:
                raise ValueError(f"choice_probs sum to {sum(probs):.6f}")
            object.__setattr__(self, "choice_probs", probs)

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "AnswerRecord":
        probs = rec.get("choice_probs")
        return cls(
            probe_id=rec["probe_id"],
            model_id=rec["model_id"],
            phase=Phase(rec["phase"]),
            chosen_index=int(rec["chosen_index"]),
            choice_probs=tuple(probs) if probs is not None else None,
        )

    def to_record(self) -> dict[str, Any]:
        return {
            "probe_id": self.probe_id,
            "model_id": self.model_id,
            "phase": self.phase.value,
            "chosen_index": self.chosen_index,
            "choice_probs": list(self.choice_probs) if self.choice_probs else None,
        }


@dataclass(frozen=True)
class EvalConfig:
    # radius 4 covers the diameter of a three-level hierarchy
    # (leaf -> intermediate -> root -> intermediate -> leaf)
    eta_plus: float = 0.1
    epsilon: float = 0.1
    distance: DistanceKind = DistanceKind.LABEL_CHANGE
    collapse_delta: float = 0.10
    reverse_floor: float = 0.50
    radius: int = 4

    def __post_init__(self) -> None:
        if self.eta_plus < 0 or self.epsilon < 0:
            raise ValueError("eta_plus and epsilon must be non-negative")
        if not 0 < self.collapse_delta < 1:
            raise ValueError("collapse_delta must be in (0, 1)")
        if not 0 < self.reverse_floor <= 1:
            raise ValueError("reverse_floor must be in (0, 1]")
        if self.radius < 1:
            raise ValueError("radius must be >= 1")


@dataclass(frozen=True)
class FailureThresholds:
    t_rr: float = 0.5
    t_ccr: float = 0.3
    t_cf: float = 0.2
    t_ood: float = 0.05
    t_if: float = 0.10
    t_h: float = 0.05


@dataclass(frozen=True)
class FailureMode:
    kind: FailureKind
    severity: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.severity <= 1.0:
            raise ValueError("severity must lie in [0, 1]")


@dataclass(frozen=True)
class PlasticityCurve:
    branch: str
    domain: str
    mode: str
    scale_points: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        scales = [s for s, _ in self.scale_points]
        if scales != sorted(set(scales)):
            raise ValueError("scale tags must be strictly increasing")

    @property
    def scales(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.scale_points)

    @property
    def accuracies(self) -> tuple[float, ...]:
        return tuple(a for _, a in self.scale_points)

    @property
    def ceiling(self) -> float:
        return max(self.accuracies)


@dataclass
class MetricReport:
    model_id: str = ""
    mode: str = Mode.EDIT.value
    accuracy_by: dict[tuple[str, str, str, str, str], float] = field(default_factory=dict)
    ccr: Optional[float] = None
    rr: Optional[float] = None
    over_spread: Optional[float] = None
    under_spread: Optional[float] = None
    conflict_rate: Optional[float] = None
    collapse_scale: Optional[int] = None
    failure_modes: list[FailureMode] = field(default_factory=list)
    aux: dict[str, float] = field(default_factory=dict)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "model_id": self.model_id,
            "mode": self.mode,
            "accuracy": [
                {
                    "phase": k[0],
                    "probe_type": k[1],
                    "branch": k[2],
                    "domain": k[3],
                    "split": k[4],
                    "value": v,
                    "percent": as_percent(v),
                }
                for k, v in sorted(self.accuracy_by.items())
            ],
            "ccr": self.ccr,
            "rr": self.rr,
            "over_spread": self.over_spread,
            "under_spread": self.under_spread,
            "conflict_rate": self.conflict_rate,
            "collapse_scale": self.collapse_scale,
            "failure_modes": [
                {"kind": f.kind.value, "severity": f.severity} for f in self.failure_modes
            ],
            "aux": dict(sorted(self.aux.items())),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(
            ["section", "phase", "probe_type", "branch", "domain", "split", "metric", "value", "percent"]
        )
        for k, v in sorted(self.accuracy_by.items()):
            writer.writerow(["accuracy", *k, "accuracy", f"{v:.6f}", f"{as_percent(v):.2f}"])
        for name in ("ccr", "rr", "over_spread", "under_spread", "conflict_rate"):
            value = getattr(self, name)
            if value is not None:
                writer.writerow(["summary", "", "", "", "", "", name, f"{value:.6f}", f"{as_percent(value):.2f}"])
        if self.collapse_scale is not None:
            writer.writerow(["summary", "", "", "", "", "", "collapse_scale", self.collapse_scale, ""])
        for f in self.failure_modes:
            writer.writerow(["failure", "", "", "", "", "", f.kind.value, f"{f.severity:.6f}", ""])
        for key, value in sorted(self.aux.items()):
            writer.writerow(["aux", "", "", "", "", "", key, f"{value:.6f}", ""])
        return buf.getvalue()


def as_percent(value: float) -> float:
    """Two-decimal percent formatting used in report tables."""
    return round(value * 100.0, 2)


ProbeRecord = Mapping[str, Any]


def load_probe_key(path: str) -> dict[str, ProbeRecord]:
    """Load a probe JSONL file keyed by probe_id."""
    key: dict[str, ProbeRecord] = {}
    for rec in load_jsonl(path):
        pid = rec["probe_id"]
        if pid in key:
            raise UnknownProbe(f"duplicate probe_id in key: {pid}")
        key[pid] = rec
    return key


def load_answers(path: str) -> list[AnswerRecord]:
    return [AnswerRecord.from_record(rec) for rec in load_jsonl(path)]


def _answers_by_probe(answers: Iterable[AnswerRecord]) -> dict[str, AnswerRecord]:
    out: dict[str, AnswerRecord] = {}
    for ans in answers:
        if ans.probe_id in out:
            raise ValueError(f"duplicate answer for probe {ans.probe_id}")
        out[ans.probe_id] = ans
    return out


def score(
    answers: Sequence[AnswerRecord],
    key: Mapping[str, ProbeRecord],
    filt: Callable[[ProbeRecord], bool] = lambda rec: True,
) -> float:
    """Fraction of filtered probes answered with the keyed correct option.

    Every filtered probe must have an answer and every answer must resolve
    in the key.
    """
    by_probe = _answers_by_probe(answers)
    unknown = sorted(set(by_probe) - set(key))
    if unknown:
        raise UnknownProbe(f"answers reference unknown probes: {unknown[:5]}")
    selected = [pid for pid, rec in key.items() if filt(rec)]
    if not selected:
        raise EmptyFilter("filter selected no probes")
    correct = 0
    for pid in selected:
        ans = by_probe.get(pid)
        if ans is None:
            raise MissingAnswer(f"no answer for probe {pid}")
        if ans.chosen_index == int(key[pid]["correct_index"]):
            correct += 1
    return correct / len(selected)


def _paired_answers(
    pre: Sequence[AnswerRecord],
    post: Sequence[AnswerRecord],
    related: Iterable[str],
) -> list[tuple[str, AnswerRecord, AnswerRecord]]:
    pre_by = _answers_by_probe(pre)
    post_by = _answers_by_probe(post)
    out = []
    for pid in related:
        a, b = pre_by.get(pid), post_by.get(pid)
        if a is None or b is None:
            phase = "pre" if a is None else "post"
            raise MissingAnswer(f"related probe {pid} lacks a {phase} answer")
        out.append((pid, a, b))
    if not out:
        raise MissingAnswer("related probe set is empty")
    return out


def ccr(
    pre: Sequence[AnswerRecord],
    post: Sequence[AnswerRecord],
    related: Iterable[str],
    distance: DistanceKind | str = DistanceKind.LABEL_CHANGE,
) -> float:
    """Collateral change ratio: mean prediction distance over related probes.

    label_change averages the indicator of a changed choice; kl averages
    KL(post || pre) over the 4-way choice distributions.
    """
    distance = DistanceKind(distance)
    pairs = _paired_answers(pre, post, related)
    if distance is DistanceKind.LABEL_CHANGE:
        changed = sum(1 for _, a, b in pairs if a.chosen_index != b.chosen_index)
        return changed / len(pairs)
    total = 0.0
    for pid, a, b in pairs:
        if a.choice_probs is None or b.choice_probs is None:
            raise MissingProbs(f"probe {pid} lacks choice_probs for KL distance")
        total += kl_divergence(b.choice_probs, a.choice_probs)
    return total / len(pairs)


def rr(
    pre: Sequence[AnswerRecord],
    post: Sequence[AnswerRecord],
    related: Iterable[str],
    ground_truth: Optional[Mapping[str, int]] = None,
) -> float:
    """Residual retention: fraction of related probes whose post prediction
    matches the pre prediction.

    With `ground_truth` (probe_id -> keyed index), post predictions are
    instead compared against those keyed answers; the default compares
    against the pre model's own predictions.
    """
    pairs = _paired_answers(pre, post, related)
    if ground_truth is None:
        same = sum(1 for _, a, b in pairs if a.chosen_index == b.chosen_index)
    else:
        same = sum(1 for pid, _, b in pairs if b.chosen_index == ground_truth[pid])
    return same / len(pairs)


def spread_proxies(
    direct_acc: float, multihop_acc: float, mode: Mode | str
) -> tuple[Optional[float], Optional[float]]:
    """Multi-hop accuracy proxies: (over_spread, under_spread).

    Editing reports over-spread = 1 - multi-hop accuracy; unlearning reports
    under-spread = multi-hop accuracy. The inapplicable proxy is None.
    """
    for name, v in (("direct_acc", direct_acc), ("multihop_acc", multihop_acc)):
        if not 0.0 <= v <= 1.0:
            raise OutOfRange(f"{name}={v} outside [0, 1]")
    if Mode(mode) is Mode.EDIT:
        return (1.0 - multihop_acc, None)
    return (None, multihop_acc)


def conflict_pairs_from_key(
    key: Mapping[str, ProbeRecord],
) -> list[tuple[ProbeRecord, ProbeRecord]]:
    """Collect (old, new) conflict pairs: the pre-keyed member affirms the
    original object, the post-keyed member the updated one."""
    groups: dict[str, dict[str, ProbeRecord]] = {}
    for rec in key.values():
        if rec.get("probe_type") != "conflict":
            continue
        pair_id = rec.get("pair_id")
        if not pair_id:
            raise UnpairedProbe(f"conflict probe {rec['probe_id']} lacks pair_id")
        groups.setdefault(pair_id, {})[rec["keyed_phase"]] = rec
    pairs = []
    for pair_id, members in sorted(groups.items()):
        if set(members) != {"pre", "post"}:
            raise UnpairedProbe(f"conflict pair {pair_id} is incomplete")
        pairs.append((members["pre"], members["post"]))
    return pairs


def conflict_rate(
    post: Sequence[AnswerRecord],
    pairs: Sequence[tuple[ProbeRecord, ProbeRecord]],
) -> float:
    """Fraction of conflict pairs where the model affirms both statements:
    the original object on the old-keyed probe and the updated object on the
    new-keyed probe."""
    if not pairs:
        raise UnpairedProbe("no conflict pairs supplied")
    post_by = _answers_by_probe(post)
    conflicted = 0
    for old_rec, new_rec in pairs:
        try:
            ans_old = post_by[old_rec["probe_id"]]
            ans_new = post_by[new_rec["probe_id"]]
        except KeyError as exc:
            raise MissingAnswer(f"conflict probe unanswered in post phase: {exc}") from exc
        affirms_old = ans_old.chosen_index == int(old_rec["correct_index"])
        affirms_new = ans_new.chosen_index == int(new_rec["correct_index"])
        if affirms_old and affirms_new:
            conflicted += 1
    return conflicted / len(pairs)


def collapse_point(
    direct: PlasticityCurve,
    reverse: PlasticityCurve,
    cfg: EvalConfig,
) -> Optional[int]:
    """Smallest scale (never the first) where direct accuracy falls at least
    collapse_delta below its running maximum while reverse accuracy stays at
    or above reverse_floor. None when never triggered."""
    if direct.scales != reverse.scales:
        raise CurveMismatch(f"scales differ: {direct.scales} vs {reverse.scales}")
    running_max = -math.inf
    for i, (scale, acc) in enumerate(direct.scale_points):
        if i > 0 and running_max - acc >= cfg.collapse_delta:
            if reverse.accuracies[i] >= cfg.reverse_floor:
                return scale
        running_max = max(running_max, acc)
    return None


def classify_failures(
    report: MetricReport,
    baselines: Mapping[str, float],
    thresholds: FailureThresholds = FailureThresholds(),
) -> list[FailureMode]:
    """Deterministic rule map from a metric bundle to failure modes.

    Severity is the excess over the rule's threshold, normalized by the
    threshold and clipped to [0, 1].
    """

    def severity(value: float, threshold: float) -> float:
        return min(max((value - threshold) / threshold, 0.0), 1.0)

    failures: list[FailureMode] = []

    if report.mode == Mode.UNLEARN.value and report.rr is not None and report.rr >= thresholds.t_rr:
        failures.append(FailureMode(FailureKind.UNDER_FORGETTING, severity(report.rr, thresholds.t_rr)))
    if report.ccr is not None and report.ccr >= thresholds.t_ccr:
        failures.append(FailureMode(FailureKind.OVER_SPREADING, severity(report.ccr, thresholds.t_ccr)))
    if report.conflict_rate is not None and report.conflict_rate >= thresholds.t_cf:
        failures.append(
            FailureMode(FailureKind.CONFLICT_EMERGENCE, severity(report.conflict_rate, thresholds.t_cf))
        )

    drop_rules = (
        ("ood_accuracy", FailureKind.KNOWLEDGE_DRIFT, thresholds.t_ood),
        ("judge_score", FailureKind.INSTRUCTION_FOLLOWING_DROP, thresholds.t_if),
        ("truthfulness_accuracy", FailureKind.HALLUCINATION_INCREASE, thresholds.t_h),
    )
    for aux_key, kind, threshold in drop_rules:
        post_value = report.aux.get(aux_key)
        if post_value is None:
            continue
        base = baselines.get(aux_key)
        if base is None:
            raise MissingBaseline(f"baseline {aux_key!r} required to assess {kind.value}")
        drop = base - post_value
        if drop >= threshold:
            failures.append(FailureMode(kind, severity(drop, threshold)))

    return failures


def plasticity_curves(
    score_table: Mapping[tuple[int, str, str, str], float],
) -> list[PlasticityCurve]:
    """Group (scale, branch, domain, mode) accuracies into per-cell curves
    sorted by scale. Each curve needs at least two scale points."""
    cells: dict[tuple[str, str, str], list[tuple[int, float]]] = {}
    for (scale, branch, domain, mode), acc in score_table.items():
        cells.setdefault((branch, domain, mode), []).append((int(scale), float(acc)))
    curves = []
    for (branch, domain, mode), points in sorted(cells.items()):
        points.sort()
        if len(points) < 2:
            raise SparseCurve(f"curve ({branch}, {domain}, {mode}) has {len(points)} point(s)")
        curves.append(
            PlasticityCurve(branch=branch, domain=domain, mode=mode, scale_points=tuple(points))
        )
    return curves


def tradeoff_report(id_gain: float, ood_pre: float, ood_post: float) -> tuple[float, float]:
    """Package the in-domain gain with the out-of-domain drift
    (drift = ood_pre - ood_post; negative drift means OOD improved)."""
    for name, v in (("id_gain", id_gain), ("ood_pre", ood_pre), ("ood_post", ood_post)):
        if not 0.0 <= v <= 1.0:
            raise OutOfRange(f"{name}={v} outside [0, 1]")
    return (id_gain, ood_pre - ood_post)


def threshold_annotations(
    pre: Sequence[AnswerRecord],
    post: Sequence[AnswerRecord],
    key: Mapping[str, ProbeRecord],
    cfg: EvalConfig,
) -> dict[str, bool]:
    """Pass/fail annotations against the edit tolerance and stability
    thresholds, available only in KL mode with full choice distributions.

    Positive probes pass when the post distribution puts enough mass on the
    keyed answer (-ln p <= eta_plus); preservation probes pass when drift
    KL(post || pre) <= epsilon. Annotations never gate metric computation.
    """
    if cfg.distance is not DistanceKind.KL:
        return {}
    pre_by = _answers_by_probe(pre)
    post_by = _answers_by_probe(post)
    out: dict[str, bool] = {}
    for pid, rec in key.items():
        a, b = pre_by.get(pid), post_by.get(pid)
        if a is None or b is None or a.choice_probs is None or b.choice_probs is None:
            continue
        if rec.get("polarity") == "positive":
            p_correct = b.choice_probs[int(rec["correct_index"])]
            dist = math.inf if p_correct == 0 else -math.log(p_correct)
            out[pid] = dist <= cfg.eta_plus
        else:
            out[pid] = kl_divergence(b.choice_probs, a.choice_probs) <= cfg.epsilon
    return out


@dataclass(frozen=True)
class SplitRule:
    """Derive the robustness split of a probe record from its tags."""

    adversarial_tag: str = "adversarial"
    ood_tag: str = "OOD"

    def __call__(self, rec: ProbeRecord) -> str:
        tags = rec.get("tags") or ()
        if self.adversarial_tag in tags:
            return "adversarial"
        if self.ood_tag in tags:
            return "OOD"
        return "ID"


def build_report(
    key: Mapping[str, ProbeRecord],
    pre_answers: Sequence[AnswerRecord],
    post_answers: Sequence[AnswerRecord],
    cfg: EvalConfig = EvalConfig(),
    mode: Mode | str = Mode.EDIT,
    model_id: str = "",
) -> MetricReport:
    """Assemble the full metric bundle for one pre/post answer-log pair.

    Accuracy cells score each phase's answers against the items keyed to
    that phase; the related set for CCR/RR is the multi-hop probes within
    the configured radius.
    """
    mode = Mode(mode)
    split_of = SplitRule()
    report = MetricReport(model_id=model_id, mode=mode.value)

    phase_answers = {Phase.PRE: pre_answers, Phase.POST: post_answers}
    for phase, answers in phase_answers.items():
        covered = _answers_by_probe(answers)
        unknown = sorted(set(covered) - set(key))
        if unknown:
            raise UnknownProbe(f"{phase.value} answers reference unknown probes: {unknown[:5]}")
        missing = sorted(set(key) - set(covered))
        if missing:
            raise MissingAnswer(f"probe {missing[0]} has no {phase.value}-phase answer")
    cells: dict[tuple[str, str, str, str, str], list[str]] = {}
    for pid, rec in key.items():
        cell = (
            rec["keyed_phase"],
            rec["probe_type"],
            rec["branch"],
            rec["domain"],
            split_of(rec),
        )
        cells.setdefault(cell, []).append(pid)
    for cell, pids in cells.items():
        phase = Phase(cell[0])
        members = set(pids)
        report.accuracy_by[cell] = score(
            phase_answers[phase], key, lambda rec: rec["probe_id"] in members
        )

    related = sorted(
        pid
        for pid, rec in key.items()
        if rec["probe_type"] == "multi_hop" and int(rec["hop_distance"]) <= cfg.radius
    )
    if related:
        report.ccr = ccr(pre_answers, post_answers, related, distance=cfg.distance)
        report.rr = rr(pre_answers, post_answers, related)

    post_keyed = lambda rec, ptype: (
        rec["probe_type"] == ptype and rec["keyed_phase"] == Phase.POST.value
    )
    try:
        direct_acc = score(post_answers, key, lambda rec: post_keyed(rec, "direct"))
        multihop_acc = score(post_answers, key, lambda rec: post_keyed(rec, "multi_hop"))
    except EmptyFilter:
        direct_acc = multihop_acc = None
    if direct_acc is not None and multihop_acc is not None:
        report.over_spread, report.under_spread = spread_proxies(direct_acc, multihop_acc, mode)

    pairs = conflict_pairs_from_key(key)
    if pairs:
        report.conflict_rate = conflict_rate(post_answers, pairs)

    annotations = threshold_annotations(pre_answers, post_answers, key, cfg)
    if annotations:
        passed = sum(annotations.values())
        report.aux["threshold_pass_rate"] = passed / len(annotations)

    return report
