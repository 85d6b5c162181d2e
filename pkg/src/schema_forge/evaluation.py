"""Evaluation metrics: token tagging PRF, intent/slot scores, cluster agreement.

All of these are pure functions over label sequences; nothing here
touches models or files. Entropy-based cluster scores use natural logs
(the ratio form makes the base cancel anyway).
"""

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

from schema_forge.corpus import AnnotatedUtterance, IntentRole


@dataclass(frozen=True, slots=True)
class ClassPrf:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class PrfReport:
    """Aggregate precision/recall/F1 plus optional per-class breakdown."""

    precision: float
    recall: float
    f1: float
    support: int
    average: str
    per_class: Mapping[str, ClassPrf] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "support": self.support,
            "average": self.average,
            "per_class": {
                k: {
                    "precision": v.precision,
                    "recall": v.recall,
                    "f1": v.f1,
                    "support": v.support,
                }
                for k, v in self.per_class.items()
            },
        }


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def token_prf(
    gold: Sequence[AnnotatedUtterance], pred: Sequence[AnnotatedUtterance]
) -> PrfReport:
    """Token-level tagging score with B-/I- positions collapsed to their role.

    Classes are the four intent-roles; a token counts as correct when
    both sides assign it the same role, so boundary-only disagreements
    (B vs I) do not penalize. O tokens enter only as false positives or
    false negatives when exactly one side tags them. The overall row is
    the mean of the per-role scores weighted by gold support.
    """
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold vs {len(pred)} predicted utterances")
    tp: Counter[IntentRole] = Counter()
    fp: Counter[IntentRole] = Counter()
    fn: Counter[IntentRole] = Counter()
    for g, p in zip(gold, pred):
        if len(g.tags) != len(p.tags):
            raise ValueError(f"length mismatch on utterance {g.utterance.id!r}")
        for gt, pt in zip(g.tags, p.tags):
            gr = gt.role
            pr = pt.role
            if gr is not None and pr is gr:
                tp[gr] += 1
            else:
                if pr is not None:
                    fp[pr] += 1
                if gr is not None:
                    fn[gr] += 1
    classes = [c for c in sorted(set(tp) | set(fn) | set(fp)) if c is not None]
    per_class = {}
    for c in classes:
        p, r, f = _prf(tp[c], fp[c], fn[c])
        per_class[c.value] = ClassPrf(p, r, f, tp[c] + fn[c])
    total = sum(tp[c] + fn[c] for c in classes)
    if total:
        weights = {c: (tp[c] + fn[c]) / total for c in classes}
        p = sum(weights[c] * per_class[c.value].precision for c in classes)
        r = sum(weights[c] * per_class[c.value].recall for c in classes)
        f = sum(weights[c] * per_class[c.value].f1 for c in classes)
    else:
        p = r = f = 0.0
    return PrfReport(p, r, f, total, "weighted", per_class)


def intent_scores(
    gold: Sequence[str], pred: Sequence[str]
) -> PrfReport:
    """Macro-averaged PRF over intent names; classes are those present in gold."""
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold vs {len(pred)} predicted intents")
    if not gold:
        raise ValueError("cannot score an empty intent list")
    classes = sorted(set(gold))
    per_class = {}
    f1s = []
    ps = []
    rs = []
    for c in classes:
        tp = sum(1 for g, q in zip(gold, pred) if g == c and q == c)
        fp = sum(1 for g, q in zip(gold, pred) if g != c and q == c)
        fn = sum(1 for g, q in zip(gold, pred) if g == c and q != c)
        p, r, f = _prf(tp, fp, fn)
        per_class[c] = ClassPrf(p, r, f, tp + fn)
        ps.append(p)
        rs.append(r)
        f1s.append(f)
    n = len(classes)
    return PrfReport(
        sum(ps) / n if n else 0.0,
        sum(rs) / n if n else 0.0,
        sum(f1s) / n if n else 0.0,
        len(gold),
        "macro",
        per_class,
    )


def slot_scores(
    gold: Sequence[Mapping[str, Sequence[str]]],
    pred: Sequence[Mapping[str, Sequence[str]]],
) -> PrfReport:
    """Set-based slot filling score.

    Each utterance contributes the set of (slot name, value) pairs;
    precision/recall pool true positives across the corpus.
    """
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold vs {len(pred)} predicted slot maps")
    tp = fp = fn = 0
    for g, q in zip(gold, pred):
        gset = {(k, v) for k, vs in g.items() for v in vs}
        qset = {(k, v) for k, vs in q.items() for v in vs}
        tp += len(gset & qset)
        fp += len(qset - gset)
        fn += len(gset - qset)
    p, r, f = _prf(tp, fp, fn)
    return PrfReport(p, r, f, tp + fn, "micro")


# ---------------------------------------------------------------------------
# Cluster agreement
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ClusteringReport:
    homogeneity: float
    completeness: float
    v_measure: float

    def to_json(self) -> dict:
        return {
            "homogeneity": self.homogeneity,
            "completeness": self.completeness,
            "v_measure": self.v_measure,
        }


def _entropy(counts: Sequence[int], n: int) -> float:
    return -sum((c / n) * math.log(c / n) for c in counts if c)


def clustering_scores(
    gold: Sequence[Hashable], pred: Sequence[Hashable]
) -> ClusteringReport:
    """Homogeneity, completeness and their harmonic mean.

    homogeneity = 1 - H(gold | pred) / H(gold), defined as 1.0 when
    H(gold) is zero; completeness is the mirror image. The harmonic
    mean is 0.0 when both terms are zero.
    """
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold vs {len(pred)} predicted labels")
    n = len(gold)
    if n == 0:
        raise ValueError("cannot score an empty labeling")
    gold_counts = Counter(gold)
    pred_counts = Counter(pred)
    joint: Counter[tuple[Hashable, Hashable]] = Counter(zip(gold, pred))

    h_gold = _entropy(list(gold_counts.values()), n)
    h_pred = _entropy(list(pred_counts.values()), n)

    # H(gold | pred) = -sum_{c,k} p(c,k) log(p(c,k) / p(k))
    h_gold_given_pred = -sum(
        (c / n) * math.log(c / pred_counts[k])
        for (_, k), c in joint.items()
    )
    h_pred_given_gold = -sum(
        (c / n) * math.log(c / gold_counts[g])
        for (g, _), c in joint.items()
    )

    homogeneity = 1.0 if h_gold == 0.0 else 1.0 - h_gold_given_pred / h_gold
    completeness = 1.0 if h_pred == 0.0 else 1.0 - h_pred_given_gold / h_pred
    s = homogeneity + completeness
    v = 2.0 * homogeneity * completeness / s if s else 0.0
    return ClusteringReport(homogeneity, completeness, v)


def format_report(report: PrfReport | ClusteringReport, title: str = "") -> str:
    """Render a report as an aligned plain-text table."""
    lines = []
    if title:
        lines.append(title)
    if isinstance(report, ClusteringReport):
        lines.append(f"{'homogeneity':<14}{report.homogeneity:>10.4f}")
        lines.append(f"{'completeness':<14}{report.completeness:>10.4f}")
        lines.append(f"{'v-measure':<14}{report.v_measure:>10.4f}")
        return "\n".join(lines)
    header = f"{'class':<16}{'prec':>8}{'rec':>8}{'f1':>8}{'support':>9}"
    lines.append(header)
    lines.append("-" * len(header))
    for name, c in sorted(report.per_class.items()):
        lines.append(
            f"{name:<16}{c.precision:>8.4f}{c.recall:>8.4f}{c.f1:>8.4f}{c.support:>9d}"
        )
    lines.append(
        f"{report.average:<16}{report.precision:>8.4f}{report.recall:>8.4f}"
        f"{report.f1:>8.4f}{report.support:>9d}"
    )
    return "\n".join(lines)
