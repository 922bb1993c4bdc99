"""Retrieval scoring: top-K accuracy, majority-vote metrics, uncertain triage.

Everything here is a pure function of ranked retrieval results and labels, so
reports regenerate identically from persisted results.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, ProtocolError
from .store import FeatureStore, Neighbor, RetrievalResult, query_top_k


def _check_results(results: list[RetrievalResult], query_labels: list) -> None:
    if len(results) != len(query_labels):
        raise DataError(f"{len(results)} results for {len(query_labels)} query labels")
    if not results:
        raise DataError("no queries to score")
    for r in results:
        if not r.neighbors:
            raise DataError(f"query {r.query_id!r} retrieved no neighbours")


def top_k_accuracy(results: list[RetrievalResult], query_labels: list, k: int) -> float:
    """Fraction of queries whose top-k neighbours include the query's label."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    _check_results(results, query_labels)
    hits = sum(
        1
        for result, truth in zip(results, query_labels)
        if any(n.label == truth for n in result.neighbors[:k])
    )
    return hits / len(results)


def majority_vote_label(result: RetrievalResult, k: int):
    """Most frequent label among the top-k neighbours.

    A tie falls to the label of the nearest neighbour within the tied set.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    neighbors = result.neighbors[:k]
    if not neighbors:
        raise DataError(f"query {result.query_id!r} has no neighbours to vote over")
    counts = Counter(n.label for n in neighbors)
    top = max(counts.values())
    tied = {label for label, c in counts.items() if c == top}
    if len(tied) == 1:
        return tied.pop()
    for n in neighbors:
        if n.label in tied:
            return n.label


@dataclass
class MetricsReport:
    k: int
    top_k_accuracy: float
    precision: float
    recall: float
    f1: float
    per_class_f1: dict
    confusion_matrix: np.ndarray
    classes: list


def metrics_at_k(results: list[RetrievalResult], query_labels: list, k: int) -> MetricsReport:
    """Majority-vote confusion matrix (rows true, cols predicted) plus macro P/R/F1.

    Classes are the sorted distinct query labels; a voted label outside them
    means the store and queries disagree and raises DataError.
    """
    _check_results(results, query_labels)
    predictions = [majority_vote_label(r, k) for r in results]
    classes = sorted(set(query_labels))
    index = {c: i for i, c in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for truth, pred in zip(query_labels, predictions):
        if pred not in index:
            raise DataError(f"voted label {pred!r} is not among query classes {classes}")
        confusion[index[truth], index[pred]] += 1

    per_precision, per_recall, per_f1 = {}, {}, {}
    for c, i in index.items():
        tp = confusion[i, i]
        fp = confusion[:, i].sum() - tp
        fn = confusion[i, :].sum() - tp
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        per_precision[c] = float(p)
        per_recall[c] = float(r)
        per_f1[c] = float(2 * p * r / (p + r)) if p + r else 0.0

    n = len(classes)
    return MetricsReport(
        k=k,
        top_k_accuracy=top_k_accuracy(results, query_labels, k),
        precision=sum(per_precision.values()) / n,
        recall=sum(per_recall.values()) / n,
        f1=sum(per_f1.values()) / n,
        per_class_f1=per_f1,
        confusion_matrix=confusion,
        classes=classes,
    )


@dataclass
class UncertainRow:
    query_id: str
    neighbors: list[Neighbor]
    benign_count: int
    malignant_count: int
    suggested_label: int
    margin_score: float


@dataclass
class UncertainReport:
    k: int
    rows: list[UncertainRow] = field(default_factory=list)


def uncertain_query_report(store: FeatureStore, network, uncertain_patches,
                           k: int) -> UncertainReport:
    """Neighbour label tally for unlabelled patches against a benign/malignant store.

    margin_score is |benign - malignant| / k: 1.0 means unanimous, 0.0 an even
    split. The store must hold only labels 0 and 1.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    labels = set(store.label_counts())
    if not labels or not labels <= {0, 1}:
        raise ProtocolError(
            "uncertain-query triage needs a store labelled 0/1 only, got "
            f"{sorted(labels, key=repr)}"
        )
    report = UncertainReport(k=k)
    for rec in uncertain_patches:
        result = query_top_k(store, network.embed(rec.pixels), k,
                             exclude_id=rec.patch_id, query_id=rec.patch_id)
        if len(result.neighbors) < k:
            raise DataError(
                f"store holds only {len(result.neighbors)} candidates for k={k}"
            )
        benign = sum(1 for n in result.neighbors if n.label == 0)
        malignant = k - benign
        report.rows.append(UncertainRow(
            query_id=rec.patch_id,
            neighbors=result.neighbors,
            benign_count=benign,
            malignant_count=malignant,
            suggested_label=majority_vote_label(result, k),
            margin_score=abs(benign - malignant) / k,
        ))
    return report


@dataclass
class EvalRun:
    results: list[RetrievalResult]
    query_labels: list
    reports: dict[int, MetricsReport]


def run_retrieval_eval(network, store: FeatureStore, query_records,
                       ks=(1, 3, 5)) -> EvalRun:
    """Embed each query, rank the store once at the largest k, score at every k.

    Queries overlapping the store are excluded from their own result list.
    """
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1:
        raise ConfigError(f"ks must be positive, got {ks}")
    results, labels = [], []
    for rec in query_records:
        results.append(query_top_k(store, network.embed(rec.pixels), ks[-1],
                                   exclude_id=rec.patch_id, query_id=rec.patch_id))
        labels.append(rec.label)
    reports = {k: metrics_at_k(results, labels, k) for k in ks}
    return EvalRun(results=results, query_labels=labels, reports=reports)


def save_retrieval_results(results: list[RetrievalResult], query_labels: list,
                           path) -> None:
    """One JSON object per query so reports can be re-scored offline."""
    with open(path, "w", encoding="utf-8") as fh:
        for result, label in zip(results, query_labels):
            row = {
                "query_id": result.query_id,
                "query_label": None if label is None else int(label),
                "neighbors": [
                    {"patch_id": n.patch_id, "distance": float(n.distance),
                     "label": None if n.label is None else int(n.label)}
                    for n in result.neighbors
                ],
            }
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")


def load_retrieval_results(path) -> tuple[list[RetrievalResult], list]:
    results, labels = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"results line {i} is not valid JSON: {exc}") from exc
            neighbors = [
                Neighbor(n["patch_id"], n["label"], float(n["distance"]))
                for n in row["neighbors"]
            ]
            results.append(RetrievalResult(row["query_id"], neighbors))
            labels.append(row["query_label"])
    if not results:
        raise DataError(f"no retrieval results in {path}")
    return results, labels


def report_to_dict(report: MetricsReport) -> dict:
    return {
        "k": report.k,
        "top_k_accuracy": report.top_k_accuracy,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "per_class_f1": {str(c): v for c, v in report.per_class_f1.items()},
        "classes": report.classes,
        "confusion_matrix": report.confusion_matrix.tolist(),
    }


def save_reports_json(reports: dict[int, MetricsReport], path) -> None:
    payload = {str(k): report_to_dict(r) for k, r in sorted(reports.items())}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def format_report_text(reports: dict[int, MetricsReport], n_queries: int) -> str:
    """Aligned, human-readable rendering of one evaluation run."""
    lines = [f"queries: {n_queries}"]
    for k in sorted(reports):
        r = reports[k]
        lines.append(
            f"k={k}: top-{k} acc {r.top_k_accuracy:.4f}  "
            f"precision {r.precision:.4f}  recall {r.recall:.4f}  f1 {r.f1:.4f}"
        )
    for k in sorted(reports):
        r = reports[k]
        lines.append("")
        lines.append(f"confusion matrix at k={k} (rows true, cols predicted)")
        lines.append("true\\pred " + " ".join(f"{c!s:>8}" for c in r.classes))
        for i, c in enumerate(r.classes):
            row = " ".join(f"{int(v):>8}" for v in r.confusion_matrix[i])
            lines.append(f"{c!s:>9} {row}")
        lines.append(f"{'class':>9} {'f1':>9}")
        for c in r.classes:
            lines.append(f"{c!s:>9} {r.per_class_f1[c]:>9.4f}")
    return "\n".join(lines) + "\n"


def confusion_csv(report: MetricsReport) -> str:
    header = "true\\pred," + ",".join(str(c) for c in report.classes)
    lines = [header]
    for i, c in enumerate(report.classes):
        lines.append(f"{c}," + ",".join(str(int(v)) for v in report.confusion_matrix[i]))
    return "\n".join(lines) + "\n"


def uncertain_report_csv(report: UncertainReport) -> str:
    lines = ["query_id,benign_count,malignant_count,suggested_label,margin_score"]
    for row in report.rows:
        lines.append(
            f"{row.query_id},{row.benign_count},{row.malignant_count},"
            f"{row.suggested_label},{row.margin_score:.6f}"
        )
    return "\n".join(lines) + "\n"
