"""
Evaluation harness: train/validation/test split, confusion counts and the
loss/accuracy/precision/recall/F1 metric suite.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from sklearn.metrics import confusion_matrix

from config import Config
from backend.utils.errors import ContractError

logger = logging.getLogger(__name__)

# (precision, recall, reported F1) of eight reference test runs
REFERENCE_RUNS = [
    (0.968, 0.899, 0.932),
    (0.994, 0.956, 0.974),
    (0.681, 0.874, 0.765),
    (0.693, 0.836, 0.758),
    (0.965, 0.971, 0.968),
    (0.991, 0.968, 0.979),
    (0.759, 0.682, 0.719),
    (0.991, 0.937, 0.963),
]


@dataclass
class SplitPlan:
    seed: int
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray

    @property
    def sizes(self) -> Tuple[int, int, int]:
        return len(self.train_idx), len(self.val_idx), len(self.test_idx)

    def to_dict(self) -> Dict:
        return {
            'seed': self.seed,
            'train': [int(i) for i in self.train_idx],
            'val': [int(i) for i in self.val_idx],
            'test': [int(i) for i in self.test_idx],
        }

    @classmethod
    def from_dict(cls, payload: Dict) -> 'SplitPlan':
        return cls(
            seed=int(payload['seed']),
            train_idx=np.asarray(payload['train'], dtype=np.int64),
            val_idx=np.asarray(payload['val'], dtype=np.int64),
            test_idx=np.asarray(payload['test'], dtype=np.int64),
        )


@dataclass
class Metrics:
    tp: int
    fp: int
    tn: int
    fn: int
    loss: float
    accuracy: float
    precision: float
    recall: float
    f1: float
    flags: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            'loss': self.loss,
            'accuracy': self.accuracy,
            'precision': self.precision,
            'recall': self.recall,
            'f1': self.f1,
            'confusion': {'tp': self.tp, 'fp': self.fp, 'tn': self.tn, 'fn': self.fn},
            'flags': list(self.flags),
        }


def _round_half_up_percent(count: int, percent: int) -> int:
    return (count * percent + 50) // 100


def split_dataset(n: int, seed: int = Config.SPLIT_SEED,
                  test_fraction: float = Config.TEST_FRACTION,
                  val_fraction: float = Config.VALIDATION_FRACTION) -> SplitPlan:
    """
    Seeded permutation cut into test (first), validation, then training.

    Sizes round half up: |test| = round(0.20 n), |val| = round(0.10 (n - |test|)).
    """
    if n < 10:
        raise ContractError(f"Need at least 10 samples to split, got {n}")
    n_test = _round_half_up_percent(n, int(round(test_fraction * 100)))
    n_val = _round_half_up_percent(n - n_test, int(round(val_fraction * 100)))
    order = np.random.default_rng(seed).permutation(n)
    return SplitPlan(
        seed=int(seed),
        test_idx=np.sort(order[:n_test]),
        val_idx=np.sort(order[n_test:n_test + n_val]),
        train_idx=np.sort(order[n_test + n_val:]),
    )


def confusion(predictions: Sequence[int], labels: Sequence[int]) -> Tuple[int, int, int, int]:
    """(tp, fp, tn, fn) with class 1 (failed company) as positive"""
    predictions = np.asarray(predictions).astype(int).ravel()
    labels = np.asarray(labels).astype(int).ravel()
    if predictions.shape != labels.shape:
        raise ContractError(f"{len(predictions)} predictions for {len(labels)} labels")
    if not (np.isin(predictions, (0, 1)).all() and np.isin(labels, (0, 1)).all()):
        raise ContractError("Predictions and labels must be binary")
    if len(labels) == 0:
        return 0, 0, 0, 0
    tn, fp, fn, tp = confusion_matrix(labels, predictions, labels=[0, 1]).ravel()
    return int(tp), int(fp), int(tn), int(fn)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def compute_metrics(counts: Tuple[int, int, int, int], loss: float,
                    overfitting_threshold: float = Config.OVERFITTING_LOSS_THRESHOLD) -> Metrics:
    tp, fp, tn, fn = (int(c) for c in counts)
    if min(tp, fp, tn, fn) < 0:
        raise ContractError("Confusion counts must be non-negative")
    total = tp + fp + tn + fn
    if total == 0:
        raise ContractError("Cannot compute metrics from an empty confusion matrix")

    flags = []
    if tp + fp == 0:
        precision = 0.0
        flags.append('precision_undefined')
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 0.0
        flags.append('recall_undefined')
    else:
        recall = tp / (tp + fn)
    if precision + recall == 0:
        flags.append('f1_undefined')
    if loss > overfitting_threshold:
        flags.append('loss_above_overfitting_threshold')

    return Metrics(
        tp=tp, fp=fp, tn=tn, fn=fn,
        loss=float(loss),
        accuracy=(tp + tn) / total,
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        flags=flags,
    )


def f1_consistency(rows: Sequence[Tuple[float, float, float]] = REFERENCE_RUNS) -> float:
    """Largest gap between a reported F1 and the F1 recomputed from its precision and recall"""
    if not rows:
        return 0.0
    return max(abs(f1_score(p, r) - reported) for p, r, reported in rows)


def metrics_report(metrics: Metrics, plan: SplitPlan, config_hash: str = None, extra: Dict = None) -> Dict:
    report = {
        'seed': plan.seed,
        'split_sizes': {'train': plan.sizes[0], 'val': plan.sizes[1], 'test': plan.sizes[2]},
    }
    report.update(metrics.to_dict())
    if extra:
        report.update(extra)
    if config_hash:
        report['config_hash'] = config_hash
    return report


def format_summary(report: Dict) -> str:
    """Human-readable metrics summary with the confusion matrix"""
    c = report['confusion']
    lines = [
        "Failure prediction - test metrics",
        "=" * 40,
        f"Split (train/val/test): {report['split_sizes']['train']}/"
        f"{report['split_sizes']['val']}/{report['split_sizes']['test']} (seed {report['seed']})",
        f"Loss:      {report['loss']:.4f}",
        f"Accuracy:  {report['accuracy']:.2%}",
        f"Precision: {report['precision']:.2%}",
        f"Recall:    {report['recall']:.2%}",
        f"F1 score:  {report['f1']:.2%}",
        "",
        "Confusion matrix (rows: actual, columns: predicted)",
        "              pred 0   pred 1",
        f"  actual 0  {c['tn']:>7}  {c['fp']:>7}",
        f"  actual 1  {c['fn']:>7}  {c['tp']:>7}",
    ]
    if report.get('flags'):
        lines.append("")
        lines.append("Flags: " + ', '.join(report['flags']))
    return '\n'.join(lines) + '\n'
