"""
Central finite-difference check of the analytic gradients.

A perturbation that flips a ReLU or moves a max-pool winner measures a different
linear piece than the analytic gradient; such parameters are skipped and
counted.
"""

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from ml.cnn_model import CnnModel, bce_loss

RELATIVE_ERROR_FLOOR = 1e-6


@dataclass
class GradientCheckResult:
    max_relative_error: float
    checked: int
    skipped: int
    worst_parameter: Optional[str] = None

    def to_dict(self) -> Dict:
        return {
            'max_relative_error': self.max_relative_error,
            'checked': self.checked,
            'skipped': self.skipped,
            'worst_parameter': self.worst_parameter,
        }


def _same_switches(a, b) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), RELATIVE_ERROR_FLOOR)


def check_gradients(model: CnnModel, batch: np.ndarray, labels: np.ndarray, h: float = 1e-4) -> GradientCheckResult:
    batch = np.asarray(batch, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    _, analytic = model.backward(batch, labels)
    analytic = {name: grad.copy() for name, grad in analytic}
    baseline = model.switches()

    worst, worst_name = 0.0, None
    checked = skipped = 0
    for name, param in model.parameters():
        flat = param.reshape(-1)
        grad = analytic[name].reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            loss_plus = bce_loss(model.forward(batch), labels)
            switches_plus = model.switches()
            flat[i] = original - h
            loss_minus = bce_loss(model.forward(batch), labels)
            switches_minus = model.switches()
            flat[i] = original
            if not (_same_switches(baseline, switches_plus) and _same_switches(baseline, switches_minus)):
                skipped += 1
                continue
            numeric = (loss_plus - loss_minus) / (2 * h)
            error = relative_error(grad[i], numeric)
            checked += 1
            if error > worst:
                worst, worst_name = error, f"{name}[{i}]"
    model.forward(batch)
    return GradientCheckResult(max_relative_error=worst, checked=checked, skipped=skipped,
                               worst_parameter=worst_name)
