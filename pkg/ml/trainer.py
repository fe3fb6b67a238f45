"""
Mini-batch training with Adam and early stopping on validation loss
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from backend.utils.errors import ContractError
from ml.cnn_model import CnnModel, bce_loss, normalize_images

logger = logging.getLogger(__name__)


class Adam:
    def __init__(self, learning_rate: float = 1e-3, betas: Tuple[float, float] = Config.ADAM_BETAS,
                 epsilon: float = Config.ADAM_EPSILON):
        self.learning_rate = learning_rate
        self.beta1, self.beta2 = betas
        self.epsilon = epsilon
        self.step_count = 0
        self._m: Dict[str, np.ndarray] = {}
        self._v: Dict[str, np.ndarray] = {}

    def step(self, parameters: Sequence[Tuple[str, np.ndarray]], gradients: Sequence[Tuple[str, np.ndarray]]):
        self.step_count += 1
        t = self.step_count
        for (name, param), (_, grad) in zip(parameters, gradients):
            m = self._m.setdefault(name, np.zeros_like(param))
            v = self._v.setdefault(name, np.zeros_like(param))
            m *= self.beta1
            m += (1 - self.beta1) * grad
            v *= self.beta2
            v += (1 - self.beta2) * grad * grad
            m_hat = m / (1 - self.beta1 ** t)
            v_hat = v / (1 - self.beta2 ** t)
            param -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainReport:
    epochs: List[EpochRecord] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    early_stopped: bool = False

    def to_dict(self) -> Dict:
        return {
            'epochs': [asdict(record) for record in self.epochs],
            'stopped_epoch': self.stopped_epoch,
            'best_epoch': self.best_epoch,
            'early_stopped': self.early_stopped,
        }


def evaluate(model: CnnModel, images: np.ndarray, labels: np.ndarray, batch_size: int = 256) -> Tuple[float, float]:
    """(mean BCE loss, accuracy) over a full set, batched in a fixed order"""
    probabilities = np.concatenate([
        model.forward(normalize_images(images[start:start + batch_size]))
        for start in range(0, len(images), batch_size)
    ])
    predictions = (probabilities >= Config.PREDICTION_THRESHOLD).astype(np.int64)
    return bce_loss(probabilities, labels), float(np.mean(predictions == labels))


def fit(model: CnnModel, images: np.ndarray, labels: np.ndarray,
        split: Tuple[Sequence[int], Sequence[int]], hyperparameters: Optional[Dict] = None) -> Tuple[CnnModel, TrainReport]:
    """
    Train on split[0], early-stop on split[1]; returns the model holding the
    parameters of its best validation epoch.

    Training stops once validation loss has failed to improve for
    `patience` consecutive epochs (at least one).
    """
    params = dict(model.hyperparameters, **(hyperparameters or {}))
    train_idx = np.asarray(split[0], dtype=np.int64)
    val_idx = np.asarray(split[1], dtype=np.int64)
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ContractError("Training and validation splits must both be non-empty")
    if np.intersect1d(train_idx, val_idx).size:
        raise ContractError("Training and validation splits overlap")

    images = np.asarray(images)
    labels = np.asarray(labels, dtype=np.float64)
    batch_size = int(params['batch_size'])
    patience = int(params['patience'])
    optimizer = Adam(float(params['learning_rate']))
    rng = np.random.default_rng(int(params['seed']))

    train_images, train_labels = images[train_idx], labels[train_idx]
    val_images, val_labels = images[val_idx], labels[val_idx]

    report = TrainReport()
    best_loss = np.inf
    best_weights = model.get_weights()
    waited = 0

    for epoch in range(1, int(params['epochs']) + 1):
        order = rng.permutation(len(train_idx))
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            _, gradients = model.backward(normalize_images(train_images[batch]), train_labels[batch])
            optimizer.step(model.parameters(), gradients)

        train_loss, train_accuracy = evaluate(model, train_images, train_labels)
        val_loss, val_accuracy = evaluate(model, val_images, val_labels)
        report.epochs.append(EpochRecord(epoch, train_loss, train_accuracy, val_loss, val_accuracy))
        report.stopped_epoch = epoch
        logger.info(f"Epoch {epoch}: loss {train_loss:.4f} acc {train_accuracy:.3f} | "
                    f"val loss {val_loss:.4f} val acc {val_accuracy:.3f}")

        if val_loss < best_loss:
            best_loss = val_loss
            best_weights = model.get_weights()
            report.best_epoch = epoch
            waited = 0
        else:
            waited += 1
            if waited >= patience:
                report.early_stopped = True
                logger.info(f"Early stop after epoch {epoch}; best epoch {report.best_epoch}")
                break

    model.set_weights(best_weights)
    return model, report
