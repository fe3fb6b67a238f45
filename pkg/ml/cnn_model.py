"""
Convolutional failure classifier

Default stack: conv 3x3x16 + ReLU, maxpool 2x2, conv 3x3x32 + ReLU,
maxpool 2x2, flatten, dense 64 + ReLU, dense 1 + sigmoid. Inputs are
(n, 24, 24, 3) images scaled to [0, 1]; outputs are probabilities of the
failure class. Everything runs in float64.
"""

import json
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from config import Config
from backend.utils.errors import ContractError, DataValidationError
from ml.layers import build_layers

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
INPUT_SHAPE = (Config.IMAGE_SIZE, Config.IMAGE_SIZE, 3)

DEFAULT_ARCHITECTURE = [
    {'type': 'conv', 'filters': 16, 'kernel_size': 3},
    {'type': 'relu'},
    {'type': 'maxpool', 'size': 2},
    {'type': 'conv', 'filters': 32, 'kernel_size': 3},
    {'type': 'relu'},
    {'type': 'maxpool', 'size': 2},
    {'type': 'flatten'},
    {'type': 'dense', 'units': 64},
    {'type': 'relu'},
    {'type': 'dense', 'units': 1},
]

# conv 3x3x2 -> pool -> dense 4 -> dense 1, for gradient checks and quick tests
TINY_ARCHITECTURE = [
    {'type': 'conv', 'filters': 2, 'kernel_size': 3},
    {'type': 'relu'},
    {'type': 'maxpool', 'size': 2},
    {'type': 'flatten'},
    {'type': 'dense', 'units': 4},
    {'type': 'relu'},
    {'type': 'dense', 'units': 1},
]


_SMALLEST_PROBABILITY = np.nextafter(0.0, 1.0)
_LARGEST_PROBABILITY = np.nextafter(1.0, 0.0)


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z, dtype=np.float64)
    positive = z >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-z[positive]))
    exp_z = np.exp(z[~positive])
    out[~positive] = exp_z / (1.0 + exp_z)
    # saturated logits stay strictly inside (0, 1)
    return np.clip(out, _SMALLEST_PROBABILITY, _LARGEST_PROBABILITY)


def normalize_images(images: np.ndarray) -> np.ndarray:
    """uint8 pixels -> float64 in [0, 1]"""
    return np.asarray(images, dtype=np.float64) / 255.0


class CnnModel:
    def __init__(self, architecture: Optional[List[Dict]] = None, hyperparameters: Optional[Dict] = None,
                 rng_seed: Optional[int] = None, zero_init: bool = False):
        self.architecture = [dict(spec) for spec in (architecture or DEFAULT_ARCHITECTURE)]
        self.hyperparameters = dict(Config.TRAINING, **(hyperparameters or {}))
        self.rng_seed = int(self.hyperparameters['seed'] if rng_seed is None else rng_seed)
        rng = None if zero_init else np.random.default_rng(self.rng_seed)
        try:
            self.layers, output_shape = build_layers(self.architecture, INPUT_SHAPE, rng)
        except ValueError as e:
            raise ContractError(f"Invalid architecture: {e}")
        if output_shape != (1,):
            raise ContractError(f"Architecture must end in a single output, got shape {output_shape}")

    def parameters(self) -> List[Tuple[str, np.ndarray]]:
        """(name, array) pairs in layer order; arrays are live references"""
        return [(f"{i}.{name}", layer.params[name])
                for i, layer in enumerate(self.layers) for name in sorted(layer.params)]

    def gradients(self) -> List[Tuple[str, np.ndarray]]:
        return [(f"{i}.{name}", layer.grads[name])
                for i, layer in enumerate(self.layers) for name in sorted(layer.params)]

    def get_weights(self) -> Dict[str, np.ndarray]:
        return {name: array.copy() for name, array in self.parameters()}

    def set_weights(self, weights: Dict[str, np.ndarray]) -> None:
        for name, array in self.parameters():
            if weights[name].shape != array.shape:
                raise ContractError(f"Parameter {name} has shape {array.shape}, got {weights[name].shape}")
            array[...] = weights[name]

    def parameter_count(self) -> int:
        return sum(array.size for _, array in self.parameters())

    def _check_batch(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 4 or batch.shape[1:] != INPUT_SHAPE:
            raise ContractError(f"Batch must have shape (n, 24, 24, 3), got {batch.shape}")
        return batch

    def logits(self, batch: np.ndarray) -> np.ndarray:
        out = self._check_batch(batch)
        for layer in self.layers:
            out = layer.forward(out)
        return out[:, 0]

    def forward(self, batch: np.ndarray) -> np.ndarray:
        return sigmoid(self.logits(batch))

    def backward(self, batch: np.ndarray, labels: np.ndarray) -> Tuple[float, List[Tuple[str, np.ndarray]]]:
        """Mean BCE loss over the batch and its gradient for every parameter"""
        labels = np.asarray(labels, dtype=np.float64)
        probabilities = self.forward(batch)
        if labels.shape != probabilities.shape:
            raise ContractError(f"{len(labels)} labels for a batch of {len(probabilities)}")
        loss = bce_loss(probabilities, labels)
        eps = Config.BCE_EPSILON
        inside = (probabilities > eps) & (probabilities < 1 - eps)
        dlogits = np.where(inside, probabilities - labels, 0.0) / len(labels)
        grad = dlogits[:, None]
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return loss, self.gradients()

    def predict(self, images: np.ndarray, threshold: float = Config.PREDICTION_THRESHOLD) -> np.ndarray:
        return (self.forward(images) >= threshold).astype(np.int64)

    def switches(self) -> List[np.ndarray]:
        return [s.copy() for s in (layer.switches() for layer in self.layers) if s is not None]

    def to_dict(self) -> Dict:
        return {
            'format_version': MODEL_FORMAT_VERSION,
            'architecture': self.architecture,
            'hyperparameters': self.hyperparameters,
            'rng_seed': self.rng_seed,
            'parameters': {
                name: {'shape': list(array.shape), 'data': [float(v) for v in array.ravel()]}
                for name, array in self.parameters()
            },
        }

    @classmethod
    def from_dict(cls, payload: Dict) -> 'CnnModel':
        version = payload.get('format_version')
        if version != MODEL_FORMAT_VERSION:
            raise DataValidationError(f"Unsupported model format version {version}")
        model = cls(payload['architecture'], payload['hyperparameters'], payload['rng_seed'], zero_init=True)
        weights = {
            name: np.asarray(entry['data'], dtype=np.float64).reshape(entry['shape'])
            for name, entry in payload['parameters'].items()
        }
        missing = {name for name, _ in model.parameters()} - set(weights)
        if missing:
            raise DataValidationError(f"Model file lacks parameters: {', '.join(sorted(missing))}")
        model.set_weights(weights)
        return model

    def save(self, path: str, config_hash: Optional[str] = None) -> None:
        payload = self.to_dict()
        if config_hash:
            payload['config_hash'] = config_hash
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> 'CnnModel':
        with open(path, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


def bce_loss(probabilities: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy with probabilities clipped to [eps, 1 - eps]"""
    eps = Config.BCE_EPSILON
    p = np.clip(np.asarray(probabilities, dtype=np.float64), eps, 1 - eps)
    y = np.asarray(labels, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p))))


def forward(model: CnnModel, batch: np.ndarray) -> np.ndarray:
    return model.forward(batch)


def backward(model: CnnModel, batch: np.ndarray, labels: np.ndarray) -> List[Tuple[str, np.ndarray]]:
    return model.backward(batch, labels)[1]


def predict(model: CnnModel, images: np.ndarray, threshold: float = Config.PREDICTION_THRESHOLD) -> np.ndarray:
    return model.predict(images, threshold)
