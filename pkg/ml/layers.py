"""
Network layers over channels-last batches (n, height, width, channels).

Every layer caches what its backward pass needs during forward; backward
takes the upstream gradient, fills `grads` for the layer's parameters and
returns the gradient with respect to the layer input.
"""

from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def he_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = 'layer'

    def __init__(self):
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}

    def output_shape(self, input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        return input_shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def switches(self) -> Optional[np.ndarray]:
        """Discrete routing decided by the last forward pass (None for smooth layers)"""
        return None

    def config(self) -> Dict:
        return {'type': self.kind}


class Conv2D(Layer):
    """Valid (unpadded) convolution with stride 1, computed as im2col + matmul"""
    kind = 'conv'

    def __init__(self, in_channels: int, filters: int, kernel_size: int = 3, rng: np.random.Generator = None):
        super().__init__()
        self.in_channels = in_channels
        self.filters = filters
        self.kernel_size = kernel_size
        fan_in = in_channels * kernel_size * kernel_size
        shape = (filters, in_channels, kernel_size, kernel_size)
        self.params['weight'] = he_uniform(rng, shape, fan_in) if rng is not None else np.zeros(shape)
        self.params['bias'] = np.zeros(filters)
        self._cache = None

    def output_shape(self, input_shape):
        h, w, c = input_shape
        if c != self.in_channels:
            raise ValueError(f"conv expects {self.in_channels} channels, got {c}")
        k = self.kernel_size
        if h < k or w < k:
            raise ValueError(f"conv kernel {k} does not fit a {h}x{w} input")
        return h - k + 1, w - k + 1, self.filters

    def forward(self, x):
        n, h, w, c = x.shape
        k = self.kernel_size
        oh, ow = h - k + 1, w - k + 1
        # (n, oh, ow, c, k, k) view, flattened to columns ordered like the weights
        windows = sliding_window_view(x, (k, k), axis=(1, 2))
        cols = windows.reshape(n * oh * ow, c * k * k)
        weight = self.params['weight'].reshape(self.filters, -1)
        out = cols @ weight.T + self.params['bias']
        self._cache = (x.shape, cols)
        return out.reshape(n, oh, ow, self.filters)

    def backward(self, dout):
        (n, h, w, c), cols = self._cache
        k = self.kernel_size
        oh, ow = h - k + 1, w - k + 1
        dout2 = dout.reshape(n * oh * ow, self.filters)
        weight = self.params['weight'].reshape(self.filters, -1)

        self.grads['weight'] = (dout2.T @ cols).reshape(self.params['weight'].shape)
        self.grads['bias'] = dout2.sum(axis=0)

        dcols = (dout2 @ weight).reshape(n, oh, ow, c, k, k)
        dx = np.zeros((n, h, w, c))
        for i in range(k):
            for j in range(k):
                dx[:, i:i + oh, j:j + ow, :] += dcols[:, :, :, :, i, j]
        return dx

    def config(self):
        return {'type': self.kind, 'filters': self.filters, 'kernel_size': self.kernel_size}


class ReLU(Layer):
    kind = 'relu'

    def __init__(self):
        super().__init__()
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)

    def switches(self):
        return self._mask


class MaxPool2D(Layer):
    """Non-overlapping max pooling; odd trailing rows/columns are dropped"""
    kind = 'maxpool'

    def __init__(self, size: int = 2):
        super().__init__()
        self.size = size
        self._cache = None

    def output_shape(self, input_shape):
        h, w, c = input_shape
        if h < self.size or w < self.size:
            raise ValueError(f"pool size {self.size} does not fit a {h}x{w} input")
        return h // self.size, w // self.size, c

    def forward(self, x):
        n, h, w, c = x.shape
        s = self.size
        ph, pw = h // s, w // s
        blocks = x[:, :ph * s, :pw * s, :].reshape(n, ph, s, pw, s, c)
        blocks = blocks.transpose(0, 1, 3, 5, 2, 4).reshape(n, ph, pw, c, s * s)
        argmax = blocks.argmax(axis=-1)
        self._cache = (x.shape, argmax)
        return np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        (n, h, w, c), argmax = self._cache
        s = self.size
        ph, pw = h // s, w // s
        routed = np.zeros((n, ph, pw, c, s * s))
        np.put_along_axis(routed, argmax[..., None], dout[..., None], axis=-1)
        routed = routed.reshape(n, ph, pw, c, s, s).transpose(0, 1, 4, 2, 5, 3).reshape(n, ph * s, pw * s, c)
        dx = np.zeros((n, h, w, c))
        dx[:, :ph * s, :pw * s, :] = routed
        return dx

    def switches(self):
        return None if self._cache is None else self._cache[1]

    def config(self):
        return {'type': self.kind, 'size': self.size}


class Flatten(Layer):
    kind = 'flatten'

    def __init__(self):
        super().__init__()
        self._shape = None

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Dense(Layer):
    kind = 'dense'

    def __init__(self, in_features: int, units: int, rng: np.random.Generator = None):
        super().__init__()
        self.in_features = in_features
        self.units = units
        shape = (in_features, units)
        self.params['weight'] = he_uniform(rng, shape, in_features) if rng is not None else np.zeros(shape)
        self.params['bias'] = np.zeros(units)
        self._x = None

    def output_shape(self, input_shape):
        if len(input_shape) != 1 or input_shape[0] != self.in_features:
            raise ValueError(f"dense expects {self.in_features} features, got shape {input_shape}")
        return (self.units,)

    def forward(self, x):
        self._x = x
        return x @ self.params['weight'] + self.params['bias']

    def backward(self, dout):
        self.grads['weight'] = self._x.T @ dout
        self.grads['bias'] = dout.sum(axis=0)
        return dout @ self.params['weight'].T

    def config(self):
        return {'type': self.kind, 'units': self.units}


def build_layers(architecture: List[Dict], input_shape: Tuple[int, int, int],
                 rng: np.random.Generator = None) -> Tuple[List[Layer], Tuple[int, ...]]:
    """Instantiate layer specs ({'type': 'conv', 'filters': 16, ...}) and check the shapes chain"""
    layers: List[Layer] = []
    shape: Tuple[int, ...] = tuple(input_shape)
    for spec in architecture:
        kind = spec['type']
        if kind == 'conv':
            if len(shape) != 3:
                raise ValueError("conv layers must come before flatten")
            layer = Conv2D(shape[2], int(spec['filters']), int(spec.get('kernel_size', 3)), rng)
        elif kind == 'relu':
            layer = ReLU()
        elif kind == 'maxpool':
            layer = MaxPool2D(int(spec.get('size', 2)))
        elif kind == 'flatten':
            layer = Flatten()
        elif kind == 'dense':
            if len(shape) != 1:
                raise ValueError("dense layers need a flattened input")
            layer = Dense(shape[0], int(spec['units']), rng)
        else:
            raise ValueError(f"Unknown layer type '{kind}'")
        shape = layer.output_shape(shape)
        layers.append(layer)
    return layers, shape
