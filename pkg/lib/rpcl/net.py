"""
Minimal fully-connected ReLU networks with analytic backpropagation.

Parameters live in a single flat float64 vector; layer ``l`` occupies ``W_l`` (shape ``(out, in)``, row-major)
followed by ``b_l`` (shape ``(out,)``).

:author: Doug Skrypa
"""

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Union, Optional, Sequence, Callable, Protocol, Any

import numpy as np

from .constants import CHECKPOINT_VERSION
from .exceptions import DimensionMismatch, NonFiniteGradientError, RpclException
from .utils import atomic_write

__all__ = [
    'OutputActivation',
    'Direction',
    'Network',
    'Gradient',
    'forward',
    'backward',
    'apply_gradient',
    'finite_diff_check',
    'central_differences',
    'max_relative_error',
    'ScalarLoss',
    'QuadraticLoss',
    'Optimizer',
    'GradientStep',
    'Adam',
    'make_optimizer',
]
log = logging.getLogger(__name__)

Gradient = np.ndarray


class OutputActivation(Enum):
    IDENTITY = 'identity'
    SOFTMAX = 'softmax'


class Direction(Enum):
    DESCENT = -1
    ASCENT = 1


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class Network:
    __slots__ = ('layer_dims', 'params', 'output_activation')

    def __init__(
        self,
        layer_dims: Sequence[int],
        params: Optional[np.ndarray] = None,
        output_activation: OutputActivation = OutputActivation.IDENTITY,
    ):
        layer_dims = tuple(int(d) for d in layer_dims)
        if len(layer_dims) < 2 or any(d < 1 for d in layer_dims):
            raise ValueError(f'Invalid {layer_dims=} - expected at least 2 positive dimensions')
        self.layer_dims = layer_dims
        self.output_activation = OutputActivation(output_activation)
        n_params = self.param_count(layer_dims)
        if params is None:
            self.params = np.zeros(n_params)
        else:
            self.params = np.array(params, dtype=np.float64).reshape(-1)
            if self.params.size != n_params:
                raise DimensionMismatch(f'parameters for {layer_dims}', n_params, self.params.size)

    @classmethod
    def create(
        cls,
        layer_dims: Sequence[int],
        rng: np.random.Generator,
        output_activation: OutputActivation = OutputActivation.IDENTITY,
    ) -> 'Network':
        """Weights ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)], biases 0"""
        self = cls(layer_dims, output_activation=output_activation)
        for weights, _ in self.layers():
            bound = 1 / np.sqrt(weights.shape[1])
            weights[...] = rng.uniform(-bound, bound, size=weights.shape)
        return self

    @staticmethod
    def param_count(layer_dims: Sequence[int]) -> int:
        return sum(n_in * n_out + n_out for n_in, n_out in zip(layer_dims, layer_dims[1:]))

    def __repr__(self) -> str:
        dims = '-'.join(map(str, self.layer_dims))
        return f'<{self.__class__.__name__}[{dims}, {self.output_activation.value}]>'

    def __eq__(self, other) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.layer_dims == other.layer_dims
            and self.output_activation == other.output_activation
            and np.array_equal(self.params, other.params)
        )

    __hash__ = None

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def copy(self, params: Optional[np.ndarray] = None) -> 'Network':
        return Network(self.layer_dims, self.params.copy() if params is None else params, self.output_activation)

    def layers(self, params: Optional[np.ndarray] = None) -> list[tuple[np.ndarray, np.ndarray]]:
        """(weights, bias) views into the flat parameter vector (or into an aligned gradient)"""
        flat = self.params if params is None else params
        views, offset = [], 0
        for n_in, n_out in zip(self.layer_dims, self.layer_dims[1:]):
            weights = flat[offset:offset + n_in * n_out].reshape(n_out, n_in)
            offset += n_in * n_out
            views.append((weights, flat[offset:offset + n_out]))
            offset += n_out
        return views

    # region Evaluation

    def _as_batch(self, inputs) -> tuple[np.ndarray, bool]:
        inputs = np.asarray(inputs, dtype=np.float64)
        single = inputs.ndim == 1
        batch = inputs.reshape(1, -1) if single else inputs
        if batch.ndim != 2 or batch.shape[1] != self.input_dim:
            raise DimensionMismatch('network input', self.input_dim, batch.shape[-1] if batch.ndim else 0)
        return batch, single

    def _propagate(self, batch: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        activations, pre_activations = [batch], []
        layers = self.layers()
        for i, (weights, bias) in enumerate(layers):
            z = activations[-1] @ weights.T + bias
            pre_activations.append(z)
            if i < len(layers) - 1:
                activations.append(np.maximum(z, 0.0))
        return activations, pre_activations

    def logits(self, inputs) -> np.ndarray:
        """Output-layer pre-activations (identical to :meth:`forward` for an Identity head)"""
        batch, single = self._as_batch(inputs)
        out = self._propagate(batch)[1][-1]
        return out[0] if single else out

    def forward(self, inputs) -> np.ndarray:
        batch, single = self._as_batch(inputs)
        out = self._propagate(batch)[1][-1]
        if self.output_activation is OutputActivation.SOFTMAX:
            out = softmax(out)
        return out[0] if single else out

    def kink_distance(self, inputs) -> float:
        """Smallest |pre-activation| over all hidden ReLU units for the given input(s)"""
        batch, _ = self._as_batch(inputs)
        hidden = self._propagate(batch)[1][:-1]
        return min((float(np.abs(z).min()) for z in hidden), default=float('inf'))

    def backward(self, inputs, upstream, wrt_logits: bool = False) -> Gradient:
        """
        :param inputs: One input vector, or a batch of shape (B, input_dim)
        :param upstream: dL/d(output) with the same leading shape as the output (summed over the batch)
        :param wrt_logits: Treat ``upstream`` as dL/d(logits), skipping the output activation's Jacobian
        :return: Jacobian^T . upstream, aligned with :attr:`params`
        """
        batch, single = self._as_batch(inputs)
        upstream = np.asarray(upstream, dtype=np.float64)
        upstream = upstream.reshape(1, -1) if single and upstream.ndim == 1 else upstream
        if upstream.shape != (batch.shape[0], self.output_dim):
            raise DimensionMismatch('upstream gradient', self.output_dim, upstream.shape[-1] if upstream.ndim else 0)

        activations, pre_activations = self._propagate(batch)
        if self.output_activation is OutputActivation.SOFTMAX and not wrt_logits:
            probs = softmax(pre_activations[-1])
            delta = probs * (upstream - (probs * upstream).sum(axis=1, keepdims=True))
        else:
            delta = upstream

        grad = np.zeros_like(self.params)
        grad_layers = self.layers(grad)
        layers = self.layers()
        for i in range(len(layers) - 1, -1, -1):
            grad_w, grad_b = grad_layers[i]
            grad_w[...] = delta.T @ activations[i]
            grad_b[...] = delta.sum(axis=0)
            if i:
                delta = (delta @ layers[i][0]) * (pre_activations[i - 1] > 0)
        return grad

    # endregion

    # region Serialization

    def to_dict(self, **extra) -> dict[str, Any]:
        return {
            'version': CHECKPOINT_VERSION,
            'layer_dims': list(self.layer_dims),
            'output_activation': self.output_activation.value,
            **extra,
            'params': self.params.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> 'Network':
        if (version := data.get('version')) != CHECKPOINT_VERSION:
            raise RpclException(f'Unsupported checkpoint {version=}')
        return cls(data['layer_dims'], np.array(data['params'], dtype=np.float64), data['output_activation'])

    def save(self, path: Union[str, Path], **extra):
        with atomic_write(path) as f:
            json.dump(self.to_dict(**extra), f)

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'Network':
        return cls.from_dict(json.loads(Path(path).read_text('utf-8')))

    # endregion


def forward(net: Network, inputs) -> np.ndarray:
    return net.forward(inputs)


def backward(net: Network, inputs, upstream) -> Gradient:
    return net.backward(inputs, upstream)


def check_finite(grad: Gradient, what: str = 'gradient'):
    if not (finite := np.isfinite(grad)).all():
        raise NonFiniteGradientError(what, int(grad.size - finite.sum()), grad.size)


def apply_gradient(net: Network, grad: Gradient, lr: float, direction: Direction = Direction.DESCENT) -> Network:
    """:return: A new network with params ``params +/- lr * grad``"""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != net.params.shape:
        raise DimensionMismatch(f'gradient for {net}', net.params.size, grad.size)
    check_finite(grad)
    return net.copy(net.params + Direction(direction).value * lr * grad)


# region Optimizers


class Optimizer:
    def __init__(self, lr: float):
        self.lr = lr

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__}[lr={self.lr}]>'

    def step(self, net: Network, grad: Gradient, direction: Direction = Direction.DESCENT) -> Network:
        raise NotImplementedError


class GradientStep(Optimizer):
    """Plain gradient descent/ascent"""

    def step(self, net: Network, grad: Gradient, direction: Direction = Direction.DESCENT) -> Network:
        return apply_gradient(net, grad, self.lr, direction)


class Adam(Optimizer):
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = self._v = None
        self._t = 0

    def step(self, net: Network, grad: Gradient, direction: Direction = Direction.DESCENT) -> Network:
        grad = np.asarray(grad, dtype=np.float64)
        check_finite(grad)
        if self._m is None or self._m.shape != grad.shape:
            self._m, self._v, self._t = np.zeros_like(grad), np.zeros_like(grad), 0
        self._t += 1
        self._m = self.beta1 * self._m + (1 - self.beta1) * grad
        self._v = self.beta2 * self._v + (1 - self.beta2) * grad ** 2
        m_hat = self._m / (1 - self.beta1 ** self._t)
        v_hat = self._v / (1 - self.beta2 ** self._t)
        return apply_gradient(net, m_hat / (np.sqrt(v_hat) + self.eps), self.lr, direction)


def make_optimizer(name: str, lr: float) -> Optimizer:
    if name == 'sgd':
        return GradientStep(lr)
    elif name == 'adam':
        return Adam(lr)
    raise ValueError(f'Unexpected optimizer {name=} - expected sgd or adam')


# endregion


# region Finite Differences


class ScalarLoss(Protocol):
    def value(self, output: np.ndarray) -> float:
        ...

    def grad(self, output: np.ndarray) -> np.ndarray:
        ...


class QuadraticLoss:
    """0.5 * ||output - target||^2, summed over a batch"""

    def __init__(self, target):
        self.target = np.asarray(target, dtype=np.float64)

    def value(self, output: np.ndarray) -> float:
        return 0.5 * float(((output - self.target) ** 2).sum())

    def grad(self, output: np.ndarray) -> np.ndarray:
        return output - self.target


def central_differences(func: Callable[[np.ndarray], float], params: np.ndarray, eps: float) -> np.ndarray:
    """Central-difference estimate of d func / d params; ``func`` must not keep a reference to its argument"""
    params = np.array(params, dtype=np.float64)
    numeric = np.empty_like(params)
    for i in range(params.size):
        orig = params[i]
        params[i] = orig + eps
        plus = func(params)
        params[i] = orig - eps
        minus = func(params)
        params[i] = orig
        numeric[i] = (plus - minus) / (2 * eps)
    return numeric


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |analytic - numeric| / max(1e-12, |numeric|)"""
    return float((np.abs(analytic - numeric) / np.maximum(1e-12, np.abs(numeric))).max(initial=0.0))


def _validate_eps(eps: float):
    if not 0 < eps <= 1e-2:
        raise ValueError(f'Invalid {eps=} - must be in (0, 1e-2]')


def finite_diff_check(net: Network, inputs, loss: ScalarLoss, eps: float = 1e-5) -> float:
    """
    Compare :meth:`Network.backward` against central differences of ``loss(net.forward(inputs))``.

    :return: The maximum relative error over all parameters
    """
    _validate_eps(eps)
    analytic = net.backward(inputs, loss.grad(net.forward(inputs)))
    perturbed = net.copy()

    def loss_at(params: np.ndarray) -> float:
        perturbed.params[...] = params
        return loss.value(perturbed.forward(inputs))

    return max_relative_error(analytic, central_differences(loss_at, net.params, eps))


# endregion
