"""
Goal-conditioned motion predictors: a fully connected network with hand-written
backpropagation, mini-batch training, a finite-difference gradient check and a
plain-text weights format.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np

from .errors import ShapeMismatchError, TrainingDivergedError
from .models import HISTORY_LENGTH

logger = logging.getLogger(__name__)

VARIANTS = ('pose-lidar', 'delta-pose-lidar', 'delta-general-pose-lidar')
DEFAULT_VARIANT = 'delta-pose-lidar'
HIDDEN_WIDTHS = (64, 128, 128, 64)
POSE_DIM = 3
GOAL_DIM = 2
WEIGHTS_FORMAT = 'rendezvous-predictor'
WEIGHTS_VERSION = 1

ACTIVATIONS = {
    # name -> (activation, derivative expressed through the activation output)
    'tanh': (np.tanh, lambda a: 1.0 - a * a),
}


def input_width(history: int, n_rays: int) -> int:
    return history * (POSE_DIM + n_rays) + GOAL_DIM


def output_width(n_rays: int) -> int:
    return POSE_DIM + n_rays


def check_role(role: str) -> str:
    if role != 'self' and not (role.startswith('other:') and len(role) > len('other:')):
        raise ValueError(f"role must be 'self' or 'other:<policy>', got {role!r}")
    return role


@dataclass(frozen=True)
class HistoryWindow:
    """
    h pose frames, h scans and a polar goal, all in the predicting agent's current frame.
    """
    poses: np.ndarray
    scans: np.ndarray
    goal: np.ndarray

    def __post_init__(self):
        if self.poses.ndim != 2 or self.poses.shape[1] != POSE_DIM:
            raise ShapeMismatchError(f'poses must have shape (h, 3), got {self.poses.shape}')
        if self.scans.ndim != 2 or self.scans.shape[0] != self.poses.shape[0]:
            raise ShapeMismatchError('scans and poses must hold the same number of frames')
        if self.goal.shape != (GOAL_DIM,):
            raise ShapeMismatchError('goal must be a (range, bearing) pair')

    @property
    def length(self) -> int:
        return self.poses.shape[0]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.poses.ravel(), self.scans.ravel(), self.goal])


@dataclass(frozen=True)
class TrainingExample:
    input: HistoryWindow
    target_pose_delta: np.ndarray
    target_scan_delta: np.ndarray


@dataclass
class PredictorNet:
    weights: list
    biases: list
    variant: str = DEFAULT_VARIANT
    role: str = 'self'
    activation: str = 'tanh'
    history: int = HISTORY_LENGTH
    n_rays: int = 222
    input_mean: Optional[np.ndarray] = None
    input_std: Optional[np.ndarray] = None
    target_mean: Optional[np.ndarray] = None
    target_std: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f'unknown predictor variant: {self.variant}')
        if self.activation not in ACTIVATIONS:
            raise ValueError(f'unknown activation: {self.activation}')
        check_role(self.role)
        if self.weights[0].shape[0] != input_width(self.history, self.n_rays):
            raise ShapeMismatchError('first layer does not match the history window width')
        if self.weights[-1].shape[1] != output_width(self.n_rays):
            raise ShapeMismatchError('output head must have width 3 + n_rays')
        if self.input_mean is None:
            self.input_mean = np.zeros(self.input_width)
            self.input_std = np.ones(self.input_width)
        if self.target_mean is None:
            self.target_mean = np.zeros(self.output_width)
            self.target_std = np.ones(self.output_width)

    @classmethod
    def initialize(cls, variant: str = DEFAULT_VARIANT, role: str = 'self', rng_seed: int = 0,
                   hidden: tuple = HIDDEN_WIDTHS, history: int = HISTORY_LENGTH, n_rays: int = 222,
                   activation: str = 'tanh') -> 'PredictorNet':
        """
        Seeded uniform initialization scaled by fan-in; zero biases.
        """
        rng = np.random.default_rng(rng_seed)
        widths = [input_width(history, n_rays)] + list(hidden) + [output_width(n_rays)]
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            limit = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, variant, role, activation, history, n_rays)

    @classmethod
    def zeros(cls, variant: str = DEFAULT_VARIANT, role: str = 'self', hidden: tuple = HIDDEN_WIDTHS,
              history: int = HISTORY_LENGTH, n_rays: int = 222) -> 'PredictorNet':
        net = cls.initialize(variant, role, 0, hidden, history, n_rays)
        for array in net.parameters():
            array[...] = 0.0
        return net

    @property
    def input_width(self) -> int:
        return input_width(self.history, self.n_rays)

    @property
    def output_width(self) -> int:
        return output_width(self.n_rays)

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def parameters(self) -> list[np.ndarray]:
        """
        Every trainable array, interleaved as W0, b0, W1, b1, ...
        """
        params = []
        for w, b in zip(self.weights, self.biases):
            params += [w, b]
        return params

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def _propagate(self, x: np.ndarray) -> tuple[list, np.ndarray]:
        act = ACTIVATIONS[self.activation][0]
        activations = [(x - self.input_mean) / self.input_std]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            activations.append(act(activations[-1] @ w + b))
        return activations, activations[-1] @ self.weights[-1] + self.biases[-1]

    def forward_batch(self, x: np.ndarray) -> np.ndarray:
        """
        Predict (pose, scan) outputs for a batch of flattened windows.

        :param x: Array of shape (B, input_width)
        :return: Array of shape (B, 3 + n_rays) in target units
        :rtype: np.ndarray
        :raises ShapeMismatchError: If the input width does not match the net
        """
        if x.ndim != 2 or x.shape[1] != self.input_width:
            raise ShapeMismatchError(f'expected input width {self.input_width}, got {x.shape}')
        _, out = self._propagate(x)
        return out * self.target_std + self.target_mean

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        _, out = self._propagate(x)
        residual = out - (y - self.target_mean) / self.target_std
        return float(np.mean(residual * residual))

    def loss_and_gradients(self, x: np.ndarray, y: np.ndarray) -> tuple[float, list]:
        """
        Mean squared error in standardized target units and its gradient.

        :return: Loss and gradients aligned with parameters()
        :rtype: tuple[float, list]
        """
        derivative = ACTIVATIONS[self.activation][1]
        activations, out = self._propagate(x)
        residual = out - (y - self.target_mean) / self.target_std
        loss = float(np.mean(residual * residual))

        delta = 2.0 * residual / residual.size
        grads = []
        for layer in range(len(self.weights) - 1, -1, -1):
            a = activations[layer]
            grads.append((a.T @ delta, delta.sum(axis=0)))
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * derivative(a)
        flat = []
        for dw, db in reversed(grads):
            flat += [dw, db]
        return loss, flat

    def fit_normalization(self, x: np.ndarray, y: np.ndarray) -> None:
        """
        Per-feature standardization; near-constant features keep unit scale.
        """
        self.input_mean = x.mean(axis=0)
        std = x.std(axis=0)
        self.input_std = np.where(std > 1e-6, std, 1.0)
        self.target_mean = y.mean(axis=0)
        std = y.std(axis=0)
        self.target_std = np.where(std > 1e-6, std, 1.0)


def forward(net: PredictorNet, window: HistoryWindow) -> tuple[np.ndarray, np.ndarray]:
    """
    Apply a predictor to one history window.

    :return: The pose output (3,) and the scan output (n_rays,), read per the net's variant
    :rtype: tuple[np.ndarray, np.ndarray]
    :raises ShapeMismatchError: If the window does not match the net
    """
    if window.length != net.history or window.scans.shape[1] != net.n_rays:
        raise ShapeMismatchError(f'window of {window.length} x {window.scans.shape[1]} rays does not match '
                                 f'net expecting {net.history} x {net.n_rays}')
    out = net.forward_batch(window.to_vector()[None, :])[0]
    return out[:POSE_DIM], out[POSE_DIM:]


class Examples(Protocol):
    def __len__(self) -> int: ...

    def batch(self, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


class ArrayExamples:
    """
    In-memory examples as (inputs, targets) arrays.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray):
        if len(x) != len(y):
            raise ShapeMismatchError('inputs and targets must have the same length')
        self.x = x
        self.y = y

    def __len__(self) -> int:
        return len(self.x)

    def batch(self, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.x[indices], self.y[indices]


@dataclass
class TrainResult:
    net: PredictorNet
    losses: np.ndarray
    validation_initial: Optional[float] = None
    validation_final: Optional[float] = None
    settings: dict = field(default_factory=dict)


class _Adam:
    def __init__(self, params: list, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list, grads: list) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


class _Sgd:
    def __init__(self, params: list, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: list, grads: list) -> None:
        for p, g in zip(params, grads):
            p -= self.learning_rate * g


OPTIMIZERS = {'sgd': _Sgd, 'adam': _Adam}


def _sample(examples: Examples, limit: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    count = len(examples)
    indices = np.arange(count) if count <= limit else np.sort(rng.choice(count, size=limit, replace=False))
    return examples.batch(indices)


def train(net: PredictorNet, dataset: Examples, epochs: int = 2000, batch_size: int = 500,
          learning_rate: float = 1e-3, rng_seed: int = 0, optimizer: str = 'adam',
          validation: Optional[Examples] = None, fit_normalization: bool = True,
          log_every: int = 0) -> TrainResult:
    """
    Minimize the mean squared error of a predictor by mini-batch gradient descent.

    One epoch is one optimizer step on a seeded mini-batch; batches walk through
    seeded permutations of the dataset. With batch_size >= len(dataset) every
    epoch uses the whole dataset.

    :param net: Net to train in place
    :param dataset: Training examples
    :param epochs: Number of optimizer steps
    :param batch_size: Mini-batch size
    :param learning_rate: Step size
    :param rng_seed: Seed for shuffling and statistics sampling
    :param optimizer: 'adam' or 'sgd'
    :param validation: Optional held-out examples, scored before and after training
    :param fit_normalization: Fit feature standardization from the data first
    :param log_every: Log the loss every this many epochs (0 disables)
    :return: The trained net, per-epoch training loss and held-out scores
    :rtype: TrainResult
    :raises TrainingDivergedError: On a non-finite loss or weight
    """
    count = len(dataset)
    if count == 0:
        raise ValueError('cannot train on an empty dataset')
    if optimizer not in OPTIMIZERS:
        raise ValueError(f'unknown optimizer: {optimizer}')
    rng = np.random.default_rng(rng_seed)
    if fit_normalization:
        net.fit_normalization(*_sample(dataset, 20000, rng))

    held_out = _sample(validation, 5000, rng) if validation is not None and len(validation) else None
    validation_initial = net.loss(*held_out) if held_out is not None else None

    params = net.parameters()
    stepper = OPTIMIZERS[optimizer](params, learning_rate)
    full_batch = batch_size >= count
    order = np.arange(count) if full_batch else rng.permutation(count)
    cursor = 0
    losses = np.empty(epochs)
    for epoch in range(epochs):
        if full_batch:
            indices = order
        else:
            if cursor + batch_size > count:
                order = rng.permutation(count)
                cursor = 0
            indices = np.sort(order[cursor:cursor + batch_size])
            cursor += batch_size
        loss, grads = net.loss_and_gradients(*dataset.batch(indices))
        if not np.isfinite(loss):
            raise TrainingDivergedError(f'non-finite loss at epoch {epoch} for {net.role} {net.variant} net '
                                        f'(learning rate {learning_rate})')
        stepper.step(params, grads)
        if not net.is_finite():
            raise TrainingDivergedError(f'non-finite weights after epoch {epoch} for {net.role} {net.variant} net')
        losses[epoch] = loss
        if log_every and epoch % log_every == 0:
            logger.info('%s %s epoch %d mse %.6f', net.role, net.variant, epoch, loss)

    validation_final = net.loss(*held_out) if held_out is not None else None
    settings = {'epochs': epochs, 'batch_size': batch_size, 'learning_rate': learning_rate,
                'optimizer': optimizer, 'rng_seed': rng_seed}
    return TrainResult(net, losses, validation_initial, validation_final, settings)


def gradient_check(net: PredictorNet, x: np.ndarray, y: np.ndarray, n_coords: int = 200, step: float = 1e-5,
                   rng_seed: int = 0, gradient_fn: Optional[Callable] = None) -> float:
    """
    Compare analytic gradients with central finite differences on random weight coordinates.

    :param net: Net whose weights must be finite
    :param x: Inputs (B, input_width)
    :param y: Targets (B, output_width)
    :param n_coords: Number of weight coordinates to check
    :param step: Finite-difference step
    :param rng_seed: Seed for coordinate selection
    :param gradient_fn: Replacement for net.loss_and_gradients
    :return: Max relative error over the checked coordinates
    :rtype: float
    """
    _, grads = (gradient_fn or net.loss_and_gradients)(x, y)
    params = net.parameters()
    sizes = np.array([p.size for p in params])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(rng_seed)
    coords = rng.choice(offsets[-1], size=min(n_coords, offsets[-1]), replace=False)

    worst = 0.0
    for coord in coords:
        k = int(np.searchsorted(offsets, coord, side='right') - 1)
        j = int(coord - offsets[k])
        flat = params[k].reshape(-1)
        original = flat[j]
        flat[j] = original + step
        loss_plus = net.loss(x, y)
        flat[j] = original - step
        loss_minus = net.loss(x, y)
        flat[j] = original
        numeric = (loss_plus - loss_minus) / (2.0 * step)
        analytic = float(grads[k].reshape(-1)[j])
        error = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-6)
        worst = max(worst, error)
    return worst


def _write_tensor(f, name: str, array: np.ndarray) -> None:
    matrix = np.atleast_2d(array)
    f.write(f'tensor {name} {matrix.shape[0]} {matrix.shape[1]}\n')
    np.savetxt(f, matrix, fmt='%25.17e')


def save_weights(net: PredictorNet, path) -> None:
    """
    Write a net as a plain-text header followed by row-major fixed-width tensors.
    """
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f'{WEIGHTS_FORMAT} {WEIGHTS_VERSION}\n')
        f.write(f'variant {net.variant}\n')
        f.write(f'role {net.role}\n')
        f.write(f'activation {net.activation}\n')
        f.write(f'history {net.history}\n')
        f.write(f'n_rays {net.n_rays}\n')
        f.write('widths ' + ' '.join(str(w) for w in net.widths) + '\n')
        _write_tensor(f, 'input_mean', net.input_mean)
        _write_tensor(f, 'input_std', net.input_std)
        _write_tensor(f, 'target_mean', net.target_mean)
        _write_tensor(f, 'target_std', net.target_std)
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            _write_tensor(f, f'W{i}', w)
            _write_tensor(f, f'b{i}', b)


def _read_tensor(lines, position: int, name: str, shape: tuple) -> tuple[np.ndarray, int]:
    if position >= len(lines):
        raise ShapeMismatchError(f'truncated weights file: missing tensor {name}')
    header = lines[position].split()
    if len(header) != 4 or header[0] != 'tensor' or header[1] != name:
        raise ShapeMismatchError(f'expected tensor {name}, found {lines[position].strip()!r}')
    rows, cols = int(header[2]), int(header[3])
    if (rows, cols) != shape:
        raise ShapeMismatchError(f'tensor {name} has shape {(rows, cols)}, expected {shape}')
    body = lines[position + 1:position + 1 + rows]
    if len(body) != rows:
        raise ShapeMismatchError(f'truncated weights file: tensor {name} has {len(body)} of {rows} rows')
    values = []
    for row in body:
        parsed = np.array(row.split(), dtype=float)
        if parsed.size != cols:
            raise ShapeMismatchError(f'truncated weights file: tensor {name} row has {parsed.size} of {cols} values')
        values.append(parsed)
    return np.array(values), position + 1 + rows


def load_weights(path) -> PredictorNet:
    """
    Read a net written by save_weights; outputs reproduce bit-exactly.

    :raises ShapeMismatchError: On a version mismatch, truncated file or inconsistent shapes
    """
    with open(path, encoding='utf-8') as f:
        lines = f.read().splitlines()
    if len(lines) < 7:
        raise ShapeMismatchError('truncated weights file: incomplete header')
    fmt, version = (lines[0].split() + ['', ''])[:2]
    if fmt != WEIGHTS_FORMAT or version != str(WEIGHTS_VERSION):
        raise ShapeMismatchError(f'unsupported weights file version: {lines[0].strip()!r}')
    header = {}
    for line in lines[1:7]:
        key, _, value = line.partition(' ')
        header[key] = value.strip()
    try:
        widths = [int(w) for w in header['widths'].split()]
        history, n_rays = int(header['history']), int(header['n_rays'])
        variant, role, activation = header['variant'], header['role'], header['activation']
    except (KeyError, ValueError) as e:
        raise ShapeMismatchError(f'corrupted weights header: {e}') from e
    if len(widths) < 2:
        raise ShapeMismatchError('corrupted weights header: fewer than two layer widths')
    if widths[0] != input_width(history, n_rays) or widths[-1] != output_width(n_rays):
        raise ShapeMismatchError('header widths do not match history and n_rays')

    position = 7
    stats = {}
    for name, width in (('input_mean', widths[0]), ('input_std', widths[0]),
                        ('target_mean', widths[-1]), ('target_std', widths[-1])):
        tensor, position = _read_tensor(lines, position, name, (1, width))
        stats[name] = tensor[0]
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        w, position = _read_tensor(lines, position, f'W{i}', (fan_in, fan_out))
        b, position = _read_tensor(lines, position, f'b{i}', (1, fan_out))
        weights.append(w)
        biases.append(b[0])
    return PredictorNet(weights, biases, variant, role, activation, history, n_rays, **stats)
