"""Q-value storage shared by both learning algorithms.

Two interchangeable backends hold per-agent values keyed on the JOINT
action pair: an exact tabular array over discretized states, and a small
dense rectifier network with hand-written reverse-mode gradients trained
by plain SGD.  Either backend exposes its per-state values as an
n_actions1 x n_actions2 matrix, which is what turns a state into a
bimatrix game.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class TrainingDivergenceError(RuntimeError):
    """Loss or gradients went non-finite; the run must stop, not limp on."""


class CheckpointError(ValueError):
    """Checkpoint file is missing, wrong version, or shape-incompatible."""


CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Transition:
    """One step of experience for the replay buffer."""

    state: np.ndarray
    a1: int
    a2: int
    r1: float
    r2: float
    next_state: np.ndarray
    terminal: bool

    def __post_init__(self):
        if not (np.isfinite(self.r1) and np.isfinite(self.r2)):
            raise ValueError("rewards must be finite")
        if self.a1 < 0 or self.a2 < 0:
            raise ValueError("action indices must be non-negative")


class QTable:
    """Dense (n_states, n_a1, n_a2) array; unwritten cells read as
    default_value."""

    kind = "qtable"

    def __init__(self, n_states: int, n_a1: int, n_a2: int, default_value: float = 0.0):
        self.n_states = n_states
        self.n_a1 = n_a1
        self.n_a2 = n_a2
        self.default_value = default_value
        self.values = np.full((n_states, n_a1, n_a2), default_value, dtype=float)

    def check_state(self, state: int):
        if not 0 <= state < self.n_states:
            raise IndexError(f"state index {state} outside [0, {self.n_states})")

    def copy(self) -> "QTable":
        out = QTable(self.n_states, self.n_a1, self.n_a2, self.default_value)
        out.values = self.values.copy()
        return out


class DenseApproximator:
    """Fully connected rectifier network mapping state features to one
    value per joint action (row-major over (a1, a2))."""

    kind = "dense"

    def __init__(self, layer_sizes: list[int], n_a1: int, n_a2: int, rng: np.random.Generator):
        if layer_sizes[-1] != n_a1 * n_a2:
            raise ValueError("output layer must have n_a1 * n_a2 units")
        self.layer_sizes = list(layer_sizes)
        self.n_a1 = n_a1
        self.n_a2 = n_a2
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batched forward pass; hidden layers rectified, output linear."""
        a = np.atleast_2d(x)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w + b, 0.0)
        out = a @ self.weights[-1] + self.biases[-1]
        return out[0] if x.ndim == 1 else out

    def _forward_cached(self, x: np.ndarray):
        activations = [x]
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w + b, 0.0)
            activations.append(a)
        return activations, a @ self.weights[-1] + self.biases[-1]

    def gradients(self, x: np.ndarray, grad_out: np.ndarray):
        """Reverse-mode gradients of a loss whose gradient w.r.t. the
        network output is grad_out (same shape as the output batch)."""
        activations, _ = self._forward_cached(x)
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = grad_out
        for layer in range(len(self.weights) - 1, -1, -1):
            grads_w[layer] = activations[layer].T @ delta
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                # rectifier mask: activations are post-relu, zero where inactive
                delta = (delta @ self.weights[layer].T) * (activations[layer] > 0.0)
        return grads_w, grads_b

    def get_flat_params(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def set_flat_params(self, flat: np.ndarray):
        offset = 0
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[layer] = flat[offset : offset + w.size].reshape(w.shape).copy()
            offset += w.size
            self.biases[layer] = flat[offset : offset + b.size].reshape(b.shape).copy()
            offset += b.size

    def clone(self) -> "DenseApproximator":
        out = DenseApproximator.__new__(DenseApproximator)
        out.layer_sizes = list(self.layer_sizes)
        out.n_a1 = self.n_a1
        out.n_a2 = self.n_a2
        out.weights = [w.copy() for w in self.weights]
        out.biases = [b.copy() for b in self.biases]
        return out


def q_matrix(backend: QTable | DenseApproximator, state) -> np.ndarray:
    """Per-state joint-action value matrix, shape (n_a1, n_a2).

    For the tabular backend this is a live view into the table; treat it as
    read-only and mutate through tabular_update.
    """
    if isinstance(backend, QTable):
        backend.check_state(state)
        return backend.values[state]
    flat = backend.forward(np.asarray(state, dtype=float))
    return flat.reshape(backend.n_a1, backend.n_a2)


def td_target_nash(r: float, gamma: float, q_next: np.ndarray, mu1, mu2, terminal: bool = False) -> float:
    """Bootstrapped target r + gamma * mu1' q_next mu2; just r on terminal
    transitions."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    if terminal:
        return float(r)
    p1 = getattr(mu1, "probs", mu1)
    p2 = getattr(mu2, "probs", mu2)
    if q_next.shape != (len(p1), len(p2)):
        raise ValueError(f"strategy lengths {(len(p1), len(p2))} do not match matrix shape {q_next.shape}")
    return float(r + gamma * (p1 @ q_next @ p2))


def tabular_update(table: QTable, state: int, a1: int, a2: int, target: float, alpha: float) -> QTable:
    """Convex step of the stored cell toward the target: only cell
    (state, a1, a2) changes, to (1 - alpha) * old + alpha * target."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    table.check_state(state)
    if not (0 <= a1 < table.n_a1 and 0 <= a2 < table.n_a2):
        raise IndexError(f"action pair ({a1}, {a2}) outside table shape")
    old = table.values[state, a1, a2]
    table.values[state, a1, a2] = (1.0 - alpha) * old + alpha * target
    return table


def mse_loss_and_gradients(net: DenseApproximator, batch: list[tuple[np.ndarray, int, float]]):
    """Mean squared error at the indexed outputs and its parameter
    gradients, for a batch of (state features, flat action index, target)."""
    if not batch:
        raise ValueError("batch must be non-empty")
    x = np.stack([np.asarray(s, dtype=float) for s, _, _ in batch])
    idx = np.array([a for _, a, _ in batch])
    targets = np.array([t for _, _, t in batch], dtype=float)
    if not np.isfinite(targets).all():
        raise ValueError("targets must be finite")

    _, out = net._forward_cached(x)
    rows = np.arange(len(batch))
    err = out[rows, idx] - targets
    loss = float(np.mean(err**2))
    if not np.isfinite(loss):
        return loss, None, None

    grad_out = np.zeros_like(out)
    grad_out[rows, idx] = 2.0 * err / len(batch)
    grads_w, grads_b = net.gradients(x, grad_out)
    return loss, grads_w, grads_b


def approximator_update(
    net: DenseApproximator,
    batch: list[tuple[np.ndarray, int, float]],
    learning_rate: float,
    grad_clip: float | None = None,
) -> tuple[DenseApproximator, float]:
    """One SGD step on mean squared error at the indexed outputs.

    Returns the pre-step loss.  Non-finite loss or gradient aborts with
    TrainingDivergenceError rather than continuing silently.
    """
    loss, grads_w, grads_b = mse_loss_and_gradients(net, batch)
    if grads_w is None or not np.isfinite(loss):
        raise TrainingDivergenceError(f"non-finite loss {loss}")
    norm_sq = sum(float((g**2).sum()) for g in grads_w) + sum(float((g**2).sum()) for g in grads_b)
    if not np.isfinite(norm_sq):
        raise TrainingDivergenceError("non-finite gradient")
    scale = learning_rate
    if grad_clip is not None and norm_sq > grad_clip**2:
        scale *= grad_clip / np.sqrt(norm_sq)
    for layer in range(len(net.weights)):
        net.weights[layer] -= scale * grads_w[layer]
        net.biases[layer] -= scale * grads_b[layer]
    return net, loss


class ReplayBuffer:
    """Bounded FIFO of transitions with O(1) random access."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0

    def push(self, item: Transition):
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._next] = item
        self._next = (self._next + 1) % self.capacity

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i: int) -> Transition:
        return self._items[i]


def replay_sample(buffer: ReplayBuffer, batch_size: int, rng: np.random.Generator) -> list[Transition] | None:
    """Uniform sample without replacement; None when the buffer is not yet
    full enough (the caller skips its update for that step)."""
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    if len(buffer) < batch_size:
        return None
    picks = rng.choice(len(buffer), size=batch_size, replace=False)
    return [buffer[int(i)] for i in picks]


def save_checkpoint(path, backend: QTable | DenseApproximator):
    """Self-describing npz snapshot of a backend."""
    if isinstance(backend, QTable):
        np.savez(
            path,
            format_version=CHECKPOINT_VERSION,
            kind="qtable",
            shape=np.array([backend.n_states, backend.n_a1, backend.n_a2]),
            default_value=backend.default_value,
            values=backend.values,
        )
    else:
        arrays = {
            "format_version": CHECKPOINT_VERSION,
            "kind": "dense",
            "layer_sizes": np.array(backend.layer_sizes),
            "actions": np.array([backend.n_a1, backend.n_a2]),
        }
        for layer, (w, b) in enumerate(zip(backend.weights, backend.biases)):
            arrays[f"w{layer}"] = w
            arrays[f"b{layer}"] = b
        np.savez(path, **arrays)


def load_checkpoint(path) -> QTable | DenseApproximator:
    try:
        data = np.load(path, allow_pickle=False)
    except FileNotFoundError:
        raise CheckpointError(f"no checkpoint at {path}")
    version = int(data["format_version"])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})")
    kind = str(data["kind"])
    if kind == "qtable":
        n_states, n_a1, n_a2 = (int(v) for v in data["shape"])
        table = QTable(n_states, n_a1, n_a2, float(data["default_value"]))
        table.values = data["values"].astype(float)
        return table
    if kind == "dense":
        layer_sizes = [int(v) for v in data["layer_sizes"]]
        n_a1, n_a2 = (int(v) for v in data["actions"])
        net = DenseApproximator.__new__(DenseApproximator)
        net.layer_sizes = layer_sizes
        net.n_a1 = n_a1
        net.n_a2 = n_a2
        net.weights = [data[f"w{layer}"].astype(float) for layer in range(len(layer_sizes) - 1)]
        net.biases = [data[f"b{layer}"].astype(float) for layer in range(len(layer_sizes) - 1)]
        return net
    raise CheckpointError(f"unknown backend kind {kind!r}")
