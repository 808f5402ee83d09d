"""Recurrent forecaster: stacked LSTM cells built from tape ops, plus training."""

from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Adam, Tape, sigmoid
from .dataset import HORIZON, LOOKBACK, WindowedDataset
from .series import FEATURES

HIDDEN = 32
PARAM_BLOCKS = (
    "lstm1_W", "lstm1_b",
    "lstm2_W", "lstm2_b",
    "lstm3_W", "lstm3_b",
    "head_W", "head_b",
)


@dataclass
class TrainOptions:
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    # single extension point for strategy-specific training behavior:
    # extra_grad_fn(params) -> per-block gradient additions (regularizers),
    # grad_post_fn(grads, params) -> replacement gradients (projections)
    extra_grad_fn: object = None
    grad_post_fn: object = None

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainReport:
    best_val_loss: float
    best_epoch: int
    train_seconds: float
    n_train_examples: int
    val_history: list[float] = field(default_factory=list)


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


class RecurrentForecaster:
    """Three stacked LSTM layers and a linear head over the last hidden state.

    Parameters live in a flat dict of named float64 matrices; every layer's
    gate weights sit in one (4H, in+H) block so the whole model is eight
    arrays. fit() mutates the instance and keeps the epoch snapshot with the
    lowest validation MSE.
    """

    def __init__(self, seed: int = 0, hidden: int = HIDDEN,
                 lookback: int = LOOKBACK, horizon: int = HORIZON,
                 n_features: int = len(FEATURES)) -> None:
        self.hidden = hidden
        self.lookback = lookback
        self.horizon = horizon
        self.n_features = n_features
        rng = np.random.default_rng(seed)
        h = hidden
        params: dict[str, np.ndarray] = {}
        in_dim = n_features
        for layer in (1, 2, 3):
            params[f"lstm{layer}_W"] = glorot(rng, 4 * h, in_dim + h)
            params[f"lstm{layer}_b"] = np.zeros((4 * h, 1))
            in_dim = h
        params["head_W"] = glorot(rng, horizon, h)
        params["head_b"] = np.zeros((horizon, 1))
        self.params = params

    # -- parameter plumbing ------------------------------------------------

    def get_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def set_params(self, params: dict[str, np.ndarray]) -> "RecurrentForecaster":
        for name in PARAM_BLOCKS:
            if name not in params:
                raise ValueError(f"missing parameter block {name!r}")
            if params[name].shape != self.params[name].shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: expected "
                    f"{self.params[name].shape}, got {params[name].shape}"
                )
        self.params = {k: np.asarray(params[k], dtype=np.float64).copy()
                       for k in PARAM_BLOCKS}
        return self

    def clone(self) -> "RecurrentForecaster":
        twin = copy.copy(self)
        twin.params = self.get_params()
        return twin

    def save(self, path, metadata: dict | None = None) -> None:
        blob = {
            "hidden": self.hidden, "lookback": self.lookback,
            "horizon": self.horizon, "n_features": self.n_features,
            "params": {k: v.tolist() for k, v in self.params.items()},
        }
        if metadata:
            blob["metadata"] = dict(metadata)
        with open(path, "w") as fh:
            json.dump(blob, fh)

    @classmethod
    def load(cls, path) -> "RecurrentForecaster":
        with open(path) as fh:
            blob = json.load(fh)
        net = cls(seed=0, hidden=blob["hidden"], lookback=blob["lookback"],
                  horizon=blob["horizon"], n_features=blob["n_features"])
        net.set_params({k: np.asarray(v, dtype=np.float64)
                        for k, v in blob["params"].items()})
        return net

    # -- forward passes ----------------------------------------------------

    def _check_inputs(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim == 2:
            inputs = inputs[None]
        if inputs.ndim != 3 or inputs.shape[1:] != (self.lookback, self.n_features):
            raise ValueError(
                f"expected (n, {self.lookback}, {self.n_features}) inputs, "
                f"got {inputs.shape}"
            )
        return inputs

    def predict(self, inputs: np.ndarray, batch_size: int = 4096) -> np.ndarray:
        """Forward pass without a tape; mirrors the taped op order exactly."""
        inputs = self._check_inputs(inputs)
        out = np.empty((len(inputs), self.horizon))
        for lo in range(0, len(inputs), batch_size):
            out[lo:lo + batch_size] = self._forward_fast(inputs[lo:lo + batch_size])
        return out

    def _forward_fast(self, batch: np.ndarray) -> np.ndarray:
        p, h = self.params, self.hidden
        b = batch.shape[0]
        hs = [np.zeros((h, b)) for _ in range(3)]
        cs = [np.zeros((h, b)) for _ in range(3)]
        for t in range(self.lookback):
            x = batch[:, t, :].T
            for layer in range(3):
                w, bias = p[f"lstm{layer + 1}_W"], p[f"lstm{layer + 1}_b"]
                z = np.concatenate([x, hs[layer]], axis=0)
                pre = np.matmul(w, z) + bias
                gi = sigmoid(pre[0:h])
                gf = sigmoid(pre[h:2 * h])
                gg = np.tanh(pre[2 * h:3 * h])
                go = sigmoid(pre[3 * h:4 * h])
                cs[layer] = gf * cs[layer] + gi * gg
                hs[layer] = go * np.tanh(cs[layer])
                x = hs[layer]
        y = np.matmul(p["head_W"], hs[2]) + p["head_b"]
        return y.T

    def _build_forward(self, tape: Tape, nodes: dict, batch: np.ndarray):
        """Taped forward over a batch; returns the (horizon, b) prediction node."""
        h = self.hidden
        b = batch.shape[0]
        zeros = np.zeros((h, b))
        hs = [tape.const(zeros) for _ in range(3)]
        cs = [tape.const(zeros) for _ in range(3)]
        for t in range(self.lookback):
            x = tape.const(batch[:, t, :].T.copy())
            for layer in range(3):
                z = tape.concat_rows(x, hs[layer])
                pre = tape.add(tape.matmul(nodes[f"lstm{layer + 1}_W"], z),
                               nodes[f"lstm{layer + 1}_b"])
                gi = tape.sigmoid(tape.slice_rows(pre, 0, h))
                gf = tape.sigmoid(tape.slice_rows(pre, h, 2 * h))
                gg = tape.tanh(tape.slice_rows(pre, 2 * h, 3 * h))
                go = tape.sigmoid(tape.slice_rows(pre, 3 * h, 4 * h))
                cs[layer] = tape.add(tape.hadamard(gf, cs[layer]),
                                     tape.hadamard(gi, gg))
                hs[layer] = tape.hadamard(go, tape.tanh(cs[layer]))
                x = hs[layer]
        return tape.add(tape.matmul(nodes["head_W"], hs[2]), nodes["head_b"])

    def _build_loss(self, tape: Tape, nodes: dict, batch: np.ndarray,
                    targets: np.ndarray):
        pred = self._build_forward(tape, nodes, batch)
        diff = tape.add(pred, tape.scalar_mul(tape.const(targets.T.copy()), -1.0))
        return tape.scalar_mul(tape.sum_squares(diff),
                               1.0 / (self.horizon * batch.shape[0]))

    def batch_gradients(self, batch: np.ndarray, targets: np.ndarray):
        """(loss value, per-block gradients) for one batch; used by training
        and by strategies that need raw gradients."""
        tape = Tape()
        nodes = {name: tape.param(self.params[name]) for name in PARAM_BLOCKS}
        loss = self._build_loss(tape, nodes, batch, targets)
        grads = tape.backward(loss)
        return tape.value(loss), {name: grads[nodes[name]] for name in PARAM_BLOCKS}

    # -- training ----------------------------------------------------------

    def evaluate(self, ds: WindowedDataset) -> float:
        pred = self.predict(ds.inputs)
        return float(np.mean((pred - ds.targets) ** 2))

    def fit(self, train: WindowedDataset, val: WindowedDataset,
            opts: TrainOptions) -> TrainReport:
        if len(train) == 0 or len(val) == 0:
            raise ValueError("training and validation sets must be non-empty")
        started = time.monotonic()
        rng = np.random.default_rng(opts.seed)
        adam = Adam(self.params, lr=opts.learning_rate)
        best_loss = np.inf
        best_params = self.get_params()
        best_epoch = 0
        history: list[float] = []
        n = len(train)
        for epoch in range(1, opts.epochs + 1):
            order = rng.permutation(n)
            for lo in range(0, n, opts.batch_size):
                idx = order[lo:lo + opts.batch_size]
                loss, grads = self.batch_gradients(train.inputs[idx],
                                                   train.targets[idx])
                if not np.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite loss {loss} at epoch {epoch}, "
                        f"batch offset {lo}"
                    )
                if opts.extra_grad_fn is not None:
                    for name, extra in opts.extra_grad_fn(self.params).items():
                        grads[name] = grads[name] + extra
                if opts.grad_post_fn is not None:
                    grads = opts.grad_post_fn(grads, self.params)
                adam.step(grads)
            val_loss = self.evaluate(val)
            history.append(val_loss)
            if val_loss < best_loss:
                best_loss = val_loss
                best_epoch = epoch
                best_params = self.get_params()
        self.params = best_params
        return TrainReport(
            best_val_loss=float(best_loss),
            best_epoch=best_epoch,
            train_seconds=time.monotonic() - started,
            n_train_examples=n,
            val_history=history,
        )
