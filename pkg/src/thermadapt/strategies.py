"""Nine model-update strategies behind one update(ctx) contract.

Each strategy consumes the newly collected period of windows plus handles to
the pretrained general model and the previous target model, and returns the
next target model. Stateful strategies (buffers, memories, archives, pools)
own their state; stored_examples() reports how many windows that state keeps
alive after the update.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .dataset import WindowedDataset, concat_datasets, split_train_val
from .network import PARAM_BLOCKS, RecurrentForecaster, TrainOptions
from .seeding import derive_seed

log = logging.getLogger(__name__)

VALID_PERIOD_MONTHS = (1, 2, 3)


@dataclass
class UpdateContext:
    """Inputs for one update step n (1-based); previous is None at n = 1."""

    n: int
    period_months: int
    data: WindowedDataset
    general: RecurrentForecaster
    previous: RecurrentForecaster | None
    seed: int
    event: bool = False  # drift event inside this period (schedule oracle)
    epochs: int = 60
    initial_epochs: int = 150
    batch_size: int = 64
    learning_rate: float = 1e-3
    train_stride: int = 1

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("update index n is 1-based")
        if self.period_months not in VALID_PERIOD_MONTHS:
            raise ValueError(
                f"period length must be one of {VALID_PERIOD_MONTHS} months"
            )
        if len(self.data) == 0:
            raise ValueError("update period contains no windows")

    def base_model(self) -> RecurrentForecaster:
        return self.general if self.previous is None else self.previous


def fine_tune(base: RecurrentForecaster, pool: WindowedDataset,
              ctx: UpdateContext, epochs: int | None = None,
              extra_grad_fn=None, grad_post_fn=None) -> RecurrentForecaster:
    """Clone base and train it on a 70/30 chronological split of pool."""
    train, val = split_train_val(pool)
    train, val = train.thin(ctx.train_stride), val.thin(ctx.train_stride)
    net = base.clone()
    net.fit(train, val, TrainOptions(
        epochs=ctx.epochs if epochs is None else epochs,
        batch_size=ctx.batch_size,
        learning_rate=ctx.learning_rate,
        seed=ctx.seed,
        extra_grad_fn=extra_grad_fn,
        grad_post_fn=grad_post_fn,
    ))
    return net


class UpdateStrategy:
    name = "?"

    def update(self, ctx: UpdateContext) -> RecurrentForecaster:
        raise NotImplementedError

    def stored_examples(self) -> int:
        return 0


class InitialFineTuneOnly(UpdateStrategy):
    """Fine-tune the general model once on the first period, then freeze."""

    name = "ift"

    def update(self, ctx: UpdateContext) -> RecurrentForecaster:
        if ctx.n == 1:
            return fine_tune(ctx.general, ctx.data, ctx)
        return ctx.previous.clone()


class IncrementalFineTune(UpdateStrategy):
    """Fine-tune the previous model on the new period only."""

    name = "il"

    def update(self, ctx: UpdateContext) -> RecurrentForecaster:
        return fine_tune(ctx.base_model(), ctx.data, ctx)


class GeneralModelFineTune(UpdateStrategy):
    """Fine-tune the general model on the new period, ignoring f_{n-1}."""

    name = "gil"

    def update(self, ctx: UpdateContext) -> RecurrentForecaster:
        return fine_tune(ctx.general, ctx.data, ctx)


def estimate_fisher(net: RecurrentForecaster,
                    buffer: WindowedDataset) -> dict[str, np.ndarray]:
    """Diagonal Fisher proxy: mean per-example squared gradient of the MSE."""
    if len(buffer) == 0:
        raise ValueError("fisher estimation needs a non-empty buffer")
    total = {k: np.zeros_like(net.params[k]) for k in PARAM_BLOCKS}
    for i in range(len(buffer)):
        _, grads = net.batch_gradients(buffer.inputs[i:i + 1],
                                       buffer.targets[i:i + 1])
        for k in PARAM_BLOCKS:
            total[k] += grads[k] ** 2
    return {k: v / len(buffer) for k, v in total.items()}


class ElasticWeightConsolidation(UpdateStrategy):
    """Quadratic pull toward the previous optimum, weighted by Fisher values
    estimated on a rolling buffer of past examples."""

    name = "ewc"

    def __init__(self, penalty_scale: float = 100.0, buffer_size: int = 1000,
                 refresh_size: int = 250) -> None:
        self.penalty_scale = penalty_scale
        self.buffer_size = buffer_size
        self.refresh_size = refresh_size
        self.buffer: WindowedDataset | None = None
        self.anchors: dict[str, np.ndarray] | None = None
        self.fisher: dict[str, np.ndarray] | None = None

    def penalty_gradient(self, params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        # gradient of (scale/2) * sum_i F_i (theta_i - anchor_i)^2
        return {k: self.penalty_scale * self.fisher[k] * (params[k] - self.anchors[k])
                for k in PARAM_BLOCKS}

    def _sample(self, ds: WindowedDataset, count: int, seed: int) -> WindowedDataset:
        rng = np.random.default_rng(seed)
        k = min(count, len(ds))
        idx = np.sort(rng.choice(len(ds), size=k, replace=False))
        return ds.take(idx)

    def update(self, ctx: UpdateContext) -> RecurrentForecaster:
        hook = None if self.fisher is None else self.penalty_gradient
        net = fine_tune(ctx.base_model(), ctx.data, ctx, extra_grad_fn=hook)
        fresh = self._sample(
            ctx.data,
            self.buffer_size if self.buffer is None else self.refresh_size,
            derive_seed(ctx.seed, "ewc-buffer"),
        )
        merged = fresh if self.buffer is None else concat_datasets([self.buffer, fresh])
        if len(merged) > self.buffer_size:  # FIFO: oldest insertions go first
            merged = merged.take(slice(len(merged) - self.buffer_size, len(merged)))
        self.buffer = merged
        self.anchors = net.get_params()
        self.fisher = estimate_fisher(net, self.buffer)
        return net

    def stored_examples(self) -> int:
        return 0 if self.buffer is None else len(self.buffer)


def flatten_blocks(blocks: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([blocks[k].ravel() for k in PARAM_BLOCKS])


def unflatten_blocks(vec: np.ndarray,
                     like: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    out = {}
    offset = 0
    for k in PARAM_BLOCKS:
        size = like[k].size
        out[k] = vec[offset:offset + size].reshape(like[k].shape)
        offset += size
    return out


def gem_project(g: np.ndarray, memory_grads: np.ndarray,
                tol: float = 1e-6, max_iters: int = 1000) -> np.ndarray:
    """Smallest change to g making it non-conflicting with every memory
    gradient: min ||g~ - g||^2 s.t. <g~, g_k> >= 0.

    With g~ = g + memory_grads.T @ v (v >= 0 from the KKT conditions) the
    dual is min ||memory_grads.T @ v + g|| over v >= 0, a non-negative
    least squares problem solved exactly by Lawson-Hanson. First-order
    solvers were tried first and crawl when the Gram matrix is singular
    (more memories than parameters, or nearly empty feasible cones)."""
    margins = memory_grads @ g
    if np.all(margins >= 0.0):
        return g
    if max_iters > 0:
        try:
            v, _ = nnls(memory_grads.T, -g, maxiter=max_iters)
        except RuntimeError:  # iteration cap hit inside the solver
            v = None
        if v is not None:
            projected = g + memory_grads.T @ v
            if (memory_grads @ projected).min() >= -tol:
                return projected
    log.warning("gradient projection did not converge; using raw gradient")
    return g


class GradientEpisodicMemory(UpdateStrategy):
    """Keep a sample of every past period and project each batch gradient
    so no stored memory's loss increases to first order."""

    name = "gem"

    def __init__(self, samples_per_update: int = 250) -> None:
        self.samples_per_update = samples_per_update
        self.memories: list[WindowedDataset] = []

    def update(self, ctx: UpdateContext) -> RecurrentForecaster:
        post = None
        if self.memories:
            memories = list(self.memories)
            probe = ctx.base_model().clone()

            def project(grads, params):
                probe.params = params  # memory gradients at the live weights
                mem = np.stack([
                    flatten_blocks(probe.batch_gradients(m.inputs, m.targets)[1])
                    for m in memories
                ])
                flat = gem_project(flatten_blocks(grads), mem)
                return unflatten_blocks(flat, grads)

            post = project
        net = fine_tune(ctx.base_model(), ctx.data, ctx, grad_post_fn=post)
        rng = np.random.default_rng(derive_seed(ctx.seed, "gem-memory"))
        k = min(self.samples_per_update, len(ctx.data))
        idx = np.sort(rng.choice(len(ctx.data), size=k, replace=False))
        self.memories.append(ctx.data.take(idx))
        return net

    def stored_examples(self) -> int:
        return sum(len(m) for m in self.memories)


class SeasonalMemoryFineTune(UpdateStrategy):
    """Fine-tune on the new period plus the matching season from a year ago
    (three periods centered 12 months back), once enough history exists."""

    name = "sml"

    def __init__(self) -> None:
        self.archive: dict[int, WindowedDataset] = {}
        self.last_pool_updates: tuple[int, ...] = ()

    def update(self, ctx: UpdateContext) -> RecurrentForecaster:
        alpha = 12 // ctx.period_months
        self.archive[ctx.n] = ctx.data
        if ctx.n - alpha - 1 >= 1:
            picks = (ctx.n - alpha - 1, ctx.n - alpha, ctx.n - alpha + 1, ctx.n)
        else:
            picks = (ctx.n,)
        self.last_pool_updates = picks
        pool = concat_datasets([self.archive[i] for i in picks])
        net = fine_tune(ctx.base_model(), pool, ctx)
        for key in [k for k in self.archive if k < ctx.n - alpha]:
            del self.archive[key]
        return net

    def stored_examples(self) -> int:
        return sum(len(d) for d in self.archive.values())


class AccumulatedFineTune(UpdateStrategy):
    """Fine-tune the general model on everything collected so far."""

    name = "alg"

    def __init__(self) -> None:
        self.pool: list[WindowedDataset] = []

    def update(self, ctx: UpdateContext) -> RecurrentForecaster:
        self.pool.append(ctx.data)
        return fine_tune(ctx.general, concat_datasets(self.pool), ctx)

    def stored_examples(self) -> int:
        return sum(len(d) for d in self.pool)


class EventResetAccumulatedFineTune(AccumulatedFineTune):
    """Accumulate like alg, but drop all pre-event data when a drift event
    lands inside the new period."""

    name = "ealg"

    def update(self, ctx: UpdateContext) -> RecurrentForecaster:
        if ctx.event:
            self.pool.clear()
        return super().update(ctx)


class ScratchRetrain(UpdateStrategy):
    """Train a freshly initialized model on all collected data; no transfer."""

    name = "scratch"

    def __init__(self) -> None:
        self.pool: list[WindowedDataset] = []

    def update(self, ctx: UpdateContext) -> RecurrentForecaster:
        self.pool.append(ctx.data)
        g = ctx.general
        blank = RecurrentForecaster(
            seed=derive_seed(ctx.seed, "scratch-init"),
            hidden=g.hidden, lookback=g.lookback,
            horizon=g.horizon, n_features=g.n_features,
        )
        return fine_tune(blank, concat_datasets(self.pool), ctx,
                         epochs=ctx.initial_epochs)

    def stored_examples(self) -> int:
        return sum(len(d) for d in self.pool)


STRATEGIES: dict[str, type[UpdateStrategy]] = {
    cls.name: cls for cls in (
        InitialFineTuneOnly, IncrementalFineTune, GeneralModelFineTune,
        ElasticWeightConsolidation, GradientEpisodicMemory,
        SeasonalMemoryFineTune, AccumulatedFineTune,
        EventResetAccumulatedFineTune, ScratchRetrain,
    )
}


def make_strategy(name: str, **options) -> UpdateStrategy:
    try:
        cls = STRATEGIES[name]
    except KeyError:
        raise ValueError(
            f"unknown strategy {name!r}; valid names: {sorted(STRATEGIES)}"
        ) from None
    return cls(**options)
