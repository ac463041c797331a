"""Training harness: the per-minibatch family procedure, reference-model
training, evaluation, metrics files, and checkpoint persistence.

One family step runs, in order: the lesser-to-bigger parameter copy, a
train-mode forward of every model with independent per-model dropout masks
(the softmax-regression model gets none), per-model backward passes, the L2
penalty added to the base model's weight gradients, pairwise gradient
averaging into canonical groups, the EMA-style momentum update, and the
parameter update. Reference runs train a single model with plain gradients,
L2 on all weights, and standard momentum.

Randomness is split by purpose and keyed by position: shuffling by
(seed, epoch), dropout by (seed, epoch, step, model). Resuming from a
checkpoint therefore reproduces the uninterrupted run bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .checkpoint import Checkpoint, GroupState, load_checkpoint, save_checkpoint
from .errors import ConfigError, ConsistencyError, DivergenceError
from .family import (ModelFamily, CanonicalGroup, build_family, copy_up,
                     init_layer, paired_average_gradients)
from .mnist import BatchPlan, Dataset, batches, load_data_dir
from .nn import (DenseLayer, ModelSpec, model_backward, model_forward,
                 nll_loss, spec_for_params)
from .optim import (MomentumState, Schedule, apply_update, l2_gradient, lr_at,
                    momentum_nsn, momentum_standard)

DEFAULT_EPOCHS = 600
DEFAULT_BATCH = 128
EVAL_BATCH = 2048

METRICS_FILE = "metrics.csv"
BEST_FILE = "best.csv"
BEST_CHECKPOINT = "checkpoint_best.nsn"
FINAL_CHECKPOINT = "checkpoint_final.nsn"


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "nsn"  # "nsn" | "reference"
    n_hidden: int = 2
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH
    schedule: Schedule = field(default_factory=Schedule)
    l2_lambda: float = 9e-5
    input_keep: float = 0.8
    hidden_keep: float = 0.5
    init_seed: int = 0
    shuffle_seed: int = 1
    dropout_seed: int = 2
    shuffle: bool = True
    input_dim: int = 784
    hidden_dim: int = 784
    classes: int = 10
    data_dir: Path | None = None
    out_dir: Path | None = None
    debug_checks: bool = False

    def __post_init__(self):
        if self.mode not in ("nsn", "reference"):
            raise ConfigError(f"mode must be 'nsn' or 'reference', "
                              f"got {self.mode!r}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.l2_lambda < 0:
            raise ConfigError(f"l2_lambda must be >= 0, got {self.l2_lambda}")
        min_hidden = 1 if self.mode == "nsn" else 0
        if self.n_hidden < min_hidden:
            raise ConfigError(f"{self.mode} mode needs n_hidden >= "
                              f"{min_hidden}, got {self.n_hidden}")
        for name in ("init_seed", "shuffle_seed", "dropout_seed"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        for name, p in (("input_keep", self.input_keep),
                        ("hidden_keep", self.hidden_keep)):
            if not 0.0 < p <= 1.0:
                raise ConfigError(f"{name} must be in (0, 1], got {p}")

    def model_spec(self, m: int) -> ModelSpec:
        """Spec of the model with m hidden layers; the 0-hidden model never
        gets dropout."""
        dims = (self.input_dim,) + (self.hidden_dim,) * m + (self.classes,)
        if m == 0:
            return ModelSpec(dims)
        return ModelSpec(dims, self.input_keep, self.hidden_keep)

    def echo(self) -> str:
        d = {k: (str(v) if isinstance(v, Path) else v)
             for k, v in self.__dict__.items()}
        d["schedule"] = self.schedule.__dict__
        return json.dumps(d, sort_keys=True)


@dataclass
class MetricsRecord:
    epoch: int
    lr: float
    losses: list
    accuracies: list


@dataclass
class TrainResult:
    history: list
    best_epoch: int
    best_accuracies: list
    final_accuracies: list
    views: list  # final parameters, one layer list per model
    checkpoint_path: Path | None


def _dropout_rng(config: TrainConfig, epoch: int, step: int,
                 model: int) -> np.random.Generator:
    return np.random.default_rng([config.dropout_seed, epoch, step, model])


def train_step(family: ModelFamily, momentum: Sequence[MomentumState],
               batch: tuple[np.ndarray, np.ndarray], config: TrainConfig,
               epoch: int, step: int = 0) -> list[float]:
    """One family minibatch update; returns each model's pre-update loss."""
    copy_up(family)
    x, labels = batch
    losses: list[float] = []
    grad_sets = []
    for m in range(family.n + 1):
        spec = config.model_spec(m)
        rng = (_dropout_rng(config, epoch, step, m)
               if spec.uses_dropout else None)
        view = family.view(m)
        logp, cache = model_forward(spec, view, x, "train", rng)
        loss = nll_loss(logp, labels)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at epoch {epoch} "
                                  f"step {step} (model {m})")
        losses.append(loss)
        grad_sets.append(model_backward(spec, view, cache, labels))
    if config.l2_lambda > 0:
        for grads, layer in zip(grad_sets[-1], family.view(family.n)):
            grads.d_weight = grads.d_weight + l2_gradient(config.l2_lambda,
                                                          layer.weight)
    group_grads = paired_average_gradients(grad_sets, family.n)
    lr = lr_at(config.schedule, epoch)
    alpha = config.schedule.alpha
    for grads, state, group in zip(group_grads, momentum, family.groups):
        state.v_weight = momentum_nsn(state.v_weight, grads.d_weight, alpha)
        state.v_bias = momentum_nsn(state.v_bias, grads.d_bias, alpha)
        group.layer.weight = apply_update(group.layer.weight,
                                          state.v_weight, lr)
        group.layer.bias = apply_update(group.layer.bias, state.v_bias, lr)
    return losses


def reference_step(layers: list[DenseLayer],
                   momentum: Sequence[MomentumState],
                   batch: tuple[np.ndarray, np.ndarray], config: TrainConfig,
                   epoch: int, step: int = 0) -> list[float]:
    """One regularly-trained minibatch update (standard momentum, L2 on
    every weight layer)."""
    x, labels = batch
    spec = config.model_spec(config.n_hidden)
    rng = (_dropout_rng(config, epoch, step, 0)
           if spec.uses_dropout else None)
    logp, cache = model_forward(spec, layers, x, "train", rng)
    loss = nll_loss(logp, labels)
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss at epoch {epoch} step {step}")
    grads = model_backward(spec, layers, cache, labels)
    lr = lr_at(config.schedule, epoch)
    alpha = config.schedule.alpha
    for g, state, layer in zip(grads, momentum, layers):
        d_weight = g.d_weight
        if config.l2_lambda > 0:
            d_weight = d_weight + l2_gradient(config.l2_lambda, layer.weight)
        state.v_weight = momentum_standard(state.v_weight, d_weight, alpha)
        state.v_bias = momentum_standard(state.v_bias, g.d_bias, alpha)
        layer.weight = apply_update(layer.weight, state.v_weight, lr)
        layer.bias = apply_update(layer.bias, state.v_bias, lr)
    return [loss]


def evaluate(params: Sequence[DenseLayer], dataset: Dataset,
             eval_batch: int = EVAL_BATCH) -> float:
    """Fraction of samples whose argmax log-probability equals the label."""
    spec = spec_for_params(params)
    correct = 0
    for start in range(0, dataset.count, eval_batch):
        x = dataset.images[start:start + eval_batch]
        labels = dataset.labels[start:start + eval_batch]
        logp, _ = model_forward(spec, params, x, "eval")
        correct += int(np.sum(np.argmax(logp, axis=1) == labels))
    return correct / dataset.count


def _assert_family_invariants(family: ModelFamily, probe: np.ndarray) -> None:
    """Debug pass: tie consistency plus detachment exactness on a probe."""
    from .family import detach

    copy_up(family)
    for k in range(family.n + 1):
        view = family.view(family.n - k)
        spec = spec_for_params(view)
        got, _ = model_forward(spec, detach(family, k), probe, "eval")
        want, _ = model_forward(spec, view, probe, "eval")
        if not np.array_equal(got, want):
            raise ConsistencyError(f"detachment exactness violated at k={k}")


class _MetricsWriter:
    """Appends one CSV row per epoch, flushing immediately."""

    def __init__(self, out_dir: Path | None, n_models: int):
        self.handle = None
        if out_dir is None:
            return
        path = Path(out_dir) / METRICS_FILE
        new = not path.exists() or path.stat().st_size == 0
        self.handle = open(path, "a", encoding="utf-8")
        if new:
            cols = (["epoch", "lr"]
                    + [f"loss_m{i}" for i in range(n_models)]
                    + [f"acc_m{i}" for i in range(n_models)])
            self.handle.write(",".join(cols) + "\n")
            self.handle.flush()

    def write(self, record: MetricsRecord) -> None:
        if self.handle is None:
            return
        row = ([str(record.epoch), f"{record.lr:.8g}"]
               + [f"{v:.8g}" for v in record.losses]
               + [f"{v:.8g}" for v in record.accuracies])
        self.handle.write(",".join(row) + "\n")
        self.handle.flush()

    def close(self) -> None:
        if self.handle is not None:
            self.handle.close()


def _write_best(out_dir: Path | None, best_epoch: int,
                best_accs: Sequence[float]) -> None:
    if out_dir is None:
        return
    path = Path(out_dir) / BEST_FILE
    cols = ["best_epoch"] + [f"acc_m{i}" for i in range(len(best_accs))]
    row = [str(best_epoch)] + [f"{v:.8g}" for v in best_accs]
    path.write_text(",".join(cols) + "\n" + ",".join(row) + "\n",
                    encoding="utf-8")


def family_groups_state(family: ModelFamily,
                        momentum: Sequence[MomentumState]) -> list[GroupState]:
    return [GroupState(weight=g.layer.weight, bias=g.layer.bias,
                       v_weight=s.v_weight, v_bias=s.v_bias)
            for g, s in zip(family.groups, momentum)]


def family_from_checkpoint(ckpt: Checkpoint) -> tuple[ModelFamily,
                                                      list[MomentumState]]:
    """Rebuild a family plus momentum buffers from a checkpoint."""
    if len(ckpt.groups) != ckpt.n + 1:
        raise ConsistencyError(f"checkpoint claims n={ckpt.n} but has "
                               f"{len(ckpt.groups)} groups")
    classes, input_dim = ckpt.groups[0].weight.shape
    hidden = ckpt.groups[1].weight.shape[0] if ckpt.n >= 1 else input_dim
    groups = [CanonicalGroup(id=g, owner=g,
                             layer=DenseLayer(gs.weight.copy(),
                                              gs.bias.copy()))
              for g, gs in enumerate(ckpt.groups)]
    family = ModelFamily(ckpt.n, groups, input_dim, hidden, classes)
    momentum = [MomentumState(v_weight=gs.v_weight.copy(),
                              v_bias=gs.v_bias.copy())
                for gs in ckpt.groups]
    return family, momentum


def _layers_to_groups(layers: Sequence[DenseLayer],
                      momentum: Sequence[MomentumState]) -> list[GroupState]:
    """Reference layers (input first) stored head-first like family groups."""
    return [GroupState(weight=layer.weight, bias=layer.bias,
                       v_weight=state.v_weight, v_bias=state.v_bias)
            for layer, state in zip(reversed(layers), reversed(momentum))]


def _layers_from_checkpoint(ckpt: Checkpoint) -> tuple[list[DenseLayer],
                                                       list[MomentumState]]:
    layers = [DenseLayer(gs.weight.copy(), gs.bias.copy())
              for gs in reversed(ckpt.groups)]
    momentum = [MomentumState(gs.v_weight.copy(), gs.v_bias.copy())
                for gs in reversed(ckpt.groups)]
    return layers, momentum


def init_reference_layers(config: TrainConfig) -> list[DenseLayer]:
    dims = config.model_spec(config.n_hidden).dims
    return [init_layer(dims[i + 1], dims[i],
                       np.random.default_rng([config.init_seed, i]))
            for i in range(len(dims) - 1)]


def _run_loop(config: TrainConfig, train_ds: Dataset, test_ds: Dataset,
              step_fn: Callable[..., list[float]],
              views_fn: Callable[[], list],
              state_fn: Callable[[], list],
              start_epoch: int,
              log: Callable[[str], None] | None) -> TrainResult:
    out_dir = config.out_dir
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    n_models = len(views_fn())
    plan = BatchPlan(batch_size=config.batch_size, shuffle=config.shuffle,
                     seed=config.shuffle_seed)
    writer = _MetricsWriter(out_dir, n_models)
    history: list[MetricsRecord] = []
    best_epoch, best_accs = -1, [0.0] * n_models

    def checkpoint_at(epoch_done: int, name: str) -> Path | None:
        if out_dir is None:
            return None
        path = Path(out_dir) / name
        save_checkpoint(path, Checkpoint(
            n=config.n_hidden, groups=state_fn(), epoch=epoch_done,
            init_seed=config.init_seed, shuffle_seed=config.shuffle_seed,
            dropout_seed=config.dropout_seed, config_echo=config.echo()))
        return path

    try:
        for epoch in range(start_epoch, config.epochs):
            lr = lr_at(config.schedule, epoch)
            loss_sums = np.zeros(n_models)
            seen = 0
            for step, batch in enumerate(batches(train_ds, plan, epoch)):
                losses = step_fn(batch, epoch, step)
                loss_sums += np.asarray(losses) * batch[0].shape[0]
                seen += batch[0].shape[0]
            accs = [evaluate(view, test_ds) for view in views_fn()]
            record = MetricsRecord(epoch=epoch, lr=lr,
                                   losses=list(loss_sums / seen),
                                   accuracies=accs)
            history.append(record)
            writer.write(record)
            if accs[-1] > best_accs[-1]:
                best_epoch, best_accs = epoch, accs
                _write_best(out_dir, best_epoch, best_accs)
                checkpoint_at(epoch + 1, BEST_CHECKPOINT)
            if log is not None:
                losses_txt = " ".join(f"m{i}={v:.4f}"
                                      for i, v in enumerate(record.losses))
                accs_txt = " ".join(f"m{i}={v:.4f}"
                                    for i, v in enumerate(accs))
                log(f"epoch {epoch + 1}/{config.epochs} lr {lr:.6g} "
                    f"loss {losses_txt} acc {accs_txt} "
                    f"best@{best_epoch + 1} {best_accs[-1]:.4f}")
        _write_best(out_dir, best_epoch, best_accs)
        final_path = checkpoint_at(config.epochs, FINAL_CHECKPOINT)
    finally:
        writer.close()
    return TrainResult(history=history, best_epoch=best_epoch,
                       best_accuracies=best_accs,
                       final_accuracies=history[-1].accuracies if history
                       else [],
                       views=views_fn(), checkpoint_path=final_path)


def _load_datasets(config: TrainConfig, train_ds: Dataset | None,
                   test_ds: Dataset | None) -> tuple[Dataset, Dataset]:
    if train_ds is not None and test_ds is not None:
        return train_ds, test_ds
    if config.data_dir is None:
        raise ConfigError("no datasets given and no data_dir configured")
    return load_data_dir(config.data_dir)


def train(config: TrainConfig, train_ds: Dataset | None = None,
          test_ds: Dataset | None = None, resume_from: Path | None = None,
          log: Callable[[str], None] | None = None) -> TrainResult:
    """Train the full family; track the epoch with the best base-model test
    accuracy and snapshot every model's accuracy there.

    When resuming, the checkpoint's seeds replace the config's so the
    parameter trajectory continues exactly as the uninterrupted run.
    """
    if config.mode != "nsn":
        raise ConfigError(f"train() expects mode='nsn', got {config.mode!r}")
    train_ds, test_ds = _load_datasets(config, train_ds, test_ds)
    start_epoch = 0
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        if ckpt.n != config.n_hidden:
            raise ConsistencyError(f"checkpoint n={ckpt.n} does not match "
                                   f"config n_hidden={config.n_hidden}")
        config = replace(config, init_seed=ckpt.init_seed,
                         shuffle_seed=ckpt.shuffle_seed,
                         dropout_seed=ckpt.dropout_seed)
        family, momentum = family_from_checkpoint(ckpt)
        start_epoch = ckpt.epoch
    else:
        family = build_family(config.n_hidden, config.input_dim,
                              config.hidden_dim, config.classes,
                              config.init_seed)
        momentum = [MomentumState.zeros_like(g.layer) for g in family.groups]

    probe = test_ds.images[:2]

    def step_fn(batch, epoch, step):
        losses = train_step(family, momentum, batch, config, epoch, step)
        return losses

    def epoch_views():
        if config.debug_checks:
            _assert_family_invariants(family, probe)
        return family.views()

    return _run_loop(config, train_ds, test_ds, step_fn, epoch_views,
                     lambda: family_groups_state(family, momentum),
                     start_epoch, log)


def train_reference(config: TrainConfig, train_ds: Dataset | None = None,
                    test_ds: Dataset | None = None,
                    resume_from: Path | None = None,
                    log: Callable[[str], None] | None = None) -> TrainResult:
    """Train a single regularly-updated model (the baseline protocol)."""
    if config.mode != "reference":
        raise ConfigError(f"train_reference() expects mode='reference', "
                          f"got {config.mode!r}")
    train_ds, test_ds = _load_datasets(config, train_ds, test_ds)
    start_epoch = 0
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        if ckpt.n != config.n_hidden:
            raise ConsistencyError(f"checkpoint n={ckpt.n} does not match "
                                   f"config n_hidden={config.n_hidden}")
        config = replace(config, init_seed=ckpt.init_seed,
                         shuffle_seed=ckpt.shuffle_seed,
                         dropout_seed=ckpt.dropout_seed)
        layers, momentum = _layers_from_checkpoint(ckpt)
        start_epoch = ckpt.epoch
    else:
        layers = init_reference_layers(config)
        momentum = [MomentumState.zeros_like(layer) for layer in layers]

    def step_fn(batch, epoch, step):
        return reference_step(layers, momentum, batch, config, epoch, step)

    return _run_loop(config, train_ds, test_ds, step_fn,
                     lambda: [layers],
                     lambda: _layers_to_groups(layers, momentum),
                     start_epoch, log)
