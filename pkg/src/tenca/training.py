"""Sparse-time training: schedule building, Adam with clipping, epochs.

A case's acquisition times are mapped to rollout step indices; the rollout
is supervised only at those steps. Gradients accumulate over the cases of
a minibatch, are mean-reduced, clipped by global norm, and applied with
Adam. Everything is keyed off (seed, epoch, case) so runs — including
interrupted-and-resumed ones — are bit-reproducible.
"""

import time as _time
from dataclasses import dataclass, field, fields as _dc_fields

import numpy as np

from . import bptt, core, rng
from .errors import (ConfigError, ContractError, DataError, EpochAbortedError,
                     NumericError)


@dataclass
class TrainConfig:
    """Model, time-discretization, and optimizer settings."""

    d: int = 24
    hidden: int = 128
    fire_rate: float = 0.5
    init_style: str = "feature"
    delta_t_s: float = 8.0
    n_steps: int = 128
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip_norm: float = 1.0
    batch_size: int = 4
    epochs: int = 100
    seed: int = 0
    boundary_every: int = 16
    target_loss: float = 0.0     # stop early once epoch mean loss drops below

    def __post_init__(self):
        core.param_count(self.d, self.hidden)  # validates d, hidden
        if not 0.0 < self.fire_rate <= 1.0:
            raise ConfigError(f"fire_rate must be in (0, 1], got {self.fire_rate}")
        if self.init_style not in ("feature", "identity"):
            raise ConfigError(
                f"init_style must be 'feature' or 'identity', got {self.init_style!r}")
        if self.delta_t_s <= 0:
            raise ConfigError(f"delta_t_s must be > 0, got {self.delta_t_s}")
        if self.n_steps < 1:
            raise ConfigError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ConfigError("adam betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")
        if self.grad_clip_norm <= 0:
            raise ConfigError(f"grad_clip_norm must be > 0, got {self.grad_clip_norm}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.boundary_every < 1:
            raise ConfigError(f"boundary_every must be >= 1, got {self.boundary_every}")
        if self.target_loss < 0:
            raise ConfigError(f"target_loss must be >= 0, got {self.target_loss}")

    @property
    def horizon_s(self):
        return self.n_steps * self.delta_t_s

    def replace(self, **kw):
        vals = {f.name: getattr(self, f.name) for f in _dc_fields(self)}
        vals.update(kw)
        return TrainConfig(**vals)


@dataclass
class OptimizerState:
    """Adam first/second moments (flat, f64) and the update counter."""

    m: np.ndarray
    v: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, n_params: int):
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), step_count=0)

    def copy(self):
        return OptimizerState(self.m.copy(), self.v.copy(), self.step_count)


def time_to_step(time_s: float, delta_t_s: float) -> int:
    """Map an acquisition time to its rollout step: round-half-up, min 1."""
    if time_s <= 0:
        raise DataError(f"acquisition time must be > 0, got {time_s}")
    if delta_t_s <= 0:
        raise ConfigError(f"delta_t_s must be > 0, got {delta_t_s}")
    step = int(np.floor(time_s / delta_t_s + 0.5))
    return max(step, 1)


def build_schedule(times_s, delta_t_s: float, n_steps=None) -> dict:
    """Map each time to its conditioned step; {step: frame_index}.

    Two frames landing on one step cannot both supervise it — that is a
    data error, as is a time beyond the rollout horizon.
    """
    schedule = {}
    for idx, t in enumerate(times_s):
        step = time_to_step(t, delta_t_s)
        if step in schedule:
            other = times_s[schedule[step]]
            raise DataError(
                f"times {other:g} s and {t:g} s both map to step {step} "
                f"(delta_t = {delta_t_s:g} s)")
        if n_steps is not None and step > n_steps:
            raise DataError(
                f"time {t:g} s maps to step {step}, beyond the "
                f"{n_steps}-step horizon ({n_steps * delta_t_s:g} s)")
        schedule[step] = idx
    return schedule


def sparse_loss(snapshots, targets) -> float:
    """Mean over frames of per-frame pixel-mean squared error."""
    if len(snapshots) != len(targets):
        raise ContractError(
            f"{len(snapshots)} snapshots vs {len(targets)} targets")
    return bptt.sparse_loss(dict(enumerate(snapshots)), dict(enumerate(targets)))


def clip_gradients(flat_grads: np.ndarray, max_norm: float):
    """Scale to global L2 norm max_norm if above it; returns (grads', norm)."""
    if max_norm <= 0:
        raise ConfigError(f"max_norm must be > 0, got {max_norm}")
    norm = float(np.linalg.norm(flat_grads))
    if norm > max_norm:
        return flat_grads * (max_norm / norm), norm
    return flat_grads.copy(), norm


def adam_update(flat_params: np.ndarray, flat_grads: np.ndarray,
                opt: OptimizerState, config: TrainConfig):
    """One bias-corrected Adam step; returns (new_params, opt) with opt advanced."""
    if flat_grads.shape != flat_params.shape:
        raise ContractError(
            f"gradient shape {flat_grads.shape} vs params {flat_params.shape}")
    if not np.all(np.isfinite(flat_grads)):
        raise NumericError("non-finite gradients reached the optimizer")
    opt.step_count += 1
    t = opt.step_count
    opt.m = config.beta1 * opt.m + (1.0 - config.beta1) * flat_grads
    opt.v = config.beta2 * opt.v + (1.0 - config.beta2) * flat_grads ** 2
    m_hat = opt.m / (1.0 - config.beta1 ** t)
    v_hat = opt.v / (1.0 - config.beta2 ** t)
    return flat_params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps), opt


def case_horizon(case, config: TrainConfig, full_horizon: bool = False) -> int:
    """Rollout length for one case: its last conditioned step, or n_steps."""
    if full_horizon:
        return config.n_steps
    return max(time_to_step(t, config.delta_t_s) for t in case.times_s)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    grad_norm: float        # mean pre-clip global norm over optimizer steps
    seconds: float
    opt_steps: int = 0
    skipped_cases: int = 0


def _case_targets(case, schedule):
    return {step: case.frames[idx].astype(np.float64)
            for step, idx in schedule.items()}


def train_epoch(dataset, params: core.ModelParams, opt: OptimizerState,
                config: TrainConfig, epoch: int, full_horizon: bool = False,
                log=None):
    """One pass over the dataset; mutates params/opt in place, returns EpochStats.

    Cases are visited in a seed+epoch-keyed shuffle, grouped into
    minibatches; each batch's gradients are averaged over its cases,
    clipped, and applied. A case that goes numerically bad is skipped (and
    logged); the epoch aborts if more than 10% of cases fail.
    """
    if not dataset:
        raise ConfigError("dataset is empty")
    t_start = _time.perf_counter()
    order = rng.spawn_numpy_rng(config.seed, 0x5A0F, epoch).permutation(len(dataset))
    losses, norms = [], []
    skipped = 0
    opt_steps = 0
    batch_grads = None
    batch_count = 0

    def flush_batch():
        nonlocal batch_grads, batch_count, opt_steps
        if batch_count == 0:
            return
        mean_grads = batch_grads / batch_count
        clipped, norm = clip_gradients(mean_grads, config.grad_clip_norm)
        norms.append(norm)
        new_flat, _ = adam_update(params.get_flat(), clipped, opt, config)
        params.set_flat(new_flat)
        opt_steps += 1
        batch_grads = None
        batch_count = 0

    for pos, case_idx in enumerate(order):
        case = dataset[case_idx]
        schedule = build_schedule(case.times_s, config.delta_t_s, config.n_steps)
        horizon = case_horizon(case, config, full_horizon)
        grid0 = core.init_state(case.pre_contrast.astype(np.float64), config.d)
        targets = _case_targets(case, schedule)
        try:
            loss, grads = bptt.case_gradients(
                grid0, params, horizon, targets,
                (config.seed, epoch, case.case_id),
                fire_rate=config.fire_rate,
                boundary_every=config.boundary_every)
        except NumericError as exc:
            skipped += 1
            if log is not None:
                log(f"epoch {epoch}: case {case.case_id} skipped: {exc}")
            if skipped > 0.1 * len(dataset):
                raise EpochAbortedError(
                    f"epoch {epoch}: {skipped} of {len(dataset)} cases failed "
                    f"(> 10%); last failure: {exc}") from exc
            continue
        losses.append(loss)
        flat = grads.get_flat()
        batch_grads = flat if batch_grads is None else batch_grads + flat
        batch_count += 1
        if batch_count == config.batch_size:
            flush_batch()
    flush_batch()

    return EpochStats(
        epoch=epoch,
        mean_loss=float(np.mean(losses)) if losses else float("nan"),
        grad_norm=float(np.mean(norms)) if norms else float("nan"),
        seconds=_time.perf_counter() - t_start,
        opt_steps=opt_steps,
        skipped_cases=skipped,
    )


def validate_dataset_horizon(dataset, config: TrainConfig):
    """The rollout horizon must cover every acquisition time in the dataset."""
    worst = max(t for case in dataset for t in case.times_s)
    if worst > config.horizon_s:
        raise ConfigError(
            f"dataset has a frame at {worst:g} s but the horizon is "
            f"{config.horizon_s:g} s ({config.n_steps} steps x "
            f"{config.delta_t_s:g} s); raise n_steps")


def fit(dataset, config: TrainConfig, params=None, opt=None, start_epoch: int = 0,
        full_horizon: bool = False, on_epoch=None, log=None):
    """Train for config.epochs epochs (resumable); returns (params, opt, stats list).

    ``on_epoch(stats, params, opt)`` runs after every epoch — the CLI uses
    it for stats rows and periodic checkpoints. Training stops early once
    an epoch's mean loss drops below config.target_loss (if set > 0).
    """
    if not dataset:
        raise ConfigError("dataset is empty")
    validate_dataset_horizon(dataset, config)
    if params is None:
        params = core.ModelParams.init(config.d, config.hidden,
                                       seed=config.seed,
                                       style=config.init_style)
    if opt is None:
        opt = OptimizerState.zeros(params.n_params)
    all_stats = []
    for epoch in range(start_epoch, config.epochs):
        stats = train_epoch(dataset, params, opt, config, epoch,
                            full_horizon=full_horizon, log=log)
        all_stats.append(stats)
        if on_epoch is not None:
            on_epoch(stats, params, opt)
        if config.target_loss > 0 and stats.mean_loss < config.target_loss:
            if log is not None:
                log(f"epoch {epoch}: mean loss {stats.mean_loss:.3e} below "
                    f"target {config.target_loss:g}; stopping early")
            break
    return params, opt, all_stats
