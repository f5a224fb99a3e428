"""Backpropagation through rollouts with segment recomputation.

The forward pass stores the full cell state only at segment boundaries
(every ``boundary_every`` steps). The backward sweep walks segments in
reverse, recomputes the intermediate states of one segment from its stored
boundary, and runs the step adjoints against those recomputed states. Fire
masks are never stored: they are pure functions of the rollout key and the
step index, so the recomputation replays the exact forward arithmetic and
the result is bit-identical to storing everything.

Loss is sparse in time: targets exist only at a few conditioned steps, and
their gradient enters the sweep through the visible channel at exactly
those steps.
"""

from dataclasses import dataclass

import numpy as np

from . import backends, core
from .errors import ConfigError, ContractError, NumericError

# Test hook: if set, called with the finished ParamGradients before they are
# returned. Lets the test suite corrupt gradients on purpose to prove the
# finite-difference checker catches a broken adjoint.
_debug_grad_hook = None


@dataclass
class ParamGradients:
    """Accumulated loss gradients, same shapes as ModelParams."""

    kernel_a: np.ndarray
    kernel_b: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    FIELDS = core.ModelParams.FIELDS

    @classmethod
    def zeros_like(cls, params: core.ModelParams):
        return cls(*(np.zeros_like(a) for a in params.arrays()))

    def arrays(self):
        return [getattr(self, f) for f in self.FIELDS]

    def get_flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def global_norm(self):
        return float(np.sqrt(sum(float(np.dot(a.ravel(), a.ravel()))
                                 for a in self.arrays())))


@dataclass
class RolloutTape:
    """What the forward pass keeps for the backward sweep."""

    n_steps: int
    boundary_every: int
    rng_key: tuple
    fire_rate: float
    deterministic_mask: bool
    boundaries: dict            # step -> full state after that many updates
    predictions: dict           # conditioned step -> visible-channel copy


def _mask_at(tape, step, h, w):
    """(mask, delta_scale) for one step.

    Deterministic mode fires every cell and scales the update by the fire
    rate; stochastic mode gates cells individually at full scale.
    """
    if tape.deterministic_mask:
        return np.ones((h, w), dtype=np.uint8), tape.fire_rate
    return core.sample_mask((*tape.rng_key, step), h, w, tape.fire_rate), 1.0


def forward_with_tape(grid0: core.CellGrid, params: core.ModelParams,
                      n_steps: int, snapshot_steps, rng_key,
                      fire_rate: float = 0.5,
                      boundary_every: int = 16,
                      deterministic_mask: bool = False) -> RolloutTape:
    """Run the rollout, keeping boundary states and conditioned-step outputs.

    ``snapshot_steps`` are the 1-based step indices where the loss will be
    evaluated. Boundary states are stored at step 0 and every
    ``boundary_every`` steps before the end.
    """
    params.validate_against(grid0)
    if n_steps < 1:
        raise ConfigError(f"n_steps must be >= 1, got {n_steps}")
    if boundary_every < 1:
        raise ConfigError(f"boundary_every must be >= 1, got {boundary_every}")
    snapshot_steps = sorted(set(int(s) for s in snapshot_steps))
    if not snapshot_steps:
        raise ConfigError("at least one conditioned step is required")
    for s in snapshot_steps:
        if not 1 <= s <= n_steps:
            raise ConfigError(f"conditioned step {s} outside [1, {n_steps}]")

    back = backends.active()
    h, w = grid0.height, grid0.width
    tape = RolloutTape(n_steps=n_steps, boundary_every=boundary_every,
                       rng_key=tuple(rng_key), fire_rate=fire_rate,
                       deterministic_mask=deterministic_mask,
                       boundaries={0: grid0.values.copy()}, predictions={})
    want = set(snapshot_steps)
    state = grid0.values
    for t in range(1, n_steps + 1):
        mask, scale = _mask_at(tape, t, h, w)
        state = back.step_forward(state, params.kernel_a, params.kernel_b,
                                  params.w1, params.b1, params.w2, params.b2,
                                  mask, scale)
        if not np.all(np.isfinite(state)):
            raise NumericError("non-finite state during rollout", step=t)
        if t % boundary_every == 0 and t < n_steps:
            tape.boundaries[t] = state
        if t in want:
            tape.predictions[t] = state[:, :, 0].copy()
    return tape


def sparse_loss(predictions: dict, targets: dict) -> float:
    """Mean over conditioned frames of the per-pixel squared error."""
    if not targets:
        raise ConfigError("no target frames")
    total = 0.0
    for step, target in targets.items():
        if step not in predictions:
            raise ContractError(f"no prediction recorded for conditioned step {step}")
        diff = predictions[step] - target
        total += float(np.mean(diff * diff))
    return total / len(targets)


def backward(tape: RolloutTape, params: core.ModelParams, targets: dict):
    """Backward sweep over the taped rollout; returns (loss, ParamGradients).

    ``targets`` maps conditioned step -> (h, w) target image. The loss is
    the mean over those frames of per-pixel MSE, so each frame injects
    2 * (prediction - target) / (h * w * n_frames) into the visible
    channel of the running state gradient when the sweep passes its step.
    """
    for step in targets:
        if step not in tape.predictions:
            raise ContractError(f"step {step} was not conditioned in the forward pass")
    loss = sparse_loss(tape.predictions, targets)

    back = backends.active()
    h, w, d = tape.boundaries[0].shape
    k = len(targets)
    inject = {}
    for step, target in targets.items():
        inject[step] = (2.0 / (h * w * k)) * (tape.predictions[step] - target)

    grads = ParamGradients.zeros_like(params)
    g_state = np.zeros((h, w, d), dtype=tape.boundaries[0].dtype)
    bsteps = sorted(tape.boundaries)
    for i in range(len(bsteps) - 1, -1, -1):
        t0 = bsteps[i]
        t1 = bsteps[i + 1] if i + 1 < len(bsteps) else tape.n_steps
        # Recompute the segment's intermediate states from the boundary.
        masks = [_mask_at(tape, t, h, w) for t in range(t0 + 1, t1 + 1)]
        seg_states = [tape.boundaries[t0]]
        state = seg_states[0]
        for j in range(t1 - 1 - t0):
            state = back.step_forward(state, params.kernel_a, params.kernel_b,
                                      params.w1, params.b1, params.w2, params.b2,
                                      masks[j][0], masks[j][1])
            seg_states.append(state)
        # Adjoint sweep over steps t1 .. t0+1.
        for t in range(t1, t0, -1):
            if t in inject:
                g_state[:, :, 0] += inject[t]
            mask, scale = masks[t - 1 - t0]
            g_state = back.step_backward(
                seg_states[t - 1 - t0], params.kernel_a, params.kernel_b,
                params.w1, params.b1, params.w2, params.b2,
                mask, scale, g_state,
                grads.kernel_a, grads.kernel_b, grads.w1, grads.b1,
                grads.w2, grads.b2)

    if _debug_grad_hook is not None:
        _debug_grad_hook(grads)
    return loss, grads


def case_gradients(grid0: core.CellGrid, params: core.ModelParams,
                   n_steps: int, targets: dict, rng_key,
                   fire_rate: float = 0.5, boundary_every: int = 16,
                   deterministic_mask: bool = False):
    """Forward + backward for one case; returns (loss, ParamGradients)."""
    tape = forward_with_tape(grid0, params, n_steps, sorted(targets), rng_key,
                             fire_rate=fire_rate, boundary_every=boundary_every,
                             deterministic_mask=deterministic_mask)
    return backward(tape, params, targets)


def finite_diff_check(grid0: core.CellGrid, params: core.ModelParams,
                      n_steps: int, targets: dict, rng_key,
                      fire_rate: float = 0.5, boundary_every: int = 4,
                      eps: float = 1e-5, param_indices=None,
                      deterministic_mask: bool = True):
    """Central-difference check of the analytic gradient.

    Perturbs each parameter (all of them, or just ``param_indices``) by
    +/- eps, re-evaluates the loss with identical fire masks, and compares
    the slope against the adjoint result. Masks are deterministic by
    default so the check never sits on a dead (never-fired) parameter.
    Returns (max_rel_err, analytic_flat, numeric_flat) where the relative
    error is |a - n| / (|a| + |n| + 1e-12), evaluated per checked index.
    """
    loss0, grads = case_gradients(grid0, params, n_steps, targets, rng_key,
                                  fire_rate=fire_rate,
                                  boundary_every=boundary_every,
                                  deterministic_mask=deterministic_mask)
    analytic = grads.get_flat()
    base = params.get_flat()
    numeric = np.full(base.size, np.nan)
    indices = range(base.size) if param_indices is None else list(param_indices)

    work = params.copy()

    def loss_at(vec):
        work.set_flat(vec)
        tape = forward_with_tape(grid0, work, n_steps, sorted(targets), rng_key,
                                 fire_rate=fire_rate, boundary_every=n_steps,
                                 deterministic_mask=deterministic_mask)
        return sparse_loss(tape.predictions, targets)

    probe = base.copy()
    for i in indices:
        probe[i] = base[i] + eps
        lp = loss_at(probe)
        probe[i] = base[i] - eps
        lm = loss_at(probe)
        probe[i] = base[i]
        numeric[i] = (lp - lm) / (2.0 * eps)

    checked = np.asarray(list(indices), dtype=np.intp)
    a = analytic[checked]
    n = numeric[checked]
    rel = np.abs(a - n) / (np.abs(a) + np.abs(n) + 1e-12)
    return float(rel.max()), analytic, numeric
