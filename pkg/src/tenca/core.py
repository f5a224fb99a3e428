"""Cell-grid state, model parameters, and the perceive/update transition.

The global state is an (h, w, d) grid of cells: channel 0 is the visible
image being modeled, channels 1..d-1 carry hidden cell-communication
memory. One transition step perceives each cell's 3x3 neighborhood through
two learnable depthwise kernels (plus the cell's own state), pushes the
perception vector through a two-layer MLP, and adds the masked result back
onto the state.
"""

from dataclasses import dataclass

import numpy as np

from . import backends, rng
from .errors import ConfigError, ContractError, DataError, NumericError

PERCEPTION_PATHWAYS = 3  # identity + two learned kernels


def param_count(d: int, hidden: int) -> int:
    """Total scalar parameter count for channel size d and hidden width ``hidden``.

    Two 3x3 depthwise kernels, a (3d -> hidden) layer with bias, and a
    (hidden -> d) layer with bias.
    """
    if d < 2:
        raise ConfigError(f"channel count must be >= 2, got {d}")
    if hidden < 1:
        raise ConfigError(f"hidden size must be >= 1, got {hidden}")
    return 2 * 9 * d + (3 * d * hidden + hidden) + (hidden * d + d)


@dataclass
class CellGrid:
    """NCA state: (h, w, d) float array, channel 0 visible."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ConfigError(f"state must be (h, w, d), got shape {self.values.shape}")
        if self.values.shape[2] < 2:
            raise ConfigError("state needs at least 1 visible + 1 hidden channel")

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def channels(self):
        return self.values.shape[2]

    @property
    def visible(self):
        return self.values[:, :, 0]

    def copy(self):
        return CellGrid(self.values.copy())


@dataclass
class ModelParams:
    """Two depthwise perception kernels plus the two dense update layers."""

    kernel_a: np.ndarray  # (3, 3, d)
    kernel_b: np.ndarray  # (3, 3, d)
    w1: np.ndarray        # (3d, hidden)
    b1: np.ndarray        # (hidden,)
    w2: np.ndarray        # (hidden, d)
    b2: np.ndarray        # (d,)

    FIELDS = ("kernel_a", "kernel_b", "w1", "b1", "w2", "b2")

    @property
    def channels(self):
        return self.kernel_a.shape[2]

    @property
    def hidden(self):
        return self.w1.shape[1]

    @property
    def dtype(self):
        return self.w1.dtype

    def arrays(self):
        return [getattr(self, f) for f in self.FIELDS]

    @property
    def n_params(self):
        return sum(a.size for a in self.arrays())

    def get_flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def set_flat(self, vec):
        if vec.size != self.n_params:
            raise ContractError(f"expected {self.n_params} values, got {vec.size}")
        pos = 0
        for a in self.arrays():
            a.ravel()[:] = vec[pos:pos + a.size]
            pos += a.size

    def copy(self):
        return ModelParams(*(a.copy() for a in self.arrays()))

    def astype(self, dtype):
        return ModelParams(*(np.ascontiguousarray(a, dtype=dtype) for a in self.arrays()))

    @classmethod
    def init(cls, d: int, hidden: int, seed: int = 0, dtype=np.float64,
             style: str = "feature"):
        """Training initialization.

        ``"feature"`` (default): perception kernels start as horizontal and
        vertical gradient stencils (still learnable), w1 is drawn wide and
        b1 slightly positive so the first layer responds to typical image
        intensities (well below 1) instead of sitting in the ReLU dead
        zone, and w2 is small but nonzero so hidden features influence the
        output from the first optimizer step. On slow-enhancement
        sequences this escapes the flat region that traps the identity
        start for thousands of steps.

        ``"identity"``: w2 and b2 start at zero so the untrained model is
        the identity map over time; kernels and w1 are uniform in [-s, s]
        with s = 1/sqrt(fan_in).
        """
        param_count(d, hidden)  # validates d, hidden
        gen = rng.spawn_numpy_rng(seed, 0x1B17)
        if style == "feature":
            gx = np.array([[-1.0, 0.0, 1.0],
                           [-2.0, 0.0, 2.0],
                           [-1.0, 0.0, 1.0]]) / 8.0
            return cls(
                kernel_a=np.repeat(gx[:, :, None], d, axis=2).astype(dtype),
                kernel_b=np.repeat(gx.T[:, :, None], d, axis=2).astype(dtype),
                w1=gen.uniform(-0.5, 0.5, (3 * d, hidden)).astype(dtype),
                b1=np.full(hidden, 0.05, dtype=dtype),
                w2=gen.uniform(-0.1 / np.sqrt(hidden), 0.1 / np.sqrt(hidden),
                               (hidden, d)).astype(dtype),
                b2=np.zeros(d, dtype=dtype),
            )
        if style == "identity":
            s_k = 1.0 / np.sqrt(9.0)
            s_w1 = 1.0 / np.sqrt(3.0 * d)
            return cls(
                kernel_a=gen.uniform(-s_k, s_k, (3, 3, d)).astype(dtype),
                kernel_b=gen.uniform(-s_k, s_k, (3, 3, d)).astype(dtype),
                w1=gen.uniform(-s_w1, s_w1, (3 * d, hidden)).astype(dtype),
                b1=np.zeros(hidden, dtype=dtype),
                w2=np.zeros((hidden, d), dtype=dtype),
                b2=np.zeros(d, dtype=dtype),
            )
        raise ConfigError(
            f"unknown init style {style!r} (expected 'feature' or 'identity')")

    @classmethod
    def random(cls, d: int, hidden: int, seed: int = 0, scale: float = 0.5,
               dtype=np.float64):
        """All fields random; for gradient checks and property tests only."""
        param_count(d, hidden)
        gen = rng.spawn_numpy_rng(seed, 0xA11F)
        s_k = scale / np.sqrt(9.0)
        s_w1 = scale / np.sqrt(3.0 * d)
        s_w2 = scale / np.sqrt(hidden)
        return cls(
            kernel_a=gen.uniform(-s_k, s_k, (3, 3, d)).astype(dtype),
            kernel_b=gen.uniform(-s_k, s_k, (3, 3, d)).astype(dtype),
            w1=gen.uniform(-s_w1, s_w1, (3 * d, hidden)).astype(dtype),
            b1=gen.uniform(-0.1, 0.1, hidden).astype(dtype),
            w2=gen.uniform(-s_w2, s_w2, (hidden, d)).astype(dtype),
            b2=gen.uniform(-0.05, 0.05, d).astype(dtype),
        )

    def validate_against(self, grid: CellGrid):
        if self.channels != grid.channels:
            raise ConfigError(
                f"params have {self.channels} channels, grid has {grid.channels}")
        if self.w1.shape[0] != PERCEPTION_PATHWAYS * self.channels:
            raise ConfigError("w1 input dimension must be 3 * channels")


def init_state(pre_contrast: np.ndarray, d: int) -> CellGrid:
    """Seed a grid from a pre-contrast image: channel 0 = image, hidden zeros."""
    if d < 2:
        raise ConfigError(f"channel count must be >= 2, got {d}")
    img = np.asarray(pre_contrast, dtype=np.float64)
    if img.ndim != 2:
        raise DataError(f"expected an (h, w) image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise DataError("pre-contrast image contains non-finite values")
    h, w = img.shape
    values = np.zeros((h, w, d), dtype=np.float64)
    values[:, :, 0] = img
    return CellGrid(values)


def sample_mask(rng_key, h: int, w: int, fire_rate: float) -> np.ndarray:
    """Per-cell Bernoulli fire mask, (h, w) uint8.

    rng_key is the (seed, epoch, case, step) tuple; the bit for cell i is a
    pure function of (rng_key, i), so identical keys give identical masks.
    """
    if not 0.0 <= fire_rate <= 1.0:
        raise ConfigError(f"fire_rate must be in [0, 1], got {fire_rate}")
    key = rng.derive_key(*rng_key)
    u = rng.unit_uniforms(key, h * w)
    return (u < fire_rate).astype(np.uint8).reshape(h, w)


def perceive(grid: CellGrid, params: ModelParams) -> np.ndarray:
    """Perception field (h, w, 3d): [own state | conv_a | conv_b].

    The convolutions use replicate (edge-clamp) padding: border cells see
    their own edge values instead of wrapped or zero neighbors.
    """
    params.validate_against(grid)
    return backends.active().perceive(grid.values, params.kernel_a, params.kernel_b)


def update_step(grid: CellGrid, params: ModelParams, mask: np.ndarray,
                delta_scale: float = 1.0, step_index=None) -> CellGrid:
    """One residual transition: grid + MLP(perception), gated per cell by mask."""
    params.validate_against(grid)
    if mask.shape != (grid.height, grid.width):
        raise ConfigError(
            f"mask shape {mask.shape} does not match grid {(grid.height, grid.width)}")
    out = backends.active().step_forward(
        grid.values, params.kernel_a, params.kernel_b,
        params.w1, params.b1, params.w2, params.b2,
        np.ascontiguousarray(mask, dtype=np.uint8), delta_scale)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite state after update", step=step_index)
    return CellGrid(out)


def rollout(grid0: CellGrid, params: ModelParams, n_steps: int, snapshot_steps,
            rng_key, fire_rate: float = 0.5, deterministic_mask: bool = False):
    """Apply n_steps updates; return (visible snapshots, final grid).

    snapshot_steps are 1-based step indices; snapshots[j] is a copy of the
    visible channel immediately after that many updates. rng_key is the
    (seed, epoch, case) triple; the per-step mask key appends the step
    index. With deterministic_mask=True every cell fires and deltas are
    scaled by fire_rate (a debugging mode; the stochastic mask is the
    normal inference path).
    """
    snapshot_steps = list(snapshot_steps)
    for s in snapshot_steps:
        if not 1 <= s <= n_steps:
            raise ConfigError(f"snapshot step {s} outside [1, {n_steps}]")
    want = {}
    for j, s in enumerate(snapshot_steps):
        want.setdefault(s, []).append(j)
    snapshots = [None] * len(snapshot_steps)
    grid = grid0.copy()
    h, w = grid.height, grid.width
    ones = np.ones((h, w), dtype=np.uint8)
    for t in range(1, n_steps + 1):
        if deterministic_mask:
            mask, scale = ones, fire_rate
        else:
            mask, scale = sample_mask((*rng_key, t), h, w, fire_rate), 1.0
        grid = update_step(grid, params, mask, delta_scale=scale, step_index=t)
        if t in want:
            for j in want[t]:
                snapshots[j] = grid.visible.copy()
    return snapshots, grid
