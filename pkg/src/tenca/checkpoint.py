"""Binary checkpoints: model weights, optimizer moments, and the training recipe.

A checkpoint embeds the canonical text of its training config, so a resumed
run can refuse to continue under a different recipe, and stores every
parameter and moment plane as float64 little-endian — loading gives back
bit-identical training state.
"""

import struct
import zlib

import numpy as np

from . import config as config_mod
from .core import ModelParams
from .errors import (ChecksumError, ConfigError, DataError,
                     PayloadVersionError, TruncatedPayloadError)
from .training import OptimizerState, TrainConfig

CHECKPOINT_MAGIC = b"TNCK"
CHECKPOINT_VERSION = 1
_HEAD = struct.Struct("<4sHI")       # magic, version, config byte length
_EPOCH_SEED = struct.Struct("<IQ")   # epoch counter, rng seed
_OPT_STEP = struct.Struct("<Q")


def checkpoint_bytes(cfg: TrainConfig, params: ModelParams,
                     opt: OptimizerState, epoch: int) -> bytes:
    if params.channels != cfg.d or params.hidden != cfg.hidden:
        raise DataError(
            f"params ({params.channels} ch, {params.hidden} hidden) do not "
            f"match config ({cfg.d} ch, {cfg.hidden} hidden)")
    if opt.m.size != params.n_params or opt.v.size != params.n_params:
        raise DataError("optimizer moment size does not match parameter count")
    cfg_text = config_mod.train_config_text(cfg).encode()
    parts = [_HEAD.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(cfg_text)),
             cfg_text,
             _EPOCH_SEED.pack(epoch, cfg.seed)]
    for a in params.arrays():
        parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    parts.append(opt.m.astype("<f8").tobytes())
    parts.append(opt.v.astype("<f8").tobytes())
    parts.append(_OPT_STEP.pack(opt.step_count))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def parse_checkpoint(data: bytes):
    """Returns (TrainConfig, ModelParams, OptimizerState, epoch)."""
    if len(data) < _HEAD.size + 4:
        raise TruncatedPayloadError(
            f"checkpoint is {len(data)} bytes, shorter than any valid file")
    magic, version, cfg_len = _HEAD.unpack_from(data, 0)
    if magic != CHECKPOINT_MAGIC:
        raise DataError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise PayloadVersionError(
            f"checkpoint version {version} unsupported "
            f"(expected {CHECKPOINT_VERSION})")

    def crc_ok():
        stored_crc, = struct.unpack_from("<I", data, len(data) - 4)
        return zlib.crc32(data[:-4]) == stored_crc

    pos = _HEAD.size
    if len(data) < pos + cfg_len + _EPOCH_SEED.size:
        raise TruncatedPayloadError("checkpoint truncated inside the config echo")
    try:
        cfg = config_mod.parse_train_config(data[pos:pos + cfg_len].decode())
    except (ConfigError, UnicodeDecodeError):
        # distinguish a damaged file from a genuinely unreadable config
        if not crc_ok():
            raise ChecksumError("checkpoint CRC32 mismatch") from None
        raise
    pos += cfg_len
    epoch, seed = _EPOCH_SEED.unpack_from(data, pos)
    pos += _EPOCH_SEED.size

    template = ModelParams.init(cfg.d, cfg.hidden, seed=0)
    shapes = [a.shape for a in template.arrays()]
    n_params = template.n_params
    expected = (pos + n_params * 8 * 3 + _OPT_STEP.size + 4)
    if len(data) != expected:
        raise TruncatedPayloadError(
            f"checkpoint is {len(data)} bytes, header implies {expected}")
    if not crc_ok():
        raise ChecksumError("checkpoint CRC32 mismatch")
    if seed != cfg.seed:
        raise DataError(f"checkpoint seed field {seed} disagrees with config "
                        f"seed {cfg.seed}")

    def take(count):
        nonlocal pos
        out = np.frombuffer(data, dtype="<f8", count=count, offset=pos).copy()
        pos += count * 8
        return out

    planes = []
    for shape in shapes:
        n = int(np.prod(shape))
        planes.append(take(n).reshape(shape))
    params = ModelParams(*planes)
    opt = OptimizerState(m=take(n_params), v=take(n_params))
    opt.step_count, = _OPT_STEP.unpack_from(data, pos)
    return cfg, params, opt, epoch


def save_checkpoint(path, cfg: TrainConfig, params: ModelParams,
                    opt: OptimizerState, epoch: int) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(cfg, params, opt, epoch))


def load_checkpoint(path):
    """Returns (TrainConfig, ModelParams, OptimizerState, epoch)."""
    with open(path, "rb") as fh:
        return parse_checkpoint(fh.read())
