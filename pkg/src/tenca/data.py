"""Training cases and the on-disk dataset format.

A dataset is one human-readable manifest plus one binary payload per case.
The payload holds the pre-contrast image and the post-contrast frames as
raw float32 little-endian planes behind a fixed header, with a trailing
CRC32; acquisition times live in the manifest. Round-trips are bit-exact.
"""

import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (ChecksumError, ConfigError, DataError, PayloadVersionError,
                     TruncatedPayloadError)

PAYLOAD_MAGIC = b"TNCA"
PAYLOAD_VERSION = 1
_HEADER = struct.Struct("<4sHHII")  # magic, version, k, h, w

MANIFEST_NAME = "manifest.txt"
MANIFEST_FORMAT = "tenca-dataset"
MANIFEST_VERSION = 1

MAX_FRAMES = 5
MAX_TIME_S = 1024.0


def _as_plane(img, name):
    a = np.ascontiguousarray(img, dtype=np.float32)
    if a.ndim != 2:
        raise DataError(f"{name} must be a 2-d image, got shape {a.shape}")
    return a


@dataclass
class TrainingCase:
    """One pre-contrast image plus k post-contrast frames at known times."""

    case_id: int
    pre_contrast: np.ndarray          # (h, w) float32 in [0, 1]
    frames: list                      # k arrays, (h, w) float32 in [0, 1]
    times_s: list                     # k acquisition times, strictly increasing

    def __post_init__(self):
        self.case_id = int(self.case_id)
        if self.case_id < 0:
            raise DataError(f"case_id must be non-negative, got {self.case_id}")
        self.pre_contrast = _as_plane(self.pre_contrast, "pre-contrast image")
        self.frames = [_as_plane(f, f"frame {i}") for i, f in enumerate(self.frames)]
        self.times_s = [float(t) for t in self.times_s]
        k = len(self.frames)
        if not 1 <= k <= MAX_FRAMES:
            raise DataError(f"case needs 1..{MAX_FRAMES} frames, got {k}")
        if len(self.times_s) != k:
            raise DataError(f"{k} frames but {len(self.times_s)} times")
        for t in self.times_s:
            if not 0.0 < t <= MAX_TIME_S:
                raise DataError(f"acquisition time {t} outside (0, {MAX_TIME_S:g}]")
        if any(b <= a for a, b in zip(self.times_s, self.times_s[1:])):
            raise DataError(f"times must be strictly increasing, got {self.times_s}")
        shape = self.pre_contrast.shape
        for i, f in enumerate(self.frames):
            if f.shape != shape:
                raise DataError(
                    f"frame {i} shape {f.shape} does not match pre-contrast {shape}")
        for name, img in [("pre-contrast", self.pre_contrast)] + [
                (f"frame {i}", f) for i, f in enumerate(self.frames)]:
            if not np.all(np.isfinite(img)):
                raise DataError(f"{name} contains non-finite values")
            if img.size and (img.min() < 0.0 or img.max() > 1.0):
                raise DataError(f"{name} has values outside [0, 1]")

    @property
    def k(self):
        return len(self.frames)

    @property
    def height(self):
        return self.pre_contrast.shape[0]

    @property
    def width(self):
        return self.pre_contrast.shape[1]

    def __eq__(self, other):
        if not isinstance(other, TrainingCase):
            return NotImplemented
        return (self.case_id == other.case_id
                and self.times_s == other.times_s
                and self.pre_contrast.tobytes() == other.pre_contrast.tobytes()
                and len(self.frames) == len(other.frames)
                and all(a.tobytes() == b.tobytes()
                        for a, b in zip(self.frames, other.frames)))


@dataclass
class ManifestEntry:
    case_id: int
    height: int
    width: int
    k: int
    times_s: list
    filename: str
    crc32: int


@dataclass
class DatasetManifest:
    version: int = MANIFEST_VERSION
    delta_t_hint: float = 8.0
    entries: list = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.filename in seen:
                raise DataError(f"duplicate payload filename {e.filename!r}")
            seen.add(e.filename)
            if any(b <= a for a, b in zip(e.times_s, e.times_s[1:])):
                raise DataError(
                    f"case {e.case_id}: manifest times must be strictly increasing")

    @property
    def n_cases(self):
        return len(self.entries)


def _format_number(v) -> str:
    """Compact decimal text that parses back to the exact same float."""
    f = float(v)
    if f == int(f) and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def payload_bytes(case: TrainingCase) -> bytes:
    """Serialize one case: header, f32-LE planes (pre first), CRC32."""
    parts = [_HEADER.pack(PAYLOAD_MAGIC, PAYLOAD_VERSION, case.k,
                          case.height, case.width)]
    parts.append(case.pre_contrast.astype("<f4").tobytes())
    for f in case.frames:
        parts.append(f.astype("<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def peek_payload_frame_count(data: bytes) -> int:
    """Frame count k from a payload header, without full validation."""
    if len(data) < _HEADER.size:
        raise TruncatedPayloadError(
            f"payload is {len(data)} bytes, shorter than its header")
    magic, version, k, _, _ = _HEADER.unpack_from(data, 0)
    if magic != PAYLOAD_MAGIC:
        raise DataError(f"bad payload magic {magic!r}")
    if version != PAYLOAD_VERSION:
        raise PayloadVersionError(
            f"payload version {version} unsupported (expected {PAYLOAD_VERSION})")
    return k


def parse_payload(data: bytes, case_id: int, times_s) -> TrainingCase:
    """Inverse of payload_bytes; times come from the manifest."""
    if len(data) < _HEADER.size + 4:
        raise TruncatedPayloadError(
            f"payload is {len(data)} bytes, shorter than any valid case")
    magic, version, k, h, w = _HEADER.unpack_from(data, 0)
    if magic != PAYLOAD_MAGIC:
        raise DataError(f"bad payload magic {magic!r}")
    if version != PAYLOAD_VERSION:
        raise PayloadVersionError(
            f"payload version {version} unsupported (expected {PAYLOAD_VERSION})")
    expected = _HEADER.size + (k + 1) * h * w * 4 + 4
    if len(data) != expected:
        raise TruncatedPayloadError(
            f"payload is {len(data)} bytes, header implies {expected}")
    stored_crc, = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != stored_crc:
        raise ChecksumError("payload CRC32 mismatch")
    planes = np.frombuffer(data[_HEADER.size:-4], dtype="<f4")
    planes = planes.reshape(k + 1, h, w)
    return TrainingCase(case_id=case_id, pre_contrast=planes[0],
                        frames=[planes[i + 1] for i in range(k)],
                        times_s=list(times_s))


def payload_filename(case_id: int) -> str:
    return f"case_{case_id:05d}.tnca"


def write_case(case: TrainingCase, out_dir) -> ManifestEntry:
    """Write one payload file; returns its manifest entry."""
    data = payload_bytes(case)
    name = payload_filename(case.case_id)
    with open(os.path.join(out_dir, name), "wb") as fh:
        fh.write(data)
    return ManifestEntry(case_id=case.case_id, height=case.height,
                         width=case.width, k=case.k,
                         times_s=list(case.times_s), filename=name,
                         crc32=zlib.crc32(data[:-4]))


def read_case(entry: ManifestEntry, base_dir) -> TrainingCase:
    """Read and verify the payload behind one manifest entry."""
    with open(os.path.join(base_dir, entry.filename), "rb") as fh:
        data = fh.read()
    case = parse_payload(data, entry.case_id, entry.times_s)
    if zlib.crc32(data[:-4]) != entry.crc32:
        raise ChecksumError(
            f"case {entry.case_id}: manifest checksum does not match payload")
    if (case.height, case.width, case.k) != (entry.height, entry.width, entry.k):
        raise DataError(
            f"case {entry.case_id}: payload header "
            f"({case.height}x{case.width}, k={case.k}) disagrees with manifest "
            f"({entry.height}x{entry.width}, k={entry.k})")
    return case


def manifest_text(manifest: DatasetManifest) -> str:
    lines = [
        f"format: {MANIFEST_FORMAT}",
        f"version: {manifest.version}",
        f"delta_t_hint: {_format_number(manifest.delta_t_hint)}",
        f"cases: {manifest.n_cases}",
        "",
    ]
    for e in manifest.entries:
        times = ",".join(_format_number(t) for t in e.times_s)
        lines.append(f"{e.case_id} {e.height} {e.width} {e.k} {times} "
                     f"{e.filename} {e.crc32:08x}")
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> DatasetManifest:
    head, sep, body = text.partition("\n\n")
    if not sep:
        raise DataError("manifest has no blank line after the header")
    fields = {}
    for line in head.splitlines():
        key, colon, value = line.partition(":")
        if not colon:
            raise DataError(f"bad manifest header line {line!r}")
        fields[key.strip()] = value.strip()
    if fields.get("format") != MANIFEST_FORMAT:
        raise DataError(f"not a dataset manifest (format={fields.get('format')!r})")
    version = int(fields.get("version", "-1"))
    if version != MANIFEST_VERSION:
        raise PayloadVersionError(
            f"manifest version {version} unsupported (expected {MANIFEST_VERSION})")
    declared = int(fields.get("cases", "-1"))
    entries = []
    for line in body.splitlines():
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 7:
            raise DataError(f"bad manifest case line {line!r}")
        cid, h, w, k, times, name, crc = parts
        times_s = [float(t) for t in times.split(",")]
        if int(k) != len(times_s):
            raise DataError(f"case {cid}: k={k} but {len(times_s)} times listed")
        entries.append(ManifestEntry(case_id=int(cid), height=int(h),
                                     width=int(w), k=int(k), times_s=times_s,
                                     filename=name, crc32=int(crc, 16)))
    if declared != len(entries):
        raise DataError(f"manifest declares {declared} cases, lists {len(entries)}")
    return DatasetManifest(version=version,
                           delta_t_hint=float(fields.get("delta_t_hint", "8")),
                           entries=entries)


def write_dataset(cases, out_dir, delta_t_hint: float = 8.0) -> str:
    """Write payloads and manifest; returns the manifest path."""
    if not cases:
        raise ConfigError("refusing to write an empty dataset")
    entries = [write_case(c, out_dir) for c in cases]
    manifest = DatasetManifest(delta_t_hint=delta_t_hint, entries=entries)
    path = os.path.join(out_dir, MANIFEST_NAME)
    with open(path, "w") as fh:
        fh.write(manifest_text(manifest))
    return path


def read_manifest(path) -> DatasetManifest:
    with open(path) as fh:
        return parse_manifest(fh.read())


def read_dataset(manifest_path):
    """Load a dataset; returns (DatasetManifest, list of TrainingCase).

    ``manifest_path`` may also be the dataset directory itself.
    """
    manifest_path = str(manifest_path)
    if os.path.isdir(manifest_path):
        manifest_path = os.path.join(manifest_path, MANIFEST_NAME)
    manifest = read_manifest(manifest_path)
    base_dir = os.path.dirname(manifest_path) or "."
    cases = [read_case(e, base_dir) for e in manifest.entries]
    return manifest, cases
