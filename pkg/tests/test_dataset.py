"""Case payloads, the dataset manifest, and their corruption behavior."""

import zlib

import numpy as np
import pytest

from tenca import data
from tenca.errors import (ChecksumError, DataError, PayloadVersionError,
                          TruncatedPayloadError)


def _case(case_id=0, h=8, w=6, k=3, seed=0):
    gen = np.random.default_rng(seed)
    times = [60.0, 120.0, 240.0, 480.0, 960.0][:k]
    return data.TrainingCase(
        case_id=case_id,
        pre_contrast=gen.uniform(0, 1, (h, w)).astype(np.float32),
        frames=[gen.uniform(0, 1, (h, w)).astype(np.float32) for _ in range(k)],
        times_s=times)


# ----------------------------------------------------------- TrainingCase

def test_case_validation():
    good = _case()
    assert good.k == 3 and good.height == 8 and good.width == 6

    with pytest.raises(DataError):  # no frames
        data.TrainingCase(0, good.pre_contrast, [], [])
    with pytest.raises(DataError):  # too many frames
        data.TrainingCase(0, good.pre_contrast, [good.frames[0]] * 6,
                          [10.0 * (i + 1) for i in range(6)])
    with pytest.raises(DataError):  # times not strictly increasing
        data.TrainingCase(0, good.pre_contrast, good.frames[:2], [60.0, 60.0])
    with pytest.raises(DataError):  # time beyond the supported horizon
        data.TrainingCase(0, good.pre_contrast, good.frames[:1], [1500.0])
    with pytest.raises(DataError):  # non-positive time
        data.TrainingCase(0, good.pre_contrast, good.frames[:1], [0.0])
    with pytest.raises(DataError):  # frame shape mismatch
        data.TrainingCase(0, good.pre_contrast,
                          [np.zeros((4, 4), np.float32)], [60.0])
    with pytest.raises(DataError):  # non-finite pixels
        bad = good.frames[0].copy()
        bad[0, 0] = np.nan
        data.TrainingCase(0, good.pre_contrast, [bad], [60.0])
    with pytest.raises(DataError):  # out of [0, 1]
        bad = good.frames[0].copy()
        bad[0, 0] = 1.5
        data.TrainingCase(0, good.pre_contrast, [bad], [60.0])


def test_case_equality_is_by_value():
    assert _case(seed=1) == _case(seed=1)
    assert _case(seed=1) != _case(seed=2)


# ---------------------------------------------------------------- payloads

def test_payload_round_trip():
    case = _case(case_id=7, k=5)
    blob = data.payload_bytes(case)
    back = data.parse_payload(blob, 7, case.times_s)
    assert back == case


def test_payload_header_layout():
    case = _case(case_id=1, h=8, w=6, k=3)
    blob = data.payload_bytes(case)
    assert blob[:4] == b"TNCA"
    # u16 version, u16 k, u32 h, u32 w, then (k+1) f32 planes + CRC32
    assert len(blob) == 16 + 4 * 8 * 6 * 4 + 4


def test_payload_bad_magic():
    blob = bytearray(data.payload_bytes(_case()))
    blob[0] = ord(b"X")
    with pytest.raises(DataError) as err:
        data.parse_payload(bytes(blob), 0, [60.0, 120.0, 240.0])
    assert not isinstance(err.value, (ChecksumError, TruncatedPayloadError))


def test_payload_future_version():
    blob = bytearray(data.payload_bytes(_case()))
    blob[4] = 99
    with pytest.raises(PayloadVersionError):
        data.parse_payload(bytes(blob), 0, [60.0, 120.0, 240.0])


def test_payload_truncated():
    blob = data.payload_bytes(_case())
    with pytest.raises(TruncatedPayloadError):
        data.parse_payload(blob[:-10], 0, [60.0, 120.0, 240.0])
    with pytest.raises(TruncatedPayloadError):
        data.parse_payload(blob[:6], 0, [60.0, 120.0, 240.0])


def test_payload_flipped_bit():
    blob = bytearray(data.payload_bytes(_case()))
    blob[30] ^= 0x40
    with pytest.raises(ChecksumError):
        data.parse_payload(bytes(blob), 0, [60.0, 120.0, 240.0])


def test_payload_deterministic():
    assert data.payload_bytes(_case(seed=3)) == data.payload_bytes(_case(seed=3))


# ---------------------------------------------------------------- manifests

def test_manifest_round_trip():
    entries = [
        data.ManifestEntry(0, 8, 6, 2, [60.0, 120.0], "case_00000.tnca", 0xDEAD),
        data.ManifestEntry(1, 8, 6, 5, [60.0, 120.0, 240.0, 480.0, 960.0],
                           "case_00001.tnca", 0xBEEF),
    ]
    manifest = data.DatasetManifest(delta_t_hint=8.0, entries=entries)
    text = data.manifest_text(manifest)
    back = data.parse_manifest(text)
    assert back.delta_t_hint == 8.0
    assert len(back.entries) == 2
    for a, b in zip(back.entries, entries):
        assert (a.case_id, a.height, a.width, a.k) == (b.case_id, b.height,
                                                       b.width, b.k)
        assert a.times_s == b.times_s
        assert a.filename == b.filename and a.crc32 == b.crc32
    # serialization is a fixed point
    assert data.manifest_text(back) == text


def test_manifest_fractional_times_survive():
    entries = [data.ManifestEntry(0, 4, 4, 2, [60.5, 120.25], "case_00000.tnca", 1)]
    text = data.manifest_text(data.DatasetManifest(entries=entries))
    back = data.parse_manifest(text)
    assert back.entries[0].times_s == [60.5, 120.25]


def test_manifest_rejects_wrong_count():
    entries = [data.ManifestEntry(0, 4, 4, 1, [60.0], "case_00000.tnca", 1)]
    text = data.manifest_text(data.DatasetManifest(entries=entries))
    text = text.replace("cases: 1", "cases: 2")
    with pytest.raises(DataError):
        data.parse_manifest(text)


def test_manifest_rejects_malformed_lines():
    with pytest.raises(DataError):
        data.parse_manifest("no header here")
    good = data.manifest_text(data.DatasetManifest(entries=[
        data.ManifestEntry(0, 4, 4, 1, [60.0], "case_00000.tnca", 1)]))
    with pytest.raises(DataError):
        data.parse_manifest(good.replace("format: tenca-dataset", "format: other"))
    with pytest.raises(PayloadVersionError):
        data.parse_manifest(good.replace("version: 1", "version: 9"))
    # truncated case line
    lines = good.strip().splitlines()
    lines[-1] = " ".join(lines[-1].split()[:5])
    with pytest.raises(DataError):
        data.parse_manifest("\n".join(lines) + "\n")


def test_manifest_duplicate_filenames_rejected():
    e = data.ManifestEntry(0, 4, 4, 1, [60.0], "case_00000.tnca", 1)
    e2 = data.ManifestEntry(1, 4, 4, 1, [80.0], "case_00000.tnca", 2)
    with pytest.raises(DataError):
        data.DatasetManifest(entries=[e, e2])


def test_manifest_times_must_increase():
    with pytest.raises(DataError):
        data.DatasetManifest(entries=[
            data.ManifestEntry(0, 4, 4, 2, [120.0, 60.0], "case_00000.tnca", 1)])


# ------------------------------------------------------------ full datasets

def check_dataset_round_trip(tmp_path):
    """Write + read returns value-identical cases; bytes are deterministic."""
    cases = [_case(case_id=i, k=2 + (i % 3), seed=i) for i in range(4)]
    d1 = tmp_path / "d1"
    d2 = tmp_path / "d2"
    d1.mkdir()
    d2.mkdir()
    p1 = data.write_dataset(cases, str(d1), delta_t_hint=8.0)
    data.write_dataset(cases, str(d2), delta_t_hint=8.0)

    for name in sorted(f.name for f in d1.iterdir()):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()

    manifest, back = data.read_dataset(p1)
    assert manifest.n_cases == 4
    assert back == cases
    # reading by directory works the same
    _, back2 = data.read_dataset(str(d1))
    assert back2 == cases


def test_dataset_round_trip(tmp_path):
    check_dataset_round_trip(tmp_path)


def test_dataset_detects_payload_corruption(tmp_path):
    cases = [_case(case_id=0, seed=0)]
    data.write_dataset(cases, str(tmp_path))
    target = tmp_path / data.payload_filename(0)
    blob = bytearray(target.read_bytes())
    blob[40] ^= 0x01
    target.write_bytes(bytes(blob))
    with pytest.raises(ChecksumError):
        data.read_dataset(str(tmp_path))


def test_dataset_detects_swapped_payloads(tmp_path):
    # two payload files exchanged behind the manifest's back
    cases = [_case(case_id=0, seed=0), _case(case_id=1, seed=1)]
    data.write_dataset(cases, str(tmp_path))
    a = tmp_path / data.payload_filename(0)
    b = tmp_path / data.payload_filename(1)
    blob_a, blob_b = a.read_bytes(), b.read_bytes()
    a.write_bytes(blob_b)
    b.write_bytes(blob_a)
    with pytest.raises(ChecksumError):
        data.read_dataset(str(tmp_path))


def test_dataset_missing_payload(tmp_path):
    cases = [_case(case_id=0, seed=0)]
    data.write_dataset(cases, str(tmp_path))
    (tmp_path / data.payload_filename(0)).unlink()
    with pytest.raises(FileNotFoundError):
        data.read_dataset(str(tmp_path))


def test_write_dataset_refuses_empty(tmp_path):
    from tenca.errors import ConfigError
    with pytest.raises(ConfigError):
        data.write_dataset([], str(tmp_path))


def test_crc_matches_zlib_reference():
    case = _case(seed=9)
    blob = data.payload_bytes(case)
    stored = int.from_bytes(blob[-4:], "little")
    assert stored == zlib.crc32(blob[:-4])
