"""Shared test helpers.

The acceptance checks in test_acceptance.py each report one PASS/FAIL line.
Those lines are written straight to the real stdout so they stay visible
even while pytest captures output.
"""

import contextlib
import sys
import time

import numpy as np
import pytest

from tenca import core


_pytest_config = None


def pytest_configure(config):
    global _pytest_config
    _pytest_config = config


def emit(line):
    """Write one line to the real terminal, bypassing pytest capture."""
    capman = (_pytest_config.pluginmanager.getplugin("capturemanager")
              if _pytest_config is not None else None)
    if capman is not None:
        with capman.global_and_fixture_disabled():
            sys.stdout.write(line + "\n")
            sys.stdout.flush()
    else:
        sys.__stdout__.write(line + "\n")
        sys.__stdout__.flush()


@contextlib.contextmanager
def acceptance_check(number, name):
    """Wrap one acceptance check; always prints a single PASS/FAIL line."""
    info = {}
    start = time.perf_counter()
    try:
        yield info
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        detail = info.get("detail", "")
        reason = f"{type(exc).__name__}: {exc}"
        emit(f"[acceptance] check {number} ({name}): FAIL after {elapsed:.1f}s "
             f"{detail} -- {reason}")
        raise
    elapsed = time.perf_counter() - start
    detail = info.get("detail", "")
    emit(f"[acceptance] check {number} ({name}): PASS in {elapsed:.1f}s {detail}")


def tiny_params(seed=0, d=4, hidden=8, scale=0.5):
    """Small random parameter set for gradient and rollout tests."""
    return core.ModelParams.random(d, hidden, seed=seed, scale=scale)


@pytest.fixture
def rng_np():
    return np.random.default_rng(1234)
