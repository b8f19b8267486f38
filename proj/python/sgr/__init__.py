# SPDX-License-Identifier: Apache-2.0
"""Sign-gesture recognition: keypoint preprocessing, CNN-BiLSTM models,
training and streaming inference."""

import json as _json

from . import _sgr
from ._sgr import Error, Model, f1, preprocess, read_sequence, round_tenth, run_cli, separability_oracle

__all__ = [
    "Error",
    "Model",
    "f1",
    "preprocess",
    "read_sequence",
    "round_tenth",
    "run_cli",
    "separability_oracle",
    "synth",
    "verify_arch",
    "summarize_latency",
    "cli",
]


def verify_arch():
    """Parameter and shape audit of the published layer table."""
    return _json.loads(_sgr.verify_arch_json())


def synth(out, classes=5, per_class=40, seed=0, jitter_scale=1.0, jobs=1):
    """Writes a synthetic corpus under `out` and returns its manifest."""
    return _json.loads(_sgr.synth(str(out), classes, per_class, seed, jitter_scale, jobs))


def summarize_latency(samples_ms):
    return _sgr.summarize_latency(list(samples_ms))


def cli(*args):
    """Runs an sgr subcommand; raises RuntimeError on a non-zero exit."""
    code, out, err = run_cli([str(a) for a in args])
    if code != 0:
        raise RuntimeError(f"sgr {args[0] if args else ''} exited {code}: {err.strip()}")
    return out
