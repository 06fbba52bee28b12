"""Python bindings for the secure and trusted channel protocol library."""

import json
import os

from ._core import (
    StcpError,
    bench,
    decode_type,
    derive_session_keys,
    extend_digest,
    hash,
    keyed_hash,
    resume,
)
from . import _core

__all__ = [
    "StcpError",
    "bench",
    "decode_type",
    "derive_session_keys",
    "extend_digest",
    "hash",
    "keyed_hash",
    "resume",
    "run_honest",
    "run_scenarios",
]


def run_scenarios(path, seed=None):
    """Run every scenario in a JSON file and return the reports as dicts."""
    return json.loads(_core._run_scenario_file(os.fspath(path), seed))


def run_honest(seed=1):
    """One honest AD1 -> AD2 handshake on the simulated network."""
    return json.loads(_core._run_honest(seed))
