# Copyright (C) 2026 The klflow Authors
# SPDX-License-Identifier: Apache-2.0
"""Python bindings for the klflow C++ core."""

from __future__ import annotations

import json
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import _core
from ._core import (
    ConfigError,
    DomainError,
    FormatError,
    InputError,
    NumericError,
    kl_geodesic,
    path_velocity,
    smooth_onehot,
)

__all__ = [
    "ConfigError",
    "DomainError",
    "FormatError",
    "InputError",
    "Model",
    "NumericError",
    "exact_ode_distribution",
    "exact_posterior",
    "kl_geodesic",
    "path_velocity",
    "sample_top_k",
    "smooth_onehot",
    "train",
]


def train(config: Mapping[str, Any], output_dir: str | None = None) -> dict:
    """Train from a run configuration; same document format as the CLI."""
    doc = dict(config)
    if output_dir is not None:
        doc["output_dir"] = str(output_dir)
    return json.loads(_core.train_run(json.dumps(doc)))


def sample_top_k(probs: Sequence[float], k: int, draws: int, seed: int = 0) -> np.ndarray:
    return np.asarray(_core.sample_top_k(np.asarray(probs, dtype=float), k, draws, seed), dtype=np.int64)


def _instance(vocab_size: int, seq_len: int, p1: Sequence[float], beta: float) -> str:
    return json.dumps({"V": vocab_size, "S": seq_len, "p1": list(p1), "beta": beta})


def exact_posterior(p1: Sequence[float], logits: np.ndarray, t: float, *, vocab_size: int,
                    seq_len: int = 1, beta: float = 0.01) -> np.ndarray:
    """Exact per-position posterior marginals for a tiny instance."""
    return _core.exact_posterior(_instance(vocab_size, seq_len, p1, beta), np.asarray(logits, float), t)


def exact_ode_distribution(p1: Sequence[float], *, vocab_size: int, seq_len: int = 1, beta: float = 0.01,
                           steps: int = 256, trajectories: int = 10000, seed: int = 0) -> np.ndarray:
    inst = _instance(vocab_size, seq_len, p1, beta)
    return np.asarray(_core.exact_ode_distribution(inst, steps, trajectories, seed))


class Model:
    """A trained checkpoint together with its tokenizer."""

    def __init__(self, path: str, *, with_corpus: bool = False) -> None:
        self._m = _core.Model(str(path), with_corpus)

    @property
    def vocab_size(self) -> int:
        return self._m.vocab_size

    @property
    def seq_len(self) -> int:
        return self._m.seq_len

    @property
    def run_config(self) -> dict:
        return json.loads(self._m.run_config())

    def generate(self, count: int = 1, *, clamp: Mapping[int, int] | None = None, threads: int = 1,
                 **inference: Any) -> list[list[int]]:
        """Token sequences; keyword arguments override the stored inference settings."""
        pairs = sorted((clamp or {}).items())
        return self._m.generate(count, json.dumps(inference), pairs, threads)

    def predict(self, logits: np.ndarray, t: float) -> np.ndarray:
        return self._m.predict(np.asarray(logits, dtype=float), t)

    def format(self, tokens: Sequence[int]) -> str:
        return self._m.format(list(tokens))

    def parse(self, line: str) -> list[int]:
        return self._m.parse(line)

    def evaluate(self, sequences: Iterable[Sequence[int]]) -> dict:
        return json.loads(self._m.evaluate([list(s) for s in sequences]))
