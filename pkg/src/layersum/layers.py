"""The three summation layers plus the fixed-k mode, and the run driver.

Every value is a sum of ``k`` independent draws from Uniform{1..m}. The
layers differ only in where ``k`` comes from:

* fixed   -- one constant ``k`` for the whole run;
* layer 1 -- progressive: set ``s`` sums ``ceil(s * T / S)`` draws, which is
  ``s`` itself when ``S == T``;
* layer 2 -- ``K ~ Uniform{1..T}`` drawn once per set, shared by its values;
* layer 3 -- ``K_j ~ Uniform{1..T}`` drawn afresh for every value.

Set ``s`` always draws from stream ``(seed, s)``. Within a set, draws are
consumed in loop order: layer 2's ``K`` first, layer 3's ``K_j`` immediately
before value ``j``'s additions.
"""

from __future__ import annotations

import enum
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numba as nb
import numpy as np

from .rng import RandomStream, bounded, make_stream, sum_uniforms

__all__ = [
    "ConfigError",
    "Layer",
    "RunConfig",
    "SetResult",
    "RunResult",
    "PROFILES",
    "sum_of_uniforms",
    "layer1_summands",
    "generate_fixed_set",
    "generate_layer1_set",
    "generate_layer2_set",
    "generate_layer3_set",
    "generate_set",
    "generate_run",
]

U64_LIMIT = (1 << 63) - 1
U32_LIMIT = (1 << 32) - 1


class ConfigError(ValueError):
    """Invalid run configuration; ``field`` names the offending parameter."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class Layer(str, enum.Enum):
    FIXED = "fixed"
    ONE = "1"
    TWO = "2"
    THREE = "3"


# Named parameter presets for total_sets/total_additions/total_numbers.
PROFILES = {
    "paper": {"total_sets": 10000, "total_additions": 10000, "total_numbers": 1000},
    "desk": {"total_sets": 200, "total_additions": 10000, "total_numbers": 1000},
}


@dataclass(frozen=True)
class RunConfig:
    layer: Layer
    seed: int
    max_number: int = 100
    total_numbers: int = 1000
    total_sets: int = 10000
    total_additions: int = 10000
    k: Optional[int] = None
    workers: int = 1
    # output options, consumed by the CLI
    out: Optional[str] = None
    format: str = "json"
    export: tuple = ()
    bins: int = 50
    integer_bins: bool = False
    hist_sets: Optional[tuple] = None
    boxplot_sets: str = "twelve"
    dump_raw: Optional[str] = None
    table02: bool = False

    def __post_init__(self):
        if not isinstance(self.layer, Layer):
            try:
                object.__setattr__(self, "layer", Layer(str(self.layer)))
            except ValueError:
                raise ConfigError("layer", f"unknown layer {self.layer!r}") from None
        object.__setattr__(self, "export", tuple(self.export))
        if self.hist_sets is not None:
            object.__setattr__(self, "hist_sets", tuple(self.hist_sets))
        self.validate()

    def validate(self) -> None:
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(name, msg)

        need(0 <= self.seed < 1 << 64, "seed", "must be a 64-bit unsigned integer")
        need(self.max_number >= 2, "max_number", "must be >= 2")
        need(1 <= self.total_numbers <= U32_LIMIT, "numbers", "must be in [1, 2**32 - 1]")
        need(self.total_sets >= 1, "sets", "must be >= 1")
        need(1 <= self.total_additions <= U32_LIMIT, "additions", "must be in [1, 2**32 - 1]")
        need(self.workers >= 1, "workers", "must be >= 1")
        need(self.total_sets <= U32_LIMIT, "sets", "must be <= 2**32 - 1")
        if self.layer is Layer.FIXED:
            need(self.k is not None, "k", "fixed layer requires k")
            need(1 <= self.k <= U32_LIMIT, "k", "must be in [1, 2**32 - 1]")
            need(self.k * self.max_number <= U64_LIMIT, "k",
                 "k * max_number overflows a 64-bit sum")
        else:
            need(self.total_additions * self.max_number <= U64_LIMIT, "additions",
                 "additions * max_number overflows a 64-bit sum")
        need(self.format in ("json", "csv"), "format", "must be json or csv")
        for kind in self.export:
            need(kind in ("histogram", "boxplot", "stddev_percent"), "export",
                 f"unknown series {kind!r}")
        need(self.bins >= 1, "bins", "must be >= 1")
        if self.hist_sets is not None:
            for s in self.hist_sets:
                need(1 <= s <= self.total_sets, "hist_sets", f"set {s} outside [1, {self.total_sets}]")
        need(self.boxplot_sets in ("twelve", "all"), "boxplot_sets", "must be twelve or all")
        need(self.dump_raw in (None, "bin", "csv"), "dump_raw", "must be bin or csv")

    def max_summands(self) -> int:
        return self.k if self.layer is Layer.FIXED else self.total_additions


@dataclass
class SetResult:
    set_index: int
    values: np.ndarray
    realized_k: Optional[int] = None
    per_value_k: Optional[np.ndarray] = None
    draws: int = 0

    def summand_counts(self) -> np.ndarray:
        if self.per_value_k is not None:
            return self.per_value_k
        return np.full(self.values.shape[0], self.realized_k, dtype=np.int64)


# --------------------------------------------------------------------------
# numba kernels


@nb.njit(nogil=True, cache=True)
def _fixed_values(s, k, m, out):
    for j in range(out.shape[0]):
        out[j] = sum_uniforms(s, k, m)


@nb.njit(nogil=True, cache=True)
def _layer2_values(s, T, m, out):
    K = bounded(s, np.uint64(T)) + np.uint64(1)
    for j in range(out.shape[0]):
        out[j] = sum_uniforms(s, K, m)
    return K


@nb.njit(nogil=True, cache=True)
def _layer3_values(s, T, m, out, ks):
    rT = np.uint64(T)
    for j in range(out.shape[0]):
        K = bounded(s, rT) + np.uint64(1)
        ks[j] = K
        out[j] = sum_uniforms(s, K, m)


@nb.njit(nogil=True, cache=True)
def _sum_one(s, k, m):
    return sum_uniforms(s, k, m)


# --------------------------------------------------------------------------


def sum_of_uniforms(stream: RandomStream, k: int, m: int) -> int:
    """Sum of ``k`` draws from Uniform{1..m}, consuming exactly ``k`` draws."""
    if k < 1 or m < 2:
        raise ValueError("need k >= 1 and m >= 2")
    if k * m > U64_LIMIT:
        raise ConfigError("k", "k * m overflows a 64-bit sum")
    stream.draws += k
    return int(_sum_one(stream.state, np.uint64(k), np.uint64(m)))


def layer1_summands(set_index: int, cfg: RunConfig) -> int:
    """Progressive summand count ``ceil(set_index * T / S)``."""
    S, T = cfg.total_sets, cfg.total_additions
    if not 1 <= set_index <= S:
        raise ValueError(f"set_index {set_index} outside [1, {S}]")
    return -(-set_index * T // S)


def _check_index(cfg: RunConfig, set_index: int) -> None:
    if not 1 <= set_index <= cfg.total_sets:
        raise ValueError(f"set_index {set_index} outside [1, {cfg.total_sets}]")


def _fixed_k_set(cfg: RunConfig, set_index: int, k: int) -> SetResult:
    stream = make_stream(cfg.seed, set_index)
    out = np.empty(cfg.total_numbers, dtype=np.uint64)
    _fixed_values(stream.state, np.uint64(k), np.uint64(cfg.max_number), out)
    stream.draws += cfg.total_numbers * k
    return SetResult(set_index, out, realized_k=k, draws=stream.draws)


def generate_fixed_set(cfg: RunConfig, set_index: int) -> SetResult:
    _check_index(cfg, set_index)
    return _fixed_k_set(cfg, set_index, cfg.k)


def generate_layer1_set(cfg: RunConfig, set_index: int) -> SetResult:
    _check_index(cfg, set_index)
    return _fixed_k_set(cfg, set_index, layer1_summands(set_index, cfg))


def generate_layer2_set(cfg: RunConfig, set_index: int) -> SetResult:
    _check_index(cfg, set_index)
    stream = make_stream(cfg.seed, set_index)
    out = np.empty(cfg.total_numbers, dtype=np.uint64)
    K = int(_layer2_values(stream.state, np.uint64(cfg.total_additions),
                           np.uint64(cfg.max_number), out))
    stream.draws += 1 + cfg.total_numbers * K
    return SetResult(set_index, out, realized_k=K, draws=stream.draws)


def generate_layer3_set(cfg: RunConfig, set_index: int) -> SetResult:
    _check_index(cfg, set_index)
    stream = make_stream(cfg.seed, set_index)
    out = np.empty(cfg.total_numbers, dtype=np.uint64)
    ks = np.empty(cfg.total_numbers, dtype=np.uint64)
    _layer3_values(stream.state, np.uint64(cfg.total_additions),
                   np.uint64(cfg.max_number), out, ks)
    per_value_k = ks.astype(np.int64)
    stream.draws += cfg.total_numbers + int(per_value_k.sum())
    return SetResult(set_index, out, per_value_k=per_value_k, draws=stream.draws)


_GENERATORS = {
    Layer.FIXED: generate_fixed_set,
    Layer.ONE: generate_layer1_set,
    Layer.TWO: generate_layer2_set,
    Layer.THREE: generate_layer3_set,
}


def generate_set(cfg: RunConfig, set_index: int) -> SetResult:
    return _GENERATORS[cfg.layer](cfg, set_index)


# --------------------------------------------------------------------------
# run driver


@dataclass
class RunResult:
    summaries: list
    pooled: object  # analysis.Moments
    draws: int = 0
    set_count: int = field(default=0)


def _ordered_map(fn: Callable, items, workers: int) -> Iterator:
    """Like ``map`` but on a thread pool with a bounded in-flight window.

    Results come back in input order regardless of completion order.
    """
    if workers <= 1:
        for item in items:
            yield fn(item)
        return
    window = 4 * workers
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending: deque = deque()
        for item in items:
            pending.append(pool.submit(fn, item))
            if len(pending) >= window:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()


def generate_run(cfg: RunConfig, sink: Optional[Callable] = None) -> RunResult:
    """Generate and summarize sets ``1..S``.

    Each worker generates a set and analyses it; ``sink(result, summary)``
    is then called on the calling thread in ``set_index`` order. The pooled
    moments are merged in that same order, so the result does not depend
    on the worker count.
    """
    from .analysis import Moments, summarize

    def work(set_index):
        result = generate_set(cfg, set_index)
        return result, summarize(result, cfg)

    pooled = Moments()
    summaries = []
    draws = 0
    for result, summary in _ordered_map(work, range(1, cfg.total_sets + 1), cfg.workers):
        if sink is not None:
            sink(result, summary)
        summaries.append(summary)
        pooled = pooled.merge(summary.moments)
        draws += result.draws
    return RunResult(summaries=summaries, pooled=pooled, draws=draws, set_count=len(summaries))


def default_workers() -> int:
    env = os.environ.get("LAYERSUM_WORKERS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError("workers", f"LAYERSUM_WORKERS={env!r} is not an integer") from None
        if value < 1:
            raise ConfigError("workers", "LAYERSUM_WORKERS must be >= 1")
        return value
    return os.cpu_count() or 1
