"""Chunked tree reduction of mode sums.

Terms are partitioned into fixed-size chunks; each chunk is reduced by
pairwise halving (element ``i`` is added to element ``i + half``), and the
chunk partials are combined in ascending chunk order with an exactly rounded
sum. The result therefore does not depend on how chunks are scheduled over
workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class ReductionPlan:
    chunk_size: int = 256
    interior_dtype: type = np.float64
    worker_count: int = 1
    sort_by_magnitude: bool = False

    def __post_init__(self):
        c = self.chunk_size
        if c < 1 or c & (c - 1):
            raise ValueError(f"chunk_size must be a power of two, got {c}")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if np.dtype(self.interior_dtype) not in (np.dtype(np.float32), np.dtype(np.float64)):
            raise ValueError("interior_dtype must be float32 or float64")

    @property
    def tree_depth(self) -> int:
        return self.chunk_size.bit_length() - 1


def _tree_reduce(block: np.ndarray, depth: int) -> np.ndarray:
    # block: (n_chunks, chunk_size, d)
    x = block
    for _ in range(depth):
        half = x.shape[1] // 2
        x = x[:, :half] + x[:, half:]
    return x[:, 0]


def _as_terms(terms) -> np.ndarray:
    arr = np.asarray(terms, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError("terms must be a sequence of scalars or vectors")
    if arr.shape[0] == 0:
        raise ValueError("cannot reduce an empty sequence of terms")
    return arr


def chunk_partials(terms, plan: ReductionPlan = ReductionPlan()) -> np.ndarray:
    """Per-chunk tree-reduced partial sums, shape ``(n_chunks, d)``."""
    arr = _as_terms(terms)
    if plan.sort_by_magnitude:
        order = np.argsort(np.linalg.norm(arr, axis=1), kind="stable")
        arr = arr[order]
    n, d = arr.shape
    n_chunks = -(-n // plan.chunk_size)
    padded = np.zeros((n_chunks * plan.chunk_size, d), dtype=plan.interior_dtype)
    padded[:n] = arr
    blocks = padded.reshape(n_chunks, plan.chunk_size, d)

    if plan.worker_count == 1 or n_chunks == 1:
        return _tree_reduce(blocks, plan.tree_depth)

    bounds = np.linspace(0, n_chunks, min(plan.worker_count, n_chunks) + 1).astype(int)
    with ThreadPoolExecutor(max_workers=plan.worker_count) as pool:
        parts = list(pool.map(lambda ab: _tree_reduce(blocks[ab[0]:ab[1]], plan.tree_depth),
                              zip(bounds[:-1], bounds[1:])))
    return np.concatenate(parts, axis=0)


def chunked_sum(terms, plan: ReductionPlan = ReductionPlan()) -> np.ndarray:
    """Sum a sequence of vectors with the chunked tree scheme of ``plan``.

    Returns a float64 array of shape ``(d,)``; scalar terms give ``d == 1``.
    """
    partials = chunk_partials(terms, plan).astype(np.float64)
    return np.array([math.fsum(partials[:, k]) for k in range(partials.shape[1])])


def serial_sum(terms) -> np.ndarray:
    """Exactly rounded serial sum, the reference for :func:`chunked_sum`."""
    arr = _as_terms(terms)
    return np.array([math.fsum(arr[:, k]) for k in range(arr.shape[1])])


@dataclass
class PrecisionAudit:
    chunked: np.ndarray
    reference: np.ndarray
    discrepancy: float
    relative: float
    harmonic_strength: Optional[float]
    harmonic_ratio: Optional[float]


def precision_audit(terms, plan: ReductionPlan = ReductionPlan(),
                    first_harmonic: Optional[slice] = None) -> PrecisionAudit:
    """Compare the chunked sum with the serial reference.

    ``first_harmonic`` selects the terms belonging to the lowest retained
    harmonic; its strength is the root-sum-square of those term magnitudes and
    the discrepancy is also reported relative to it.
    """
    arr = _as_terms(terms)
    got = chunked_sum(arr, plan)
    ref = serial_sum(arr)
    disc = float(np.linalg.norm(got - ref))
    ref_norm = float(np.linalg.norm(ref))
    if disc == 0.0:
        rel = 0.0
    else:
        rel = disc / ref_norm if ref_norm > 0 else math.inf
    strength = ratio = None
    if first_harmonic is not None:
        band = arr[first_harmonic]
        strength = float(np.sqrt(np.sum(band**2))) if band.size else 0.0
        if disc == 0.0:
            ratio = 0.0
        else:
            ratio = disc / strength if strength > 0 else math.inf
    return PrecisionAudit(got, ref, disc, rel, strength, ratio)
