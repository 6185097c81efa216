"""Count-sketch heavy hitters: R repetitions of B signed buckets with median point queries.

Row i = (rep, bucket) of the sketch matrix is q^i_e = sign[rep, e] when edge e
hashes to that bucket in that repetition and 0 otherwise, so every row lies in
{-1, 0, 1}^m. The K = R * B rows are never materialized: measurements of a
signal x are grouped by the buckets that edges actually occupy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import as_generator


@dataclass
class HeavyHitterSketch:
    m: int
    eps: float
    reps: int
    buckets: int
    bucket: np.ndarray  # reps x m bucket ids
    sign: np.ndarray  # reps x m entries in {-1, +1}

    def __post_init__(self):
        # dense per-repetition group ids over occupied buckets only
        self._group = np.zeros_like(self.bucket)
        self._ngroups = np.zeros(self.reps, dtype=np.int64)
        for i in range(self.reps):
            _, inv = np.unique(self.bucket[i], return_inverse=True)
            self._group[i] = inv
            self._ngroups[i] = inv.max() + 1 if self.m else 0
        self._offset = np.concatenate([[0], np.cumsum(self._ngroups)])
        self._flat_group = (self._group + self._offset[:-1, None]).ravel()

    @property
    def K(self) -> int:
        return self.reps * self.buckets

    def row(self, i: int) -> np.ndarray:
        rep, b = divmod(int(i), self.buckets)
        return np.where(self.bucket[rep] == b, self.sign[rep], 0).astype(float)

    def matrix(self) -> np.ndarray:
        """Explicit K x m matrix; only sensible for small eps."""
        Q = np.zeros((self.K, self.m))
        for rep in range(self.reps):
            Q[rep * self.buckets + self.bucket[rep], np.arange(self.m)] = self.sign[rep]
        return Q

    def measure(self, x: np.ndarray) -> np.ndarray:
        """Dense measurement vector v = Q x of length K."""
        v = np.zeros(self.K)
        for rep in range(self.reps):
            np.add.at(v, rep * self.buckets + self.bucket[rep], self.sign[rep] * x)
        return v

    def estimates_from_measurements(self, v: np.ndarray) -> np.ndarray:
        """Median over repetitions of sign * v[bucket] for every coordinate."""
        idx = np.arange(self.reps)[:, None] * self.buckets + self.bucket
        return np.median(self.sign * np.asarray(v)[idx], axis=0)

    def estimates(self, x: np.ndarray) -> np.ndarray:
        """Point estimates of x from its (implicit) measurements."""
        sums = np.bincount(self._flat_group, (self.sign * x[None, :]).ravel(), self._offset[-1])
        per_rep = self.sign * sums[self._flat_group].reshape(self.reps, self.m)
        return np.median(per_rep, axis=0)


def make_sketch(m: int, eps: float, rng, rep_const: float = 4.0, bucket_const: float = 16.0) -> HeavyHitterSketch:
    """R = rep_const ceil(log2 m) repetitions, B = ceil(bucket_const / eps^2) buckets."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    gen = as_generator(rng)
    reps = max(1, int(rep_const * max(1, math.ceil(math.log2(max(m, 2))))))
    buckets = int(math.ceil(bucket_const / (eps * eps)))
    bucket = gen.integers(0, buckets, size=(reps, m), dtype=np.int64)
    sign = gen.integers(0, 2, size=(reps, m), dtype=np.int64) * 2 - 1
    return HeavyHitterSketch(m, eps, reps, buckets, bucket, sign)


def _select(est: np.ndarray, theta: float, max_size: int | None) -> np.ndarray:
    Z = np.flatnonzero(np.abs(est) >= theta)
    if max_size is not None and Z.size > max_size:
        order = np.argsort(-np.abs(est[Z]), kind="stable")[:max_size]
        Z = np.sort(Z[order])
    return Z


def recover(sk: HeavyHitterSketch, v: np.ndarray, theta: float, max_size: int | None = None) -> np.ndarray:
    """Edges whose median estimate from measurements v has magnitude at least theta."""
    return _select(sk.estimates_from_measurements(v), theta, max_size)


def recover_signal(sk: HeavyHitterSketch, x: np.ndarray, theta: float, max_size: int | None = None) -> np.ndarray:
    """recover(sk, Q x, theta) without forming Q x."""
    return _select(sk.estimates(np.asarray(x, dtype=float)), theta, max_size)
