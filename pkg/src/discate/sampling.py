"""Drawing i.i.d. ``(X, A, Y)`` samples and reducing them to per-category counts."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .model import ModelSpec

PathLike = Union[str, Path]
StreamIndex = Union[int, Sequence[int]]


@dataclass(frozen=True)
class SeedSpec:
    """A master seed plus a stream index (an int or a tuple of ints).

    Streams are derived with :class:`numpy.random.SeedSequence` using the
    stream index as ``spawn_key``, so every ``(master_seed, stream_index)``
    pair names an independent PCG64 stream regardless of evaluation order.
    """

    master_seed: int
    stream_index: StreamIndex = 0

    def __post_init__(self) -> None:
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        key = self.stream_index
        key = (int(key),) if np.isscalar(key) else tuple(int(k) for k in key)
        if any(k < 0 for k in key):
            raise ValueError("stream indices must be non-negative")
        object.__setattr__(self, "stream_index", key if len(key) > 1 else key[0])

    @property
    def spawn_key(self) -> tuple[int, ...]:
        key = self.stream_index
        return (key,) if isinstance(key, int) else tuple(key)

    def child(self, *index: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.spawn_key + tuple(int(i) for i in index))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=self.spawn_key)
        return np.random.Generator(np.random.PCG64(ss))


def _rng(seed: SeedSpec | np.random.Generator | int) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, SeedSpec):
        return seed.generator()
    return SeedSpec(int(seed)).generator()


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` observations with 1-based categories ``x``, treatments ``a`` and outcomes ``y``."""

    d: int
    x: NDArray[np.int64]
    a: NDArray[np.int8]
    y: NDArray[np.int8]

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=np.int64)
        a = np.asarray(self.a, dtype=np.int8)
        y = np.asarray(self.y, dtype=np.int8)
        if not (x.ndim == a.ndim == y.ndim == 1) or not (x.size == a.size == y.size):
            raise ValueError("x, a and y must be 1-d arrays of equal length")
        if x.size == 0:
            raise ValueError("dataset must contain at least one record")
        if self.d < 1:
            raise ValueError("d must be positive")
        if x.min() < 1 or x.max() > self.d:
            bad = int(np.flatnonzero((x < 1) | (x > self.d))[0])
            raise ValueError(f"record {bad + 1}: x={x[bad]} outside [1, {self.d}]")
        if np.any((a != 0) & (a != 1)) or np.any((y != 0) & (y != 1)):
            raise ValueError("a and y must be binary")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.x.size)

    @classmethod
    def from_records(cls, records: Sequence[tuple[int, int, int]], d: int) -> "Dataset":
        arr = np.asarray(records, dtype=np.int64).reshape(-1, 3)
        return cls(d=d, x=arr[:, 0], a=arr[:, 1], y=arr[:, 2])

    def records(self) -> Iterator[tuple[int, int, int]]:
        return zip(self.x.tolist(), self.a.tolist(), self.y.tolist())

    def subset(self, index: ArrayLike) -> "Dataset":
        index = np.asarray(index)
        return Dataset(d=self.d, x=self.x[index], a=self.a[index], y=self.y[index])

    def identical(self, other: "Dataset") -> bool:
        return (
            self.d == other.d
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.y, other.y)
        )

    def write_csv(self, path: PathLike) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("x,a,y\n")
            fh.writelines(f"{x},{a},{y}\n" for x, a, y in self.records())

    @classmethod
    def read_csv(cls, path: PathLike, d: Optional[int] = None) -> "Dataset":
        """Read a ``x,a,y`` file; ``d`` defaults to the largest category seen."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["x", "a", "y"]:
                raise ValueError(f"{path}: expected header 'x,a,y', got {header!r}")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != 3:
                    raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
                try:
                    rows.append(tuple(int(c) for c in row))
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: non-integer field in {row!r}") from None
        if not rows:
            raise ValueError(f"{path}: no records")
        arr = np.asarray(rows, dtype=np.int64)
        if d is None:
            d = int(arr[:, 0].max())
        try:
            return cls(d=d, x=arr[:, 0], a=arr[:, 1], y=arr[:, 2])
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from None


@dataclass(frozen=True, eq=False)
class SufficientStats:
    """Per-category counts ``n·p̂_k``, ``n·ŵ_k``, ``n·q̂_1k`` and ``n·q̂_0k``.

    When ``categories`` is None the arrays are dense (index ``k-1`` holds
    category ``k``). Otherwise they only cover the listed 1-based categories
    and every unlisted category has zero count; estimators defined as sums
    over categories are unaffected since empty categories contribute zero.
    """

    n: int
    d: int
    count_x: NDArray[np.int64]
    count_x_treated: NDArray[np.int64]
    count_x_treated_y1: NDArray[np.int64]
    count_x_untreated_y1: NDArray[np.int64]
    categories: Optional[NDArray[np.int64]] = None

    def __post_init__(self) -> None:
        cx = np.asarray(self.count_x, dtype=np.int64)
        ct = np.asarray(self.count_x_treated, dtype=np.int64)
        c1 = np.asarray(self.count_x_treated_y1, dtype=np.int64)
        c0 = np.asarray(self.count_x_untreated_y1, dtype=np.int64)
        if not (cx.shape == ct.shape == c1.shape == c0.shape) or cx.ndim != 1:
            raise ValueError("count vectors must be 1-d with equal length")
        expected = self.d if self.categories is None else len(self.categories)
        if cx.size != expected:
            raise ValueError(f"count vectors have length {cx.size}, expected {expected}")
        if int(cx.sum()) != self.n:
            raise ValueError(f"Σ count_x = {int(cx.sum())} but n = {self.n}")
        if np.any(ct < 0) or np.any(ct > cx):
            raise ValueError("count_x_treated must lie in [0, count_x]")
        if np.any(c1 < 0) or np.any(c1 > ct):
            raise ValueError("count_x_treated_y1 must lie in [0, count_x_treated]")
        if np.any(c0 < 0) or np.any(c0 > cx - ct):
            raise ValueError("count_x_untreated_y1 must lie in [0, count_x - count_x_treated]")
        for name, arr in (("count_x", cx), ("count_x_treated", ct),
                          ("count_x_treated_y1", c1), ("count_x_untreated_y1", c0)):
            object.__setattr__(self, name, arr)
        if self.categories is not None:
            object.__setattr__(self, "categories", np.asarray(self.categories, dtype=np.int64))

    @property
    def is_compact(self) -> bool:
        return self.categories is not None

    def dense(self) -> "SufficientStats":
        if self.categories is None:
            return self
        out = []
        for arr in (self.count_x, self.count_x_treated, self.count_x_treated_y1,
                    self.count_x_untreated_y1):
            full = np.zeros(self.d, dtype=np.int64)
            full[self.categories - 1] = arr
            out.append(full)
        return SufficientStats(self.n, self.d, *out)


def tabulate(dataset: Dataset, compact: bool = False) -> SufficientStats:
    """Count records per category.

    ``compact=True`` keeps only observed categories (O(n log n) memory-light
    path used when ``d`` is much larger than ``n``).
    """
    x, a, y = dataset.x, dataset.a.astype(np.int64), dataset.y.astype(np.int64)
    if compact:
        cats, idx = np.unique(x, return_inverse=True)
        size = cats.size
    else:
        cats, idx, size = None, x - 1, dataset.d
    cx = np.bincount(idx, minlength=size)
    ct = np.bincount(idx, weights=a, minlength=size).astype(np.int64)
    c1 = np.bincount(idx, weights=a * y, minlength=size).astype(np.int64)
    c0 = np.bincount(idx, weights=(1 - a) * y, minlength=size).astype(np.int64)
    return SufficientStats(dataset.n, dataset.d, cx, ct, c1, c0, categories=cats)


class CategoricalSampler:
    """Inverse-CDF sampler for ``X ~ Categorical(p)`` with O(d) setup and O(log d) draws."""

    def __init__(self, p: NDArray[np.float64], uniform: Optional[bool] = None):
        self.d = int(p.shape[0])
        self.uniform = bool(np.all(p == p[0])) if uniform is None else uniform
        if self.uniform:
            self._cdf = None
            self._last = self.d - 1
        else:
            self._cdf = np.cumsum(p)
            # rounding can leave u >= cdf[-1]; land on the last category with mass
            self._last = int(np.flatnonzero(p > 0)[-1])

    def draw(self, rng: np.random.Generator, size: int) -> NDArray[np.int64]:
        """Return 1-based category labels."""
        u = rng.random(size)
        if self._cdf is None:
            k = np.floor(u * self.d).astype(np.int64)
        else:
            k = np.searchsorted(self._cdf, u, side="right").astype(np.int64)
        np.minimum(k, self._last, out=k)
        return k + 1


class DatasetSampler:
    """Reusable sampler for one model; amortises the CDF setup over many draws."""

    def __init__(self, model: ModelSpec):
        self.model = model
        self._x = CategoricalSampler(model.p, uniform=model.is_uniform)

    def draw(self, n: int, seed: SeedSpec | np.random.Generator | int) -> Dataset:
        if int(n) != n or n < 1:
            raise ValueError(f"n must be a positive integer, got {n!r}")
        rng = _rng(seed)
        m = self.model
        x = self._x.draw(rng, int(n))
        k = x - 1
        a = (rng.random(n) < m.pi[k]).astype(np.int8)
        mu = np.where(a == 1, m.mu1[k], m.mu0[k])
        y = (rng.random(n) < mu).astype(np.int8)
        return Dataset(d=m.d, x=x, a=a, y=y)


def draw_dataset(model: ModelSpec, n: int, seed: SeedSpec | np.random.Generator | int) -> Dataset:
    return DatasetSampler(model).draw(n, seed)


def draw_stats_batch(
    model: ModelSpec, n: int, reps: int, seed: SeedSpec | np.random.Generator | int
) -> tuple[NDArray, NDArray, NDArray, NDArray]:
    """Draw ``reps`` independent count tables directly from their exact law.

    ``count_x ~ Multinomial(n, p)``, treated counts are binomial given
    ``count_x`` and outcome counts binomial given the arm sizes. Returns four
    ``(reps, d)`` integer arrays ordered like :class:`SufficientStats`.
    """
    rng = _rng(seed)
    m = model
    cx = rng.multinomial(n, np.asarray(m.p), size=reps)
    ct = rng.binomial(cx, m.pi)
    c1 = rng.binomial(ct, m.mu1)
    c0 = rng.binomial(cx - ct, m.mu0)
    return cx, ct, c1, c0


def uniform_sim_model(d: int) -> ModelSpec:
    """Simulation design: ``p_k = 1/d``, ``pi_k = 1/2``, ``mu1_k = 1/2``, ``mu0_k = 1/4``."""
    if int(d) != d or d < 1:
        raise ValueError(f"d must be a positive integer, got {d!r}")
    return ModelSpec.constant(int(d), pi=0.5, mu1=0.5, mu0=0.25)


def split_sample(dataset: Dataset, seed: SeedSpec | np.random.Generator | int) -> tuple[Dataset, Dataset]:
    """Random partition into halves of sizes ``ceil(n/2)`` and ``floor(n/2)``."""
    n = dataset.n
    if n < 2:
        raise ValueError("split_sample needs at least 2 records")
    perm = _rng(seed).permutation(n)
    half = (n + 1) // 2
    return dataset.subset(np.sort(perm[:half])), dataset.subset(np.sort(perm[half:]))
