"""Level-2 rough paths realised as canonical lifts of piecewise-linear paths.

Every driver in the package is a :class:`PiecewiseLinearPath`.  Its canonical
lift carries the exact iterated integrals up to level 2, which on a single
linear piece with increment ``D`` are ``(D, D (x) D / 2)``.  Increments over
arbitrary ``[s, t]`` are assembled from running signatures with Chen's
relation, so no quadrature is ever involved.

Metrics (p-variation, inhomogeneous p-variation distance, Hoelder norm) take
suprema over partitions drawn from the breakpoints plus
``partition_refinement`` equispaced interior points per segment.  The
supremum over that finite family is computed exactly by dynamic programming,
so the reported numbers are lower bounds of the continuum quantities that
become exact as the refinement grows.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

MAX_LEVEL = 2


class RoughPathError(ValueError):
    """Invalid path data or metric parameters."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PiecewiseLinearPath:
    """Path in R^N given by its values at strictly increasing times ``0 = t_0 < ... < t_m = T``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or times.size < 2:
            raise RoughPathError("a path needs at least two time points")
        if values.shape[0] != times.size:
            raise RoughPathError(
                f"times ({times.size}) and values ({values.shape[0]}) differ in length"
            )
        if times[0] != 0.0:
            raise RoughPathError("paths must start at time 0")
        if np.any(np.diff(times) <= 0):
            raise RoughPathError("times must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise RoughPathError("path values must be finite")
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "values", _frozen(values))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def n_segments(self) -> int:
        return self.times.size - 1

    def segment_index(self, t) -> np.ndarray:
        """Index k of the segment ``[t_k, t_{k+1}]`` holding each t (right end maps to the last)."""
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="right") - 1
        return np.clip(k, 0, self.n_segments - 1)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = self.segment_index(t)
        t0, t1 = self.times[k], self.times[k + 1]
        lam = ((t - t0) / (t1 - t0))[..., None]
        return (1.0 - lam) * self.values[k] + lam * self.values[k + 1]

    def velocity(self, k) -> np.ndarray:
        """Constant derivative on segment k."""
        return (self.values[k + 1] - self.values[k]) / (self.times[k + 1] - self.times[k])

    def components(self, idx: Sequence[int] | slice) -> "PiecewiseLinearPath":
        """Sub-path made of selected coordinates (same time grid)."""
        return PiecewiseLinearPath(self.times, self.values[:, idx])

    def restrict(self, t: float) -> "PiecewiseLinearPath":
        """The path on ``[0, t]``."""
        if not 0.0 < t <= self.T:
            raise RoughPathError(f"restriction time {t} outside (0, {self.T}]")
        inner = self.times[self.times < t]
        times = np.append(inner, t)
        return PiecewiseLinearPath(times, self(times))

    def resample(self, times) -> "PiecewiseLinearPath":
        """Evaluate on a new grid; exact when the grid contains all breakpoints."""
        times = np.asarray(times, dtype=float)
        return PiecewiseLinearPath(times, self(times))

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "PiecewiseLinearPath":
        return cls(np.asarray(data["times"]), np.asarray(data["values"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "PiecewiseLinearPath":
        return cls.from_dict(json.loads(Path(path).read_text()))


def merge_times(*paths: PiecewiseLinearPath) -> np.ndarray:
    """Union of the breakpoints of several paths sharing the same horizon."""
    horizons = {p.T for p in paths}
    if len(horizons) != 1:
        raise RoughPathError(f"paths have different horizons {sorted(horizons)}")
    return np.unique(np.concatenate([p.times for p in paths]))


def path_from_function(fn: Callable[[np.ndarray], np.ndarray], times) -> PiecewiseLinearPath:
    """Piecewise-linear interpolation of ``fn`` (vectorised in t) at the given times."""
    times = np.asarray(times, dtype=float)
    return PiecewiseLinearPath(times, np.asarray(fn(times), dtype=float).reshape(times.size, -1))


def add_paths(a: PiecewiseLinearPath, b: PiecewiseLinearPath, scale: float = 1.0) -> PiecewiseLinearPath:
    """``a + scale * b`` on the merged grid."""
    times = merge_times(a, b)
    if a.dim != b.dim:
        raise RoughPathError(f"dimension mismatch {a.dim} vs {b.dim}")
    return PiecewiseLinearPath(times, a(times) + scale * b(times))


def dyadic_times(T: float, level: int) -> np.ndarray:
    return np.linspace(0.0, T, 2**level + 1)


def brownian_piecewise_linear(seed: int, dims: int, T: float, dyadic_level: int) -> PiecewiseLinearPath:
    """Piecewise-linear Brownian sample on the dyadic grid of the given level.

    Levels are nested: level n+1 keeps every value of level n and inserts
    Brownian-bridge midpoints, so for a fixed seed the sequence of paths is a
    single converging Wong-Zakai sequence.
    """
    if dyadic_level < 0:
        raise RoughPathError("dyadic level must be nonnegative")
    rng = np.random.default_rng(seed)
    values = np.zeros((2, dims))
    values[1] = np.sqrt(T) * rng.standard_normal(dims)
    for level in range(1, dyadic_level + 1):
        parent_dt = T / 2 ** (level - 1)
        n_mid = 2 ** (level - 1)
        mids = 0.5 * (values[:-1] + values[1:])
        mids += np.sqrt(parent_dt / 4.0) * rng.standard_normal((n_mid, dims))
        refined = np.empty((2 * n_mid + 1, dims))
        refined[0::2] = values
        refined[1::2] = mids
        values = refined
    return PiecewiseLinearPath(dyadic_times(T, dyadic_level), values)


def _check_p(p: float) -> None:
    if not 1.0 <= p < 3.0:
        raise RoughPathError(f"p = {p} outside [1, 3); only level-2 rough paths are supported")


@dataclass(frozen=True)
class RoughPathLift:
    """Canonical level-2 lift of a piecewise-linear path.

    ``level1[k]`` and ``level2[k]`` are the signature increments of segment k.
    Running signatures at the breakpoints are kept for fast increments.
    """

    base: PiecewiseLinearPath
    p: float
    level1: np.ndarray
    level2: np.ndarray
    _run1: np.ndarray = field(repr=False)
    _run2: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def T(self) -> float:
        return self.base.T

    def running_signature(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Signature of the path over ``[0, t]`` for an array of times."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < 0) or np.any(t > self.T):
            raise RoughPathError("times outside [0, T]")
        k = self.base.segment_index(t)
        delta = self.base(t) - self.base.values[k]
        a_k = self._run1[k]
        s1 = a_k + delta
        s2 = (
            self._run2[k]
            + a_k[:, :, None] * delta[:, None, :]
            + 0.5 * delta[:, :, None] * delta[:, None, :]
        )
        return s1, s2

    def sample(self, partition_refinement: int = 4) -> np.ndarray:
        return refined_times(self.base.times, partition_refinement)


def lift(path: PiecewiseLinearPath, p: float) -> RoughPathLift:
    """Canonical level-2 lift; exact on every linear piece."""
    _check_p(p)
    inc = np.diff(path.values, axis=0)
    level2 = 0.5 * inc[:, :, None] * inc[:, None, :]
    n = path.n_segments
    run1 = np.zeros((n + 1, path.dim))
    run2 = np.zeros((n + 1, path.dim, path.dim))
    run1[1:] = np.cumsum(inc, axis=0)
    # Chen: S_{0,k+1} = S_{0,k} (x) S_{k,k+1}
    cross = run1[:-1, :, None] * inc[:, None, :]
    run2[1:] = np.cumsum(cross + level2, axis=0)
    return RoughPathLift(path, float(p), _frozen(inc), _frozen(level2), _frozen(run1), _frozen(run2))


def increments_between(
    s1: np.ndarray, s2: np.ndarray, i, j
) -> tuple[np.ndarray, np.ndarray]:
    """Increment ``S_{i}^{-1} (x) S_{j}`` from running signatures (indices broadcast)."""
    a_i = s1[i]
    d1 = s1[j] - a_i
    d2 = s2[j] - s2[i] - a_i[..., :, None] * d1[..., None, :]
    return d1, d2


def signature_increment(lift_: RoughPathLift, s: float, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact level-1 and level-2 increments of the lift over ``[s, t]``."""
    if s > t:
        raise RoughPathError(f"s = {s} > t = {t}")
    s1, s2 = lift_.running_signature([s, t])
    d1, d2 = increments_between(s1, s2, 0, 1)
    if s == t:
        return np.zeros_like(d1), np.zeros_like(d2)
    return d1, d2


def tensor_product(
    x: tuple[np.ndarray, np.ndarray], y: tuple[np.ndarray, np.ndarray]
) -> tuple[np.ndarray, np.ndarray]:
    """Product in the truncated tensor algebra T^2(R^N) for group elements (scalar part 1)."""
    x1, x2 = x
    y1, y2 = y
    return x1 + y1, x2 + y2 + np.outer(x1, y1)


def refined_times(breakpoints: np.ndarray, partition_refinement: int) -> np.ndarray:
    """Breakpoints plus ``partition_refinement`` equispaced interior points per segment."""
    if partition_refinement < 0:
        raise RoughPathError("partition_refinement must be nonnegative")
    b = np.asarray(breakpoints, dtype=float)
    if partition_refinement == 0:
        return b.copy()
    frac = np.arange(1, partition_refinement + 1) / (partition_refinement + 1)
    inner = b[:-1, None] + frac[None, :] * np.diff(b)[:, None]
    out = np.concatenate([b, inner.ravel()])
    return np.sort(out)


def _level_norm(d1: np.ndarray, d2: np.ndarray, level: int) -> np.ndarray:
    if level == 1:
        return np.sqrt(np.sum(d1 * d1, axis=-1))
    return np.sqrt(np.sum(d2 * d2, axis=(-2, -1)))


def _partition_sup(pair_norm: Callable[[int], np.ndarray], m: int, q: float) -> float:
    """max over subsequences 0 = i_0 < ... < i_r = m-1 of sum pair_norm(i_{l}, i_{l+1})^q.

    ``pair_norm(j)`` returns the norms of the increments from every earlier
    sample index to j.  Quadratic-time DP, exact over the sample grid.
    """
    best = np.zeros(m)
    for j in range(1, m):
        best[j] = np.max(best[:j] + pair_norm(j) ** q)
    return float(best[-1])


def _variation(s1, s2, level: int, p: float, diff=None) -> float:
    q = p / level
    m = s1.shape[0]

    def pair_norm(j):
        i = np.arange(j)
        d1, d2 = increments_between(s1, s2, i, j)
        if diff is not None:
            e1, e2 = increments_between(diff[0], diff[1], i, j)
            d1, d2 = d1 - e1, d2 - e2
        return _level_norm(d1, d2, level)

    total = _partition_sup(pair_norm, m, q)
    return total ** (level / p)


def p_variation_norm(
    lift_: RoughPathLift, level: int, partition_refinement: int = 4, p: float | None = None
) -> float:
    """Homogeneous p-variation norm of the level-``level`` component.

    ``(sup_P sum |X^k_{t_i t_{i+1}}|^{p/k})^{k/p}`` with the sup taken over
    partitions of the refined sample grid.
    """
    if level not in (1, 2):
        raise RoughPathError(f"level must be 1 or 2, got {level}")
    p = lift_.p if p is None else p
    _check_p(p)
    s1, s2 = lift_.running_signature(lift_.sample(partition_refinement))
    return _variation(s1, s2, level, p)


def rough_distance(
    a: RoughPathLift,
    b: RoughPathLift,
    p: float | None = None,
    partition_refinement: int = 4,
    times: np.ndarray | None = None,
) -> float:
    """Inhomogeneous p-variation distance, max over levels of the p/k-variation of increment differences."""
    if a.dim != b.dim:
        raise RoughPathError(f"dimension mismatch {a.dim} vs {b.dim}")
    p = a.p if p is None else p
    _check_p(p)
    if times is None:
        times = refined_times(merge_times(a.base, b.base), partition_refinement)
    sa = a.running_signature(times)
    sb = b.running_signature(times)
    return max(_variation(sa[0], sa[1], k, p, diff=sb) for k in (1, 2))


def hoelder_norm(lift_: RoughPathLift, exponent: float, partition_refinement: int = 4) -> float:
    """``max_k sup_{s<t} |X^k_{s,t}|^{1/k} / |t - s|^exponent`` over sampled pairs."""
    if not 0.0 < exponent <= 1.0:
        raise RoughPathError(f"Hoelder exponent {exponent} outside (0, 1]")
    times = lift_.sample(partition_refinement)
    s1, s2 = lift_.running_signature(times)
    best = 0.0
    for j in range(1, times.size):
        i = np.arange(j)
        d1, d2 = increments_between(s1, s2, i, j)
        dt = (times[j] - times[i]) ** exponent
        r1 = _level_norm(d1, d2, 1) / dt
        r2 = np.sqrt(_level_norm(d1, d2, 2)) / dt
        best = max(best, float(r1.max()), float(r2.max()))
    return best


@dataclass(frozen=True)
class RoughMetricReport:
    p_variation_norms: tuple[float, float]
    hoelder_norm: float
    partition_refinement: int
    distance: float | None = None

    def to_dict(self) -> dict:
        return {
            "p_variation_norms": list(self.p_variation_norms),
            "hoelder_norm": self.hoelder_norm,
            "distance": self.distance,
            "partition_refinement": self.partition_refinement,
        }


def metric_report(
    lift_: RoughPathLift,
    other: RoughPathLift | None = None,
    partition_refinement: int = 4,
) -> RoughMetricReport:
    norms = tuple(p_variation_norm(lift_, k, partition_refinement) for k in (1, 2))
    dist = None if other is None else rough_distance(lift_, other, lift_.p, partition_refinement)
    return RoughMetricReport(
        p_variation_norms=norms,
        hoelder_norm=hoelder_norm(lift_, 1.0 / lift_.p, partition_refinement),
        partition_refinement=partition_refinement,
        distance=dist,
    )
