"""Uniform rectangular lattices in 1 or 2 dimensions with bilinear interpolation."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np


class LatticeDomainError(ValueError):
    """Query point outside the lattice."""


@dataclass(frozen=True)
class Lattice:
    origin: tuple[float, ...]
    spacing: tuple[float, ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(o) for o in np.atleast_1d(self.origin)))
        object.__setattr__(self, "spacing", tuple(float(h) for h in np.atleast_1d(self.spacing)))
        object.__setattr__(self, "shape", tuple(int(n) for n in np.atleast_1d(self.shape)))
        if not (len(self.origin) == len(self.spacing) == len(self.shape)):
            raise ValueError("origin, spacing and shape must have the same length")
        if any(n < 2 for n in self.shape):
            raise ValueError("a lattice needs at least two points per axis")

    @classmethod
    def from_box(cls, lower, upper, n) -> "Lattice":
        """``n`` points per axis (scalar or per-axis) spanning ``[lower, upper]`` inclusive."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        n = np.broadcast_to(np.atleast_1d(n), lower.shape)
        return cls(tuple(lower), tuple((upper - lower) / (n - 1)), tuple(n))

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(o + h * (n - 1) for o, h, n in zip(self.origin, self.spacing, self.shape))

    def axes(self) -> list[np.ndarray]:
        return [o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.shape)]

    def points(self) -> np.ndarray:
        """All lattice points, C order, shape ``(size, d)``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def unflatten(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values)
        return values.reshape(self.shape + values.shape[1:])

    def contains(self, pts, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(pts)
        lo = np.asarray(self.origin) - tol
        hi = np.asarray(self.upper) + tol
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def gradient(self, values: np.ndarray) -> np.ndarray:
        """Central-difference gradient of a lattice field, shape ``(size, ..., d)``."""
        field = self.unflatten(values)
        grads = np.gradient(field, *self.spacing, axis=tuple(range(self.d)), edge_order=2)
        if self.d == 1:
            grads = [grads]
        return np.stack([g.reshape((self.size,) + field.shape[self.d:]) for g in grads], axis=-1)

    def stencil(self, pts, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Flat indices ``(m, 2**d)`` and bilinear weights ``(m, 2**d)`` for query points."""
        pts = np.asarray(pts, dtype=float).reshape(-1, self.d)
        if check:
            inside = self.contains(pts, tol=1e-9 * max(self.spacing))
            if not np.all(inside):
                bad = pts[~inside][0]
                raise LatticeDomainError(
                    f"point {bad.tolist()} outside lattice box {self.origin}..{self.upper}"
                )
        shape = np.asarray(self.shape)
        rel = (pts - np.asarray(self.origin)) / np.asarray(self.spacing)
        base = np.clip(np.floor(rel).astype(np.int64), 0, shape - 2)
        frac = np.clip(rel - base, 0.0, 1.0)
        strides = np.array([int(np.prod(self.shape[k + 1:])) for k in range(self.d)])
        idx, wts = [], []
        for corner in product((0, 1), repeat=self.d):
            c = np.asarray(corner)
            idx.append(((base + c) * strides).sum(axis=-1))
            wts.append(np.prod(np.where(c == 1, frac, 1.0 - frac), axis=-1))
        return np.stack(idx, axis=-1), np.stack(wts, axis=-1)

    def axis_matrices(self, other: "Lattice") -> list[np.ndarray]:
        """Per-axis linear interpolation matrices from this lattice onto the axes of ``other``."""
        if other.d != self.d:
            raise ValueError("lattices differ in dimension")
        mats = []
        for a, (x, o, h, n) in enumerate(zip(other.axes(), self.origin, self.spacing, self.shape)):
            if x[0] < o - 1e-9 * h or x[-1] > o + h * (n - 1) + 1e-9 * h:
                raise LatticeDomainError(f"axis {a} of the target leaves the lattice box")
            rel = (x - o) / h
            base = np.clip(np.floor(rel).astype(np.int64), 0, n - 2)
            frac = np.clip(rel - base, 0.0, 1.0)
            W = np.zeros((x.size, n))
            rows = np.arange(x.size)
            W[rows, base] = 1.0 - frac
            W[rows, base + 1] += frac
            mats.append(W)
        return mats

    def resample(self, values: np.ndarray, mats: list[np.ndarray]) -> np.ndarray:
        """Apply ``axis_matrices`` to a flat field; returns the target's flat field."""
        field = values.reshape(self.shape + values.shape[1:])
        for a, W in enumerate(mats):
            field = np.moveaxis(np.tensordot(W, field, axes=(1, a)), 0, a)
        return field.reshape((-1,) + values.shape[1:])

    def interpolate(self, values: np.ndarray, pts, check: bool = True, clamp: bool = False) -> np.ndarray:
        """Bilinear (multilinear) interpolation of a flat lattice field at ``pts``.

        ``clamp`` extends the field by constants outside the box instead of raising.
        """
        values = np.asarray(values)
        if clamp:
            pts = np.clip(np.asarray(pts, dtype=float).reshape(-1, self.d), self.origin, self.upper)
        if values.shape[0] != self.size:
            values = values.reshape((self.size,) + values.shape[self.d:])
        idx, wts = self.stencil(pts, check=check)
        extra = values.shape[1:]
        gathered = values[idx]
        w = wts.reshape(wts.shape + (1,) * len(extra))
        return np.sum(gathered * w, axis=1)


@dataclass(frozen=True)
class Grid:
    """Cell-centred finite-volume grid on the box ``origin + [0, shape * h]``."""

    origin: tuple[float, ...]
    h: tuple[float, ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(o) for o in np.atleast_1d(self.origin)))
        h = np.broadcast_to(np.atleast_1d(np.asarray(self.h, dtype=float)), (len(self.origin),))
        object.__setattr__(self, "h", tuple(float(x) for x in h))
        object.__setattr__(self, "shape", tuple(int(n) for n in np.atleast_1d(self.shape)))
        if len(self.shape) != len(self.origin):
            raise ValueError("origin and shape disagree in dimension")

    @classmethod
    def from_box(cls, lower, upper, h: float) -> "Grid":
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        n = np.rint((upper - lower) / h).astype(int)
        return cls(tuple(lower), h, tuple(n))

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(o + h * n for o, h, n in zip(self.origin, self.h, self.shape))

    def center_axes(self) -> list[np.ndarray]:
        return [o + h * (np.arange(n) + 0.5) for o, h, n in zip(self.origin, self.h, self.shape)]

    def centers(self) -> np.ndarray:
        """Cell centres, shape ``shape + (d,)``."""
        return np.stack(np.meshgrid(*self.center_axes(), indexing="ij"), axis=-1)

    def center_lattice(self) -> Lattice:
        return Lattice(tuple(o + h / 2 for o, h in zip(self.origin, self.h)), self.h, self.shape)

    def node_lattice(self) -> Lattice:
        """Cell corners (interfaces in 1D)."""
        return Lattice(self.origin, self.h, tuple(n + 1 for n in self.shape))

    def interface_shape(self, axis: int) -> tuple[int, ...]:
        s = list(self.shape)
        s[axis] += 1
        return tuple(s)

    def interface_points(self, axis: int) -> np.ndarray:
        """Midpoints of the faces normal to ``axis``, shape ``interface_shape(axis) + (d,)``."""
        axes = self.center_axes()
        o, h, n = self.origin[axis], self.h[axis], self.shape[axis]
        axes[axis] = o + h * np.arange(n + 1)
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def ball_mask(self, R: float, x0) -> np.ndarray:
        x0 = np.broadcast_to(np.atleast_1d(np.asarray(x0, dtype=float)), (self.d,))
        r = np.linalg.norm(self.centers() - x0, axis=-1)
        return r <= R

    def sample(self, values: np.ndarray, pts) -> np.ndarray:
        """Bilinear interpolation of cell-centred values; points are clamped to the centre box."""
        lat = self.center_lattice()
        pts = np.asarray(pts, dtype=float).reshape(-1, self.d)
        pts = np.clip(pts, lat.origin, lat.upper)
        return lat.interpolate(np.asarray(values).reshape(self.size, *np.shape(values)[self.d:]), pts)
