"""Explicit monotone finite-volume solver (local Lax-Friedrichs) with discrete norms and an entropy audit.

Problems are duck-typed: the solver needs ``d``, ``interface_flux(t, grid,
axis, vL, vR) -> (fL, fR, aL, aR)``, ``has_source`` and ``cell_source``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .lattice import Grid


class SolverError(RuntimeError):
    """Non-finite values or an inadmissible time step."""


class ValueBoundError(SolverError):
    """Solution left the admissible value range."""


@dataclass
class GridSolution:
    """Cell averages ``values[k]`` on ``grid`` at ``times[k]``."""

    grid: Grid
    times: np.ndarray
    values: np.ndarray
    info: dict = field(default_factory=dict)

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}")
        return self.values[k]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def norms(self) -> list[dict]:
        return [
            {"t": float(t), "linf": linf(v), "l1": l1(v, self.grid), "tv": tv(v, self.grid),
             "mass": float(np.sum(v) * self.grid.cell_volume)}
            for t, v in zip(self.times, self.values)
        ]

    def to_csv(self, path, index: int = -1) -> None:
        """One snapshot as rows ``x[, y], value``."""
        centers = self.grid.centers().reshape(-1, self.grid.d)
        vals = self.values[index].ravel()
        names = ["x", "y"][: self.grid.d]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["value"])
            for c, v in zip(centers, vals):
                w.writerow([repr(float(q)) for q in c] + [repr(float(v))])

    def manifest(self) -> dict:
        g = self.grid
        return {
            "grid": {"origin": list(g.origin), "h": list(g.h), "shape": list(g.shape)},
            "times": [float(t) for t in self.times],
            "norms": self.norms(),
            **self.info,
        }

    def write_manifest(self, path) -> None:
        Path(path).write_text(json.dumps(self.manifest(), indent=2, sort_keys=True))


# --- discrete norms -------------------------------------------------------------------

def linf(values) -> float:
    return float(np.max(np.abs(values)))


def l1(values, grid: Grid) -> float:
    return float(np.sum(np.abs(values)) * grid.cell_volume)


def tv(values, grid: Grid) -> float:
    """Sum of jump magnitudes weighted by face areas."""
    values = np.asarray(values).reshape(grid.shape)
    total = 0.0
    for axis in range(grid.d):
        face = grid.cell_volume / grid.h[axis]
        total += float(np.sum(np.abs(np.diff(values, axis=axis)))) * face
    return total


def l1_ball_distance(a, b, grid: Grid, R: float, x0) -> float:
    """Riemann sum of ``|a - b|`` over cells whose centres lie in the closed ball ``B_R(x0)``."""
    x0 = np.broadcast_to(np.atleast_1d(np.asarray(x0, dtype=float)), (grid.d,))
    if np.any(x0 - R < np.asarray(grid.origin)) or np.any(x0 + R > np.asarray(grid.upper)):
        raise ValueError("observation ball exceeds the grid box")
    mask = grid.ball_mask(R, x0)
    diff = np.abs(np.asarray(a).reshape(grid.shape) - np.asarray(b).reshape(grid.shape))
    return float(np.sum(diff[mask]) * grid.cell_volume)


# --- time stepping ----------------------------------------------------------------------

def _face_states(vp: np.ndarray, axis: int, d: int):
    """Left/right states at the faces normal to ``axis`` from a ghost-padded array."""
    inner = [slice(1, -1)] * d
    lo, hi = list(inner), list(inner)
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    return vp[tuple(lo)], vp[tuple(hi)]


def lf_fluxes(problem, t: float, grid: Grid, v: np.ndarray):
    """Local Lax-Friedrichs face fluxes and the largest dissipation coefficient per axis."""
    vp = np.pad(v, 1, mode="edge")
    fluxes, alphas = [], []
    for axis in range(grid.d):
        vL, vR = _face_states(vp, axis, grid.d)
        fL, fR, aL, aR = problem.interface_flux(t, grid, axis, vL, vR)
        alpha = np.maximum(np.abs(aL), np.abs(aR))
        fluxes.append(0.5 * (fL + fR) - 0.5 * alpha * (vR - vL))
        alphas.append(float(np.max(alpha)) if alpha.size else 0.0)
    return fluxes, alphas


def _divergence(fluxes, grid: Grid) -> np.ndarray:
    out = None
    for axis, F in enumerate(fluxes):
        n = F.shape[axis]
        hi = np.take(F, np.arange(1, n), axis=axis)
        lo = np.take(F, np.arange(0, n - 1), axis=axis)
        term = (hi - lo) / grid.h[axis]
        out = term if out is None else out + term
    return out


def solve(
    problem,
    grid: Grid,
    u0,
    T: float,
    cfl: float = 0.9,
    snapshot_times=None,
    observer: Callable | None = None,
    v_bound: float | None = None,
    v_slack: float = 0.0,
    store_all: bool = False,
    max_steps: int = 10_000_000,
) -> GridSolution:
    """Advance cell averages ``u0`` to time ``T``.

    Each step re-evaluates the face fluxes at the current time, chooses
    ``dt = cfl / sum_axis(max alpha / h)`` (shortened to land on snapshot
    times) and applies the conservative update followed by the explicit
    source.  ``observer(t, dt, v)`` sees the state held on ``[t, t + dt)``.
    """
    if not 0 < cfl <= 1:
        raise ValueError("cfl must lie in (0, 1]")
    v = np.array(u0(grid.centers()) if callable(u0) else u0, dtype=float).reshape(grid.shape)
    snaps = np.unique(np.concatenate([[0.0, T], np.asarray(snapshot_times if snapshot_times is not None else [])]))
    snaps = snaps[(snaps >= 0) & (snaps <= T)]
    times, values = [0.0], [v.copy()]
    t, steps, si = 0.0, 0, 1
    dt_min, dt_max = np.inf, 0.0
    while si < snaps.size:
        target = float(snaps[si])
        if t >= target - 1e-14 * max(1.0, T):
            t = target
            if times[-1] != t:
                times.append(t)
                values.append(v.copy())
            si += 1
            continue
        fluxes, alphas = lf_fluxes(problem, t, grid, v)
        rate = sum(a / h for a, h in zip(alphas, grid.h))
        dt = target - t if rate == 0 else min(cfl / rate, target - t)
        if not dt > 0:
            raise SolverError(f"inadmissible time step {dt} at t={t}")
        if observer is not None:
            observer(t, dt, v)
        v = v - dt * _divergence(fluxes, grid)
        if getattr(problem, "has_source", False):
            v = v + dt * problem.cell_source(t, grid, v)
        if not np.all(np.isfinite(v)):
            raise SolverError(f"non-finite values at t={t + dt}")
        if v_bound is not None and linf(v) > v_bound + v_slack:
            raise ValueBoundError(f"|v| = {linf(v):.6g} exceeds the bound {v_bound:.6g} at t={t + dt}")
        t = t + dt if target - (t + dt) > 1e-14 * max(1.0, T) else target
        steps += 1
        dt_min, dt_max = min(dt_min, dt), max(dt_max, dt)
        if steps > max_steps:
            raise SolverError("step limit exceeded")
        if store_all and t < target:
            times.append(t)
            values.append(v.copy())
    info = {"steps": steps, "cfl": cfl, "dt_min": float(dt_min) if steps else 0.0, "dt_max": float(dt_max)}
    return GridSolution(grid, np.asarray(times), np.stack(values), info)


# --- entropy audit ----------------------------------------------------------------------

def _bump(s: np.ndarray) -> np.ndarray:
    return np.where(np.abs(s) < 1, (1 - s * s) ** 3, 0.0)


def _bump_d(s: np.ndarray) -> np.ndarray:
    return np.where(np.abs(s) < 1, -6 * s * (1 - s * s) ** 2, 0.0)


@dataclass(frozen=True)
class BumpFamily:
    """Test functions ``theta(t) prod_i b((x_i - c_i) / w)`` with ``b(s) = (1 - s^2)^3`` on ``|s| < 1``
    and ``theta(t) = sin^2(pi t / T)``.

    ``centers[iw][axis]`` holds the centre axis used with width ``widths[iw]``;
    every width has the same number of centres per axis.
    """

    widths: tuple[float, ...]
    centers: tuple[tuple[np.ndarray, ...], ...]
    T: float

    def __post_init__(self):
        if len(self.centers) != len(self.widths):
            raise ValueError("one set of centre axes per width is required")
        counts = {tuple(c.size for c in cs) for cs in self.centers}
        if len(counts) != 1:
            raise ValueError("every width needs the same number of centres per axis")

    @classmethod
    def for_box(cls, lower, upper, T: float, fractions=(0.1, 0.2, 0.4), n_centers: int = 9) -> "BumpFamily":
        """Widths as fractions of the shortest side; centres keep each support strictly inside the box."""
        lower, upper = np.atleast_1d(lower).astype(float), np.atleast_1d(upper).astype(float)
        ext = float(np.min(upper - lower))
        widths = tuple(f * ext for f in fractions)
        if max(fractions) >= 0.5:
            raise ValueError("support fractions must stay below 1/2")
        centers = tuple(
            tuple(np.linspace(lo + w, hi - w, n_centers) for lo, hi in zip(lower, upper)) for w in widths
        )
        return cls(widths, centers, float(T))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(c.size for c in self.centers[0])

    def theta(self, t):
        return np.sin(np.pi * np.asarray(t) / self.T) ** 2

    def theta_integral(self, t):
        t = np.asarray(t, dtype=float)
        return t / 2 - self.T / (4 * np.pi) * np.sin(2 * np.pi * t / self.T)

    def matrices(self, grid: Grid, iw: int):
        """Per axis: values and derivatives of the 1D bumps at cell centres, shape ``(n_centres, n_cells)``."""
        w = self.widths[iw]
        out = []
        for axis, xs in enumerate(grid.center_axes()):
            s = (xs[None, :] - self.centers[iw][axis][:, None]) / w
            out.append((_bump(s), _bump_d(s) / w))
        return out


class EntropyAccumulator:
    """Kruzkov functional for every ``(k, phi)``, accumulated exactly in time over piecewise-constant states.

    ``E(k, phi) = int int |v - k| phi_t + sgn(v - k)(f(v) - f(k)) . grad phi
                  + sgn(v - k)(S(v) - div f(k)) phi``.
    """

    def __init__(self, problem, grid: Grid, k_values, family: BumpFamily):
        self.problem = problem
        self.grid = grid
        self.k = np.asarray(k_values, dtype=float)
        self.family = family
        self.mats = [family.matrices(grid, iw) for iw in range(len(family.widths))]
        self.E = np.zeros((self.k.size, len(family.widths), *family.shape))
        self.x = grid.centers().reshape(-1, grid.d)

    def _project(self, field_val: np.ndarray, mats, deriv_axis: int | None) -> np.ndarray:
        """``sum_x field(x) chi_c(x)`` (or ``d chi_c / dx_axis``) for all centres ``c``."""
        F = field_val.reshape(self.grid.shape)
        for axis in range(self.grid.d):
            B = mats[axis][1] if axis == deriv_axis else mats[axis][0]
            F = np.moveaxis(np.tensordot(B, F, axes=([1], [axis])), 0, axis)
        return F * self.grid.cell_volume

    def __call__(self, t: float, dt: float, v: np.ndarray) -> None:
        fam, pb, x = self.family, self.problem, self.x
        d_theta = float(fam.theta(t + dt) - fam.theta(t))
        i_theta = float(fam.theta_integral(t + dt) - fam.theta_integral(t))
        vf = v.ravel()
        fv = pb.flux(t, x, vf)
        Sv = pb.source(t, x, vf) if getattr(pb, "has_source", False) else 0.0
        for ik, k in enumerate(self.k):
            kk = np.full_like(vf, k)
            s = np.sign(vf - k)
            a = np.abs(vf - k)
            q = s[:, None] * (fv - pb.flux(t, x, kk))
            r = s * (Sv - pb.flux_div(t, x, kk))
            for iw, mats in enumerate(self.mats):
                acc = d_theta * self._project(a, mats, None)
                if i_theta != 0.0:
                    tot = self._project(r, mats, None)
                    for axis in range(self.grid.d):
                        tot = tot + self._project(q[:, axis], mats, axis)
                    acc = acc + i_theta * tot
                self.E[ik, iw] += acc

    def residual(self) -> float:
        return float(np.min(self.E))

    def argmin(self) -> dict:
        idx = np.unravel_index(int(np.argmin(self.E)), self.E.shape)
        return {
            "k": float(self.k[idx[0]]),
            "width": float(self.family.widths[idx[1]]),
            "center": [float(self.family.centers[idx[1]][a][idx[2 + a]]) for a in range(self.grid.d)],
            "value": float(self.E[idx]),
        }


def entropy_residual(solution: GridSolution, problem, k_values, family: BumpFamily) -> float:
    """Kruzkov functional minimum for a solution held constant between its stored time levels."""
    acc = EntropyAccumulator(problem, solution.grid, k_values, family)
    for n in range(solution.times.size - 1):
        t0, t1 = float(solution.times[n]), float(solution.times[n + 1])
        if t1 > t0:
            acc(t0, t1 - t0, solution.values[n])
    return acc.residual()


def k_grid(V: float, n: int = 33) -> np.ndarray:
    return np.linspace(-V, V, n)
