"""Transformed (noise-free) conservation laws built from flows, and the u <-> v changes of unknown.

A problem exposes pointwise evaluators ``flux``, ``flux_dv``, ``flux_div``,
``source`` and ``source_dv`` taking ``(t, x, v)`` with ``x`` of shape
``(m, d)`` and ``v`` of shape ``(m,)``.  The finite-volume solver only calls
``interface_flux`` and ``cell_source``; the transformed problem overrides
``interface_flux`` to build face coefficients from corner values of the flow.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .flows import AffineFlowData, Coefficients, DiffeoFlowGrid, FlowIntegrator, compute_mu
from .fvsolver import GridSolution
from .lattice import Grid, Lattice
from .roughpath import PiecewiseLinearPath


class TransformError(ValueError):
    """Inconsistent inputs to a transformation."""


# --- fluxes ---------------------------------------------------------------------

@dataclass(frozen=True)
class FluxSpec:
    """Flux ``f(u) = direction * phi(u)`` with ``phi`` scalar; ``C_f`` bounds ``|f''|``."""

    name: str
    d: int
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    d2f: Callable[[np.ndarray], np.ndarray]
    C_f: float | None = None
    valid_range: tuple[float, float] | None = None
    params: dict = field(default_factory=dict)
    # set for f = direction * phi; lets face fluxes contract the direction once per step
    direction: np.ndarray | None = field(default=None, compare=False)
    phi: Callable | None = field(default=None, compare=False)
    dphi: Callable | None = field(default=None, compare=False)


def _directional(name, d, direction, phi, dphi, d2phi, C_f, params, valid_range=None) -> FluxSpec:
    a = np.ones(d) if direction is None else np.atleast_1d(np.asarray(direction, dtype=float))
    if a.size != d:
        raise ValueError(f"direction has {a.size} entries, expected {d}")

    def lift(fn):
        return lambda u: np.asarray(fn(np.asarray(u, dtype=float)))[..., None] * a

    bound = None if C_f is None else C_f * float(np.linalg.norm(a))
    return FluxSpec(name, d, lift(phi), lift(dphi), lift(d2phi), bound, valid_range,
                    {**params, "direction": a.tolist()}, a, phi, dphi)


def burgers_flux(d: int = 1, scale: float = 1.0, direction=None) -> FluxSpec:
    return _directional(
        "burgers", d, direction,
        lambda u: scale * 0.5 * u * u, lambda u: scale * u, lambda u: np.full_like(u, scale),
        abs(scale), {"scale": scale},
    )


def linear_flux(d: int = 1, velocity=None) -> FluxSpec:
    return _directional(
        "linear", d, velocity, lambda u: u, np.ones_like, np.zeros_like, 0.0, {},
    )


def exp_flux(d: int = 1, direction=None, valid_range=(-50.0, 50.0)) -> FluxSpec:
    return _directional(
        "exp", d, direction, np.exp, np.exp, np.exp, None, {}, tuple(valid_range),
    )


FLUXES = {
    "burgers": burgers_flux,
    "linear": linear_flux,
    "exp": exp_flux,
}


def make_flux(spec: dict) -> FluxSpec:
    """Flux from a config mapping such as ``{"name": "burgers", "d": 2, "scale": 1.1}``."""
    kw = {k: v for k, v in spec.items() if k != "name"}
    return FLUXES[spec["name"]](**kw)


# --- problems -------------------------------------------------------------------

def _face_points(grid: Grid, axis: int) -> np.ndarray:
    return grid.interface_points(axis).reshape(-1, grid.d)


class ConservationLaw:
    """``dv/dt + div f(t, x, v) = S(t, x, v)``; subclasses provide the pointwise evaluators."""

    d: int = 1
    has_source: bool = False
    value_bound: float | None = None

    def flux(self, t, x, v):
        raise NotImplementedError

    def flux_dv(self, t, x, v):
        raise NotImplementedError

    def flux_div(self, t, x, v):
        return np.zeros(np.shape(v))

    def source(self, t, x, v):
        return np.zeros(np.shape(v))

    def source_dv(self, t, x, v):
        return np.zeros(np.shape(v))

    def sample_times(self) -> np.ndarray:
        return np.array([0.0])

    def interface_flux(self, t: float, grid: Grid, axis: int, vL: np.ndarray, vR: np.ndarray):
        """Physical flux and its v-derivative along ``axis`` on both sides of every face."""
        x = _face_points(grid, axis)
        shape = vL.shape
        fL = self.flux(t, x, vL.ravel())[:, axis].reshape(shape)
        fR = self.flux(t, x, vR.ravel())[:, axis].reshape(shape)
        aL = self.flux_dv(t, x, vL.ravel())[:, axis].reshape(shape)
        aR = self.flux_dv(t, x, vR.ravel())[:, axis].reshape(shape)
        return fL, fR, aL, aR

    def cell_source(self, t: float, grid: Grid, v: np.ndarray) -> np.ndarray:
        x = grid.centers().reshape(-1, grid.d)
        return self.source(t, x, v.ravel()).reshape(v.shape)

    def wavespeed_bound(self, box, value_range: float, n: int = 33, times=None) -> float:
        """Sampled sup of ``|d f / dv|`` over ``box x [-V, V] x times``."""
        lat = Lattice.from_box(box[0], box[1], n)
        x = lat.points()
        vs = np.linspace(-value_range, value_range, 17)
        times = self.sample_times() if times is None else np.atleast_1d(times)
        best = 0.0
        for t in times:
            for v in vs:
                a = self.flux_dv(float(t), x, np.full(x.shape[0], v))
                best = max(best, float(np.max(np.linalg.norm(a, axis=-1))))
        return best


class HomogeneousProblem(ConservationLaw):
    """``dv/dt + div f(v) = 0`` with an x-free flux."""

    def __init__(self, flux: FluxSpec, value_bound: float | None = None):
        self.spec = flux
        self.d = flux.d
        self.value_bound = value_bound

    def flux(self, t, x, v):
        return self.spec.f(np.asarray(v, dtype=float))

    def flux_dv(self, t, x, v):
        return self.spec.df(np.asarray(v, dtype=float))

    def interface_flux(self, t, grid, axis, vL, vR):
        f, df = self.spec.f, self.spec.df
        return f(vL)[..., axis], f(vR)[..., axis], df(vL)[..., axis], df(vR)[..., axis]


# --- flow frames ----------------------------------------------------------------

def _adjugate_from_psi(lattice: Lattice, psi: np.ndarray) -> np.ndarray:
    """``(Dpsi)^{-1}`` for a volume-preserving map from lattice differences of ``psi``."""
    J = lattice.gradient(psi)  # J[n, i, j] = d_j psi_i
    if lattice.d == 1:
        return 1.0 / J
    A = np.empty_like(J)
    A[:, 0, 0] = J[:, 1, 1]
    A[:, 0, 1] = -J[:, 0, 1]
    A[:, 1, 0] = -J[:, 1, 0]
    A[:, 1, 1] = J[:, 0, 0]
    return A / np.linalg.det(J)[:, None, None]


@dataclass
class FlowFrame:
    """Flow quantities on a lattice at one time; ``mu`` is a scalar or a lattice field."""

    t: float
    lattice: Lattice
    psi: np.ndarray
    rho: np.ndarray
    mu: float | np.ndarray
    jac: np.ndarray | None = None
    _A: np.ndarray | None = None
    _grad_rho: np.ndarray | None = None
    _grad_mu: np.ndarray | None = None

    @property
    def A(self) -> np.ndarray:
        """``(Dpsi_t)^{-1}`` evaluated at lattice points (not at their images)."""
        if self._A is None:
            self._A = np.linalg.inv(self.jac) if self.jac is not None else _adjugate_from_psi(self.lattice, self.psi)
        return self._A

    @property
    def grad_rho(self) -> np.ndarray:
        if self._grad_rho is None:
            self._grad_rho = self.lattice.gradient(self.rho)
        return self._grad_rho

    @property
    def grad_mu(self) -> np.ndarray:
        if self._grad_mu is None:
            if np.ndim(self.mu) == 0:
                self._grad_mu = np.zeros((self.lattice.size, self.lattice.d))
            else:
                self._grad_mu = self.lattice.gradient(self.mu)
        return self._grad_mu


def _lerp_frames(a: FlowFrame, b: FlowFrame, t: float) -> FlowFrame:
    w = (t - a.t) / (b.t - a.t)

    def mix(x, y):
        return None if x is None else (1 - w) * x + w * y

    mu = (1 - w) * a.mu + w * b.mu
    return FlowFrame(t, a.lattice, mix(a.psi, b.psi), mix(a.rho, b.rho), mu, mix(a.jac, b.jac))


class StoredFrames:
    """Frames from precomputed flow samples, linearly interpolated between output times."""

    def __init__(self, lattice: Lattice, times, psi, jac, rho, mu):
        self.lattice = lattice
        self.times = np.asarray(times, dtype=float)
        self._frames = [
            FlowFrame(float(t), lattice, psi[k], rho[k], mu[k], None if jac is None else jac[k])
            for k, t in enumerate(self.times)
        ]
        self._cache: tuple[float, FlowFrame] | None = None

    @classmethod
    def from_flow(cls, flow: DiffeoFlowGrid, affine: AffineFlowData) -> "StoredFrames":
        if affine.rho.shape[1] != flow.lattice.size or not np.allclose(affine.times, flow.times):
            raise TransformError("flow and affine data must share the lattice and time grid")
        return cls(flow.lattice, flow.times, flow.psi, flow.jac, affine.rho, affine.mu)

    def frame(self, t: float) -> FlowFrame:
        if self._cache is not None and self._cache[0] == t:
            return self._cache[1]
        times = self.times
        k = int(np.searchsorted(times, t))
        if k < times.size and abs(times[k] - t) <= 1e-12 * max(1.0, abs(t)):
            fr = self._frames[k]
        elif k > 0 and abs(times[k - 1] - t) <= 1e-12 * max(1.0, abs(t)):
            fr = self._frames[k - 1]
        elif 0 < k < times.size:
            fr = _lerp_frames(self._frames[k - 1], self._frames[k], t)
        else:
            raise TransformError(f"time {t} outside the stored range [{times[0]}, {times[-1]}]")
        self._cache = (t, fr)
        return fr


class StreamingFrames:
    """Frames computed on demand by advancing a flow integrator (forward in time).

    Only ``psi`` and ``rho`` are carried; ``(Dpsi)^{-1}`` comes from lattice
    differences of ``psi`` when a pointwise evaluation needs it.
    """

    def __init__(self, coeffs: Coefficients, driver: PiecewiseLinearPath, lattice: Lattice,
                 substeps: int = 32, box=None, sample_times=None):
        self.lattice = lattice
        self.coeffs = coeffs
        self.driver = driver
        self._integ = FlowIntegrator(coeffs, driver, lattice.points(), substeps, jacobian=False, rho=True, box=box)
        _, s2, _ = coeffs.blocks(driver)
        self._z2 = driver.components(s2)
        self.times = np.asarray(sample_times if sample_times is not None else [0.0, driver.T], dtype=float)
        self._cache: tuple[float, FlowFrame] | None = None
        self._kept: dict[float, np.ndarray] = {}

    def frame(self, t: float) -> FlowFrame:
        if self._cache is not None and self._cache[0] == t:
            return self._cache[1]
        self._integ.advance_to(t)
        mu = float(compute_mu(self.coeffs.nu, self._z2, t))
        fr = FlowFrame(t, self.lattice, self._integ.psi.copy(), self._integ.rho.copy(), mu)
        self._cache = (t, fr)
        if np.any(np.abs(self.times - t) <= 1e-12 * max(1.0, abs(t))):
            self._kept[t] = fr.rho
        return fr

    def rho_at(self, t: float) -> np.ndarray:
        """``rho`` at a sample time already passed, or at a later time (advancing the flow)."""
        for s, rho in self._kept.items():
            if abs(s - t) <= 1e-12 * max(1.0, abs(t)):
                return rho
        return self.frame(t).rho


# --- the robust transformed problem -----------------------------------------------

class TransformedProblem(ConservationLaw):
    """Flux ``e^mu A(x) f(e^-mu (v + rho(x)))`` with ``A = (Dpsi_t(x))^{-1}``; no source.

    Face fluxes are assembled from ``psi`` at cell corners, which makes the
    discrete divergence of every column of ``A`` vanish identically; constant
    states are then preserved exactly when ``rho = 0``.
    """

    def __init__(self, flux: FluxSpec, frames, value_bound: float | None = None):
        self.spec = flux
        self.frames = frames
        self.d = flux.d
        self.value_bound = value_bound
        if frames.lattice.d != flux.d:
            raise TransformError("flux and flow dimensions differ")
        self.range_excursion = 0.0
        self._corner_cache: dict = {}
        self._faces: tuple | None = None

    def sample_times(self) -> np.ndarray:
        return self.frames.times

    # pointwise
    def _local(self, t, x, v):
        fr = self.frames.frame(float(t))
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        A = fr.lattice.interpolate(fr.A, x)
        rho = fr.lattice.interpolate(fr.rho, x)
        w = np.exp(-fr.mu) * (np.asarray(v, dtype=float) + rho)
        self._check_range(w)
        return fr, A, w

    def _check_range(self, w):
        lim = self.spec.valid_range
        if lim is not None and w.size:
            ex = max(lim[0] - float(np.min(w)), float(np.max(w)) - lim[1], 0.0)
            self.range_excursion = max(self.range_excursion, ex)

    def flux(self, t, x, v):
        fr, A, w = self._local(t, x, v)
        return np.exp(fr.mu) * np.einsum("mij,mj->mi", A, self.spec.f(w))

    def flux_dv(self, t, x, v):
        _, A, w = self._local(t, x, v)
        return np.einsum("mij,mj->mi", A, self.spec.df(w))

    def flux_div(self, t, x, v):
        fr, A, w = self._local(t, x, v)
        grad_rho = fr.lattice.interpolate(fr.grad_rho, np.asarray(x).reshape(-1, self.d))
        return np.einsum("mi,mi->m", np.einsum("mij,mj->mi", A, self.spec.df(w)), grad_rho)

    # face coefficients for the solver
    def _corner_stencil(self, grid: Grid):
        if self._faces is None or self._faces[0] != grid:
            lat = self.frames.lattice
            node = grid.node_lattice()
            sten = None if lat == node else lat.axis_matrices(node)
            self._faces = (grid, sten)
        return self._faces[1]

    def _corner_values(self, t: float, grid: Grid):
        key = (t, grid)
        if key in self._corner_cache:
            return self._corner_cache[key]
        fr = self.frames.frame(t)
        sten = self._corner_stencil(grid)
        if sten is None:
            psi, rho = fr.psi, fr.rho
        else:
            lat = self.frames.lattice
            psi, rho = lat.resample(fr.psi, sten), lat.resample(fr.rho, sten)
        shape = grid.node_lattice().shape
        psi = psi.reshape(shape + (self.d,))
        rho = rho.reshape(shape)
        rows, face_rho = [], []
        if self.d == 1:
            dpsi = np.gradient(psi[:, 0], grid.h[0], edge_order=2)
            rows.append((1.0 / dpsi)[:, None])
            face_rho.append(rho)
        else:
            hx, hy = grid.h
            # faces normal to x1 run between corners (i, j) and (i, j + 1)
            d2 = (psi[:, 1:, :] - psi[:, :-1, :]) / hy
            rows.append(np.stack([d2[..., 1], -d2[..., 0]], axis=-1))
            face_rho.append(0.5 * (rho[:, 1:] + rho[:, :-1]))
            d1 = (psi[1:, :, :] - psi[:-1, :, :]) / hx
            rows.append(np.stack([-d1[..., 1], d1[..., 0]], axis=-1))
            face_rho.append(0.5 * (rho[1:, :] + rho[:-1, :]))
        if self.spec.direction is not None:
            rows = [row @ self.spec.direction for row in rows]
        self._corner_cache = {key: (fr.mu, rows, face_rho)}
        return self._corner_cache[key]

    def interface_flux(self, t, grid, axis, vL, vR):
        mu, rows, face_rho = self._corner_values(float(t), grid)
        row, rho = rows[axis], face_rho[axis]
        em = np.exp(-mu)
        out = []
        if self.spec.direction is not None:
            for v in (vL, vR):
                w = em * (v + rho)
                self._check_range(w)
                out.append((np.exp(mu) * row * self.spec.phi(w), row * self.spec.dphi(w)))
            return out[0][0], out[1][0], out[0][1], out[1][1]
        for v in (vL, vR):
            w = em * (v + rho)
            self._check_range(w)
            out.append((np.exp(mu) * np.einsum("...j,...j->...", row, self.spec.f(w)),
                        np.einsum("...j,...j->...", row, self.spec.df(w))))
        return out[0][0], out[1][0], out[0][1], out[1][1]


def build_robust_problem(flux: FluxSpec, flow: DiffeoFlowGrid, affine: AffineFlowData,
                         value_bound: float | None = None) -> TransformedProblem:
    """Transformed problem from stored flow samples."""
    return TransformedProblem(flux, StoredFrames.from_flow(flow, affine), value_bound)


def streaming_problem(flux: FluxSpec, coeffs: Coefficients, driver: PiecewiseLinearPath, lattice: Lattice,
                      substeps: int = 32, value_bound: float | None = None, box=None) -> TransformedProblem:
    """Transformed problem whose flow is integrated in step with the solver."""
    return TransformedProblem(flux, StreamingFrames(coeffs, driver, lattice, substeps, box), value_bound)


# --- changes of unknown -------------------------------------------------------------

def _check_inside(grid: Grid, pts: np.ndarray) -> None:
    lo, hi = np.asarray(grid.origin), np.asarray(grid.upper)
    if np.any(pts < lo - 1e-12) or np.any(pts > hi + 1e-12):
        raise TransformError("transformed points leave the solution grid; enlarge the padding")


def pull_back(grid: Grid, v: np.ndarray, mu: float, rho_at, pre: np.ndarray) -> np.ndarray:
    """``u(y) = e^-mu (v + rho)(pre)`` where ``pre = psi^{-1}(y)`` and ``rho_at`` evaluates rho there."""
    _check_inside(grid, pre)
    return np.exp(-mu) * (grid.sample(v, pre) + rho_at(pre))


def forward_transform(u: GridSolution, flow: DiffeoFlowGrid, affine: AffineFlowData) -> GridSolution:
    """``v(t, x) = e^mu u(t, psi_t(x)) - rho(t, x)`` at each snapshot of ``u``."""
    grid = u.grid
    x = grid.centers().reshape(-1, grid.d)
    out = np.empty_like(u.values)
    for k, t in enumerate(u.times):
        fk = flow.frame_index(float(t))
        img = flow.lattice.interpolate(flow.psi[fk], x)
        _check_inside(grid, img)
        rho = flow.lattice.interpolate(affine.rho[fk], x)
        out[k] = (np.exp(affine.mu[fk]) * grid.sample(u.values[k], img) - rho).reshape(grid.shape)
    return GridSolution(grid, u.times.copy(), out, dict(u.info, transform="forward"))


def inverse_transform(v: GridSolution, flow: DiffeoFlowGrid, affine: AffineFlowData) -> GridSolution:
    """``u(t, y) = e^-mu (v + rho)(t, psi_t^{-1}(y))`` at each snapshot of ``v``."""
    if flow.psi_inv is None:
        raise TransformError("the flow was computed without its inverse")
    grid = v.grid
    y = grid.centers().reshape(-1, grid.d)
    out = np.empty_like(v.values)
    for k, t in enumerate(v.times):
        fk = flow.frame_index(float(t))
        pre = flow.lattice.interpolate(flow.psi_inv[fk], y)
        u = pull_back(grid, v.values[k], affine.mu[fk], lambda p: flow.lattice.interpolate(affine.rho[fk], p, clamp=True), pre)
        out[k] = u.reshape(grid.shape)
    return GridSolution(grid, v.times.copy(), out, dict(v.info, transform="inverse"))


# --- smooth-driver transformation with (t, x)-dependent data -------------------------

@dataclass(frozen=True)
class GeneralFlux:
    """``f(t, x, u)`` and source ``F(t, x, u)`` with u-derivatives; all vectorized over points."""

    d: int
    f: Callable
    f_u: Callable
    F: Callable | None = None
    F_u: Callable | None = None

    @classmethod
    def from_spec(cls, spec: FluxSpec) -> "GeneralFlux":
        return cls(spec.d, lambda t, x, u: spec.f(u), lambda t, x, u: spec.df(u))


class GeneralTransformedProblem(ConservationLaw):
    """Flux ``e^mu A f(t, psi, w)`` and source ``e^mu F(t, psi, w) + flux . grad mu`` with
    ``w = e^-mu (v + rho)`` and ``mu(t, x)`` a lattice field."""

    has_source = True

    def __init__(self, gflux: GeneralFlux, frames: StoredFrames, fd_step: float | None = None):
        self.g = gflux
        self.frames = frames
        self.d = gflux.d
        self.fd_step = fd_step or 1e-3 * min(frames.lattice.spacing)

    def sample_times(self) -> np.ndarray:
        return self.frames.times

    def _local(self, t, x):
        fr = self.frames.frame(float(t))
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        lat = fr.lattice
        mu = lat.interpolate(fr.mu, x) if np.ndim(fr.mu) else np.full(x.shape[0], fr.mu)
        return fr, x, lat.interpolate(fr.A, x), lat.interpolate(fr.psi, x), lat.interpolate(fr.rho, x), mu

    def flux(self, t, x, v):
        _, _, A, psi, rho, mu = self._local(t, x)
        w = np.exp(-mu) * (np.asarray(v, dtype=float) + rho)
        return np.exp(mu)[:, None] * np.einsum("mij,mj->mi", A, self.g.f(t, psi, w))

    def flux_dv(self, t, x, v):
        _, _, A, psi, rho, mu = self._local(t, x)
        w = np.exp(-mu) * (np.asarray(v, dtype=float) + rho)
        return np.einsum("mij,mj->mi", A, self.g.f_u(t, psi, w))

    def flux_div(self, t, x, v):
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        out = np.zeros(x.shape[0])
        for j in range(self.d):
            e = np.zeros(self.d)
            e[j] = self.fd_step
            out += (self.flux(t, x + e, v)[:, j] - self.flux(t, x - e, v)[:, j]) / (2 * self.fd_step)
        return out

    def grad_mu(self, t, x) -> np.ndarray:
        fr = self.frames.frame(float(t))
        return fr.lattice.interpolate(fr.grad_mu, np.asarray(x, dtype=float).reshape(-1, self.d))

    def source(self, t, x, v):
        _, xs, _, psi, rho, mu = self._local(t, x)
        out = np.einsum("mi,mi->m", self.flux(t, xs, v), self.grad_mu(t, xs))
        if self.g.F is not None:
            w = np.exp(-mu) * (np.asarray(v, dtype=float) + rho)
            out = out + np.exp(mu) * self.g.F(t, psi, w)
        return out

    def source_dv(self, t, x, v):
        _, xs, _, psi, rho, mu = self._local(t, x)
        out = np.einsum("mi,mi->m", self.flux_dv(t, xs, v), self.grad_mu(t, xs))
        if self.g.F_u is not None:
            w = np.exp(-mu) * (np.asarray(v, dtype=float) + rho)
            out = out + self.g.F_u(t, psi, w)
        return out


def build_general_transform_c1(
    gflux: GeneralFlux,
    coeffs: Coefficients,
    driver: PiecewiseLinearPath,
    lattice: Lattice,
    out_times,
    nu_field: Callable | None = None,
    substeps: int = 32,
) -> GeneralTransformedProblem:
    """Transformed problem for a smooth driver with rate ``nu(t, x)`` (defaults to the constant ``coeffs.nu``).

    ``mu``, ``rho``, ``psi`` and ``Dpsi`` are integrated jointly on the lattice.
    """
    if gflux.d != coeffs.d:
        raise TransformError("flux and coefficient dimensions differ")
    if nu_field is None:
        nu = coeffs.nu

        def nu_field(t, x):
            return np.broadcast_to(nu, (x.shape[0], nu.size))

    out_times = np.asarray(out_times, dtype=float)
    integ = FlowIntegrator(coeffs, driver, lattice.points(), substeps, jacobian=True, rho=True, nu_field=nu_field)
    psi, jac, rho, mu = [], [], [], []
    for t in out_times:
        integ.advance_to(float(t))
        psi.append(integ.psi.copy())
        jac.append(integ.jac.copy())
        rho.append(integ.rho.copy())
        mu.append(integ.mu_state.copy())
    frames = StoredFrames(lattice, out_times, np.stack(psi), np.stack(jac), np.stack(rho), np.stack(mu))
    return GeneralTransformedProblem(gflux, frames)


# --- debug output --------------------------------------------------------------------

def dump_flux_slice(problem: ConservationLaw, t: float, lattice: Lattice, v0: float, path) -> None:
    """Write ``x, flux, flux_dv, flux_div`` at fixed ``(t, v0)`` over a lattice to CSV."""
    x = lattice.points()
    v = np.full(x.shape[0], float(v0))
    f, a, div = problem.flux(t, x, v), problem.flux_dv(t, x, v), problem.flux_div(t, x, v)
    d = lattice.d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(d)] + [f"f{i + 1}" for i in range(d)]
                   + [f"df{i + 1}" for i in range(d)] + ["div_f"])
        for n in range(x.shape[0]):
            w.writerow([repr(float(q)) for q in (*x[n], *f[n], *a[n], div[n])])
