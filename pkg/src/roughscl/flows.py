"""Flows of diffeomorphisms driven by piecewise-linear signals.

For a driver ``z = (z1, z2, z3)`` and coefficients ``(H, nu, g)`` this module
integrates

* the transport flow ``d psi = -H(psi) dz1`` together with its Jacobian from
  the variational equation ``d Dpsi = -(DH(psi) dz1) Dpsi``,
* the scalar exponent ``mu_t = -nu . (z2_t - z2_0)`` (exact),
* the affine shift ``rho(t, x) = int_0^t exp(mu_r) g(psi_r(x)) dz3_r``.

On every linear piece of the driver the velocity is constant, so the flow
is an ODE flow integrated by classical RK4 with a fixed number of steps per
piece.  Inverse flows are obtained by integrating the same ODE backwards in
time from the query points.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lattice import Lattice
from .roughpath import PiecewiseLinearPath


class FlowError(RuntimeError):
    pass


class FlowEscapeError(FlowError):
    """The flow left the computational box."""

    def __init__(self, time: float, point):
        super().__init__(f"flow left the computational box at t = {time:.6g} (point {point})")
        self.time = time
        self.point = point


class FlowToleranceError(FlowError):
    pass


# --- coefficient fields ------------------------------------------------------

@dataclass(frozen=True)
class VectorField:
    """One column of H: a map R^d -> R^d with its Jacobian ``jac[..., i, j] = d_j H_i``."""

    name: str
    d: int
    value: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScalarField:
    name: str
    d: int
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)


def constant_field(c) -> VectorField:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    d = c.size
    return VectorField(
        "constant",
        d,
        lambda x: np.broadcast_to(c, x.shape).copy(),
        lambda x: np.zeros(x.shape + (d,)),
        {"c": c.tolist()},
    )


def rotation_field(scale: float = 1.0) -> VectorField:
    """``scale * (-x2, x1)``; its flow under ``dpsi = -H dz`` is a clockwise rotation by ``scale * z``."""
    gen = scale * np.array([[0.0, -1.0], [1.0, 0.0]])

    def value(x):
        out = np.empty_like(x)
        out[..., 0] = -scale * x[..., 1]
        out[..., 1] = scale * x[..., 0]
        return out

    def jac(x):
        return np.broadcast_to(gen, x.shape[:-1] + (2, 2))

    return VectorField("rotation", 2, value, jac, {"scale": scale})


def stream_gaussian_field(amplitude: float = 1.0, center=(0.0, 0.0), width: float = 0.5) -> VectorField:
    """Perpendicular gradient ``(d2 s, -d1 s)`` of a Gaussian stream function (divergence free)."""
    c = np.asarray(center, dtype=float)
    s2 = width**2

    def stream(x):
        r = x - c
        return amplitude * np.exp(-0.5 * np.sum(r * r, axis=-1) / s2), r

    def value(x):
        s, r = stream(x)
        return np.stack([-r[..., 1] * s / s2, r[..., 0] * s / s2], axis=-1)

    def jac(x):
        s, r = stream(x)
        ds = -r * (s / s2)[..., None]
        out = np.empty(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = -r[..., 1] * ds[..., 0] / s2
        out[..., 0, 1] = -s / s2 - r[..., 1] * ds[..., 1] / s2
        out[..., 1, 0] = s / s2 + r[..., 0] * ds[..., 0] / s2
        out[..., 1, 1] = r[..., 0] * ds[..., 1] / s2
        return out

    return VectorField(
        "stream_gaussian", 2, value, jac, {"amplitude": amplitude, "center": c.tolist(), "width": width}
    )


def constant_scalar(c: float, d: int) -> ScalarField:
    return ScalarField(
        "constant",
        d,
        lambda x: np.full(x.shape[:-1], float(c)),
        lambda x: np.zeros(x.shape),
        {"c": c},
    )


def bump_scalar(amplitude: float, center, width: float) -> ScalarField:
    """Gaussian bump ``amplitude * exp(-|x - center|^2 / (2 width^2))``."""
    c = np.atleast_1d(np.asarray(center, dtype=float))

    scale = -0.5 / width**2

    def value(x):
        r2 = sum((x[..., i] - c[i]) ** 2 for i in range(c.size))
        return amplitude * np.exp(scale * r2)

    def grad(x):
        return -(x - c) / width**2 * value(x)[..., None]

    return ScalarField(
        "bump", c.size, value, grad, {"amplitude": amplitude, "center": c.tolist(), "width": width}
    )


def sine_scalar(frequency: float = 1.0, amplitude: float = 1.0) -> ScalarField:
    """``amplitude * sin(frequency * x_1)``."""

    def value(x):
        return amplitude * np.sin(frequency * x[..., 0])

    def grad(x):
        out = np.zeros(x.shape)
        out[..., 0] = amplitude * frequency * np.cos(frequency * x[..., 0])
        return out

    return ScalarField("sine", 1, value, grad, {"frequency": frequency, "amplitude": amplitude})


VECTOR_FIELDS = {
    "constant": lambda d, **kw: constant_field(kw.get("c", [1.0] * d)),
    "rotation": lambda d, **kw: rotation_field(kw.get("scale", 1.0)),
    "stream_gaussian": lambda d, **kw: stream_gaussian_field(
        kw.get("amplitude", 1.0), kw.get("center", (0.0, 0.0)), kw.get("width", 0.5)
    ),
}

SCALAR_FIELDS = {
    "constant": lambda d, **kw: constant_scalar(kw.get("c", 1.0), d),
    "bump": lambda d, **kw: bump_scalar(
        kw.get("amplitude", 1.0), kw.get("center", [0.0] * d), kw.get("width", 0.25)
    ),
    "sine": lambda d, **kw: sine_scalar(kw.get("frequency", 1.0), kw.get("amplitude", 1.0)),
}


@dataclass(frozen=True)
class Coefficients:
    """Noise coefficients: transport columns H, constant rates nu and affine fields g."""

    d: int
    H_fields: tuple[VectorField, ...] = ()
    nu: np.ndarray = field(default_factory=lambda: np.zeros(0))
    g_fields: tuple[ScalarField, ...] = ()

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"only d in (1, 2) is supported, got {self.d}")
        object.__setattr__(self, "nu", np.atleast_1d(np.asarray(self.nu, dtype=float)))
        object.__setattr__(self, "H_fields", tuple(self.H_fields))
        object.__setattr__(self, "g_fields", tuple(self.g_fields))
        for f in self.H_fields + self.g_fields:
            if f.d != self.d:
                raise ValueError(f"field {f.name} has dimension {f.d}, expected {self.d}")

    @property
    def n1(self) -> int:
        return len(self.H_fields)

    @property
    def n2(self) -> int:
        return self.nu.size

    @property
    def n3(self) -> int:
        return len(self.g_fields)

    @property
    def n_driver(self) -> int:
        return self.n1 + self.n2 + self.n3

    @property
    def has_transport(self) -> bool:
        return self.n1 > 0

    @property
    def has_affine(self) -> bool:
        return self.n3 > 0

    def blocks(self, driver: PiecewiseLinearPath):
        """Split a driver into its (z1, z2, z3) blocks."""
        if driver.dim != self.n_driver:
            raise ValueError(f"driver has {driver.dim} components, coefficients need {self.n_driver}")
        n1, n2 = self.n1, self.n2
        return slice(0, n1), slice(n1, n1 + n2), slice(n1 + n2, self.n_driver)

    def H(self, x):
        x = np.asarray(x, dtype=float)
        if not self.H_fields:
            return np.zeros(x.shape + (0,))
        return np.stack([f.value(x) for f in self.H_fields], axis=-1)

    def DH(self, x):
        """``DH[..., i, k, j] = d_j H_i^k``."""
        x = np.asarray(x, dtype=float)
        if not self.H_fields:
            return np.zeros(x.shape[:-1] + (self.d, 0, self.d))
        return np.stack([f.jac(x) for f in self.H_fields], axis=-2)

    def H_dot(self, x, v):
        """``sum_k v_k H^k(x)`` without stacking the fields."""
        terms = [vk * f.value(x) for f, vk in zip(self.H_fields, v) if vk]
        return sum(terms[1:], terms[0]) if terms else np.zeros(np.shape(x))

    def DH_dot(self, x, v):
        """``sum_k v_k DH^k(x)``, shape ``(..., d, d)``."""
        terms = [vk * f.jac(x) for f, vk in zip(self.H_fields, v) if vk]
        return sum(terms[1:], terms[0]) if terms else np.zeros(np.shape(x) + (self.d,))

    def g(self, x):
        x = np.asarray(x, dtype=float)
        if not self.g_fields:
            return np.zeros(x.shape[:-1] + (0,))
        return np.stack([f.value(x) for f in self.g_fields], axis=-1)

    def grad_g(self, x):
        x = np.asarray(x, dtype=float)
        if not self.g_fields:
            return np.zeros(x.shape[:-1] + (0, self.d))
        return np.stack([f.grad(x) for f in self.g_fields], axis=-2)

    def div_H(self, x) -> np.ndarray:
        """Analytic divergence of every column, shape ``(..., n1)``."""
        return np.trace(self.DH(x), axis1=-3, axis2=-1)

    def describe(self) -> dict:
        return {
            "d": self.d,
            "H": [{"name": f.name, **f.params} for f in self.H_fields],
            "nu": self.nu.tolist(),
            "g": [{"name": f.name, **f.params} for f in self.g_fields],
        }


def build_coefficients(spec: dict) -> Coefficients:
    """Coefficients from a config mapping, e.g.
    ``{"d": 2, "H": [{"name": "rotation"}], "nu": [0.5], "g": [{"name": "bump", "width": 0.3}]}``."""
    d = int(spec["d"])
    H = [VECTOR_FIELDS[h["name"]](d, **{k: v for k, v in h.items() if k != "name"}) for h in spec.get("H", [])]
    g = [SCALAR_FIELDS[s["name"]](d, **{k: v for k, v in s.items() if k != "name"}) for s in spec.get("g", [])]
    return Coefficients(d, tuple(H), np.asarray(spec.get("nu", []), dtype=float), tuple(g))


def divergence_residual(coeffs: Coefficients, pts, step: float = 1e-5) -> float:
    """Max |div H| over points, by central differences of the field values (independent of DH)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    total = np.zeros(pts.shape[:-1] + (coeffs.n1,))
    for j in range(coeffs.d):
        e = np.zeros(coeffs.d)
        e[j] = step
        total += (coeffs.H(pts + e)[..., j, :] - coeffs.H(pts - e)[..., j, :]) / (2 * step)
    return float(np.max(np.abs(total))) if total.size else 0.0


# --- integration --------------------------------------------------------------

def compute_mu(nu, z2: PiecewiseLinearPath, t) -> np.ndarray | float:
    """``mu_t = -nu . (z2_t - z2_0)``; exact for constant nu."""
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    if nu.size == 0:
        return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
    out = -(z2(t) - z2.values[0]) @ nu
    return out if np.ndim(t) else float(out)


def _batched_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b`` for stacks of tiny square matrices (unrolled; numpy's gufunc is slow here)."""
    d = a.shape[-1]
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    if d == 2:
        a00, a01, a10, a11 = a[..., 0, 0], a[..., 0, 1], a[..., 1, 0], a[..., 1, 1]
        b00, b01, b10, b11 = b[..., 0, 0], b[..., 0, 1], b[..., 1, 0], b[..., 1, 1]
        out[..., 0, 0] = a00 * b00 + a01 * b10
        out[..., 0, 1] = a00 * b01 + a01 * b11
        out[..., 1, 0] = a10 * b00 + a11 * b10
        out[..., 1, 1] = a10 * b01 + a11 * b11
        return out
    for i in range(d):
        for k in range(d):
            acc = a[..., i, 0] * b[..., 0, k]
            for j in range(1, d):
                acc = acc + a[..., i, j] * b[..., j, k]
            out[..., i, k] = acc
    return out


class FlowIntegrator:
    """Forward RK4 integration of (psi, Dpsi, rho) at fixed points, advanced monotonically in time.

    With ``nu_field`` given, ``mu`` becomes a per-point state
    ``mu(t, x) = -int_0^t nu(r, psi_r(x)) dz2_r`` integrated with the flow.
    """

    def __init__(
        self,
        coeffs: Coefficients,
        driver: PiecewiseLinearPath,
        points: np.ndarray,
        substeps: int = 32,
        jacobian: bool = True,
        rho: bool = True,
        box: tuple[np.ndarray, np.ndarray] | None = None,
        nu_field: Callable | None = None,
    ):
        if substeps < 1:
            raise ValueError("substeps must be >= 1")
        self.coeffs = coeffs
        self.driver = driver
        self.s1, self.s2, self.s3 = coeffs.blocks(driver)
        self.substeps = substeps
        self.points = np.array(points, dtype=float).reshape(-1, coeffs.d)
        self.with_jac = jacobian
        self.with_rho = rho and coeffs.has_affine
        self.nu_field = nu_field
        self.box = box
        self.reset()

    def reset(self):
        n, d = self.points.shape
        self.t = 0.0
        self.psi = self.points.copy()
        self.jac = np.broadcast_to(np.eye(d), (n, d, d)).copy() if self.with_jac else None
        self.rho = np.zeros(n)
        self.mu_state = np.zeros(n) if self.nu_field is not None else None

    def mu(self, t):
        """Spatially constant mu; with a (t, x) rate this is the per-point state instead."""
        if self.nu_field is not None:
            return self.mu_state
        return compute_mu(self.coeffs.nu, self.driver.components(self.s2), t)

    def _rhs(self, r, state, vel):
        psi, jac, rho, mu = state
        v1 = vel[self.s1]
        out = [None, None, None, None]
        if self.coeffs.has_transport and np.any(v1):
            out[0] = -self.coeffs.H_dot(psi, v1)
            if jac is not None:
                out[1] = -_batched_matmul(self.coeffs.DH_dot(psi, v1), jac)
        if mu is not None:
            out[3] = -(np.asarray(self.nu_field(r, psi)).reshape(psi.shape[0], -1) @ vel[self.s2])
        if self.with_rho:
            weight = np.exp(mu) if mu is not None else np.exp(self.mu(r))
            out[2] = weight * (self.coeffs.g(psi) @ vel[self.s3])
        return out

    def _rk4(self, t, h, vel):
        y0 = [self.psi, self.jac, self.rho if self.with_rho else None, self.mu_state]

        def shift(ks, c):
            return [y if (y is None or k is None) else y + c * k for y, k in zip(y0, ks)]

        k1 = self._rhs(t, y0, vel)
        k2 = self._rhs(t + h / 2, shift(k1, h / 2), vel)
        k3 = self._rhs(t + h / 2, shift(k2, h / 2), vel)
        k4 = self._rhs(t + h, shift(k3, h), vel)
        new = []
        for i, y in enumerate(y0):
            if y is None or k1[i] is None:
                new.append(y)
            else:
                new.append(y + (h / 6) * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]))
        self.psi, self.jac = new[0], new[1]
        if self.with_rho:
            self.rho = new[2]
        self.mu_state = new[3]

    def advance_to(self, t_target: float) -> None:
        if t_target < self.t - 1e-14:
            self.reset()
        drv = self.driver
        t_target = min(float(t_target), drv.T)
        while self.t < t_target - 1e-15:
            k = int(np.searchsorted(drv.times, self.t, side="right") - 1)
            k = min(k, drv.n_segments - 1)
            seg_len = drv.times[k + 1] - drv.times[k]
            end = min(t_target, drv.times[k + 1])
            n = max(1, int(np.ceil(self.substeps * (end - self.t) / seg_len - 1e-9)))
            h = (end - self.t) / n
            vel = drv.velocity(k)
            for i in range(n):
                self._rk4(self.t + i * h, h, vel)
            self.t = end if end < drv.times[k + 1] else float(drv.times[k + 1])
            self._check_box()
        self.t = max(self.t, t_target)

    def _check_box(self):
        if self.box is None:
            return
        lo, hi = (np.asarray(b, dtype=float) for b in self.box)
        outside = np.any((self.psi < lo) | (self.psi > hi), axis=-1)
        if np.any(outside):
            raise FlowEscapeError(self.t, self.psi[outside][0].tolist())


def integrate_points(
    coeffs: Coefficients,
    driver: PiecewiseLinearPath,
    pts: np.ndarray,
    t_from: float,
    t_to: float,
    substeps: int = 32,
) -> np.ndarray:
    """Transport points from time ``t_from`` to ``t_to`` (either direction) along ``dpsi = -H(psi) dz1``."""
    pts = np.array(pts, dtype=float).reshape(-1, coeffs.d)
    if not coeffs.has_transport or t_from == t_to:
        return pts
    s1, _, _ = coeffs.blocks(driver)
    times = driver.times
    sign = 1.0 if t_to > t_from else -1.0

    def rhs(y, v1):
        return -coeffs.H_dot(y, v1)

    t = t_from
    y = pts
    while sign * (t_to - t) > 1e-15:
        if sign > 0:
            k = min(int(np.searchsorted(times, t, side="right") - 1), driver.n_segments - 1)
            end = min(t_to, times[k + 1])
        else:
            k = max(int(np.searchsorted(times, t, side="left") - 1), 0)
            end = max(t_to, times[k])
        seg_len = times[k + 1] - times[k]
        n = max(1, int(np.ceil(substeps * abs(end - t) / seg_len - 1e-9)))
        h = (end - t) / n
        v1 = driver.velocity(k)[s1]
        if np.any(v1):
            for _ in range(n):
                k1 = rhs(y, v1)
                k2 = rhs(y + h / 2 * k1, v1)
                k3 = rhs(y + h / 2 * k2, v1)
                k4 = rhs(y + h * k3, v1)
                y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = end
    return y


def inverse_flow(coeffs, driver, pts, t: float, substeps: int = 32) -> np.ndarray:
    """``psi_t^{-1}(pts)`` by backward integration from time t to 0."""
    return integrate_points(coeffs, driver, pts, t, 0.0, substeps)


# --- sampled flows --------------------------------------------------------------

@dataclass(frozen=True)
class DiffeoFlowGrid:
    """Flow samples on a lattice at a sequence of output times."""

    lattice: Lattice
    times: np.ndarray
    psi: np.ndarray
    jac: np.ndarray
    psi_inv: np.ndarray | None
    coeffs: Coefficients = field(repr=False)
    driver: PiecewiseLinearPath = field(repr=False)
    substeps: int = 32

    @property
    def jac_inv_at_psi(self) -> np.ndarray:
        """``D(psi_t^{-1})`` at ``psi_t(x)``, i.e. the matrix inverse of ``Dpsi_t(x)``."""
        return np.linalg.inv(self.jac)

    def frame_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"time {t} is not an output time of this flow")
        return k

    def det(self) -> np.ndarray:
        return np.linalg.det(self.jac)

    def volume_defect(self) -> float:
        return float(np.max(np.abs(self.det() - 1.0)))

    def inverse_defect(self, substeps: int | None = None) -> float:
        """``max |psi_t^{-1}(psi_t(x)) - x|`` with the inverse integrated backwards from the images."""
        sub = substeps or self.substeps
        pts = self.lattice.points()
        worst = 0.0
        for k, t in enumerate(self.times):
            back = inverse_flow(self.coeffs, self.driver, self.psi[k], t, sub)
            worst = max(worst, float(np.max(np.linalg.norm(back - pts, axis=-1))))
        return worst

    def to_csv(self, path) -> None:
        pts = self.lattice.points()
        det = self.det()
        d = self.lattice.d
        header = ["t"] + [f"x{i + 1}" for i in range(d)] + [f"psi{i + 1}" for i in range(d)] + ["det_jac"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, t in enumerate(self.times):
                for n in range(pts.shape[0]):
                    w.writerow(
                        [repr(float(t))]
                        + [repr(float(v)) for v in pts[n]]
                        + [repr(float(v)) for v in self.psi[k, n]]
                        + [repr(float(det[k, n]))]
                    )


@dataclass(frozen=True)
class AffineFlowData:
    times: np.ndarray
    mu: np.ndarray
    rho: np.ndarray
    quadrature_substeps: int


def _collect(integ: FlowIntegrator, out_times) -> tuple[list, list, list]:
    psis, jacs, rhos = [], [], []
    for t in out_times:
        integ.advance_to(float(t))
        psis.append(integ.psi.copy())
        jacs.append(None if integ.jac is None else integ.jac.copy())
        rhos.append(integ.rho.copy())
    return psis, jacs, rhos


def _check_times(out_times, driver) -> np.ndarray:
    out_times = np.asarray(out_times, dtype=float)
    if np.any(np.diff(out_times) < 0) or out_times[0] < 0 or out_times[-1] > driver.T + 1e-12:
        raise ValueError("output times must be nondecreasing within [0, T]")
    return out_times


def solve_transport_flow(
    coeffs: Coefficients,
    driver: PiecewiseLinearPath,
    lattice: Lattice,
    out_times,
    substeps: int = 32,
    inverse: bool = True,
    box=None,
    tol_vol: float | None = None,
    tol_inv: float | None = None,
) -> DiffeoFlowGrid:
    """Sample ``psi_t``, ``Dpsi_t`` and ``psi_t^{-1}`` on a lattice at the output times."""
    out_times = _check_times(out_times, driver)
    integ = FlowIntegrator(coeffs, driver, lattice.points(), substeps, jacobian=True, rho=False, box=box)
    psis, jacs, _ = _collect(integ, out_times)
    pts = lattice.points()
    psi_inv = None
    if inverse:
        psi_inv = np.stack([inverse_flow(coeffs, driver, pts, t, substeps) for t in out_times])
    flow = DiffeoFlowGrid(lattice, out_times, np.stack(psis), np.stack(jacs), psi_inv, coeffs, driver, substeps)
    if tol_vol is not None:
        defect = flow.volume_defect()
        if defect > tol_vol:
            raise FlowToleranceError(f"|det Dpsi - 1| = {defect:.3g} exceeds {tol_vol:.3g}")
    if tol_inv is not None:
        defect = flow.inverse_defect()
        if defect > tol_inv:
            raise FlowToleranceError(f"inverse defect {defect:.3g} exceeds {tol_inv:.3g}")
    return flow


def compute_rho(
    coeffs: Coefficients,
    flow: DiffeoFlowGrid,
    driver: PiecewiseLinearPath | None = None,
    quadrature_substeps: int | None = None,
) -> AffineFlowData:
    """``mu`` and ``rho`` on the flow's lattice and output times.

    ``rho`` is integrated jointly with the flow, so each linear piece is
    covered by ``quadrature_substeps`` RK4 (Simpson-type) quadrature steps.
    """
    driver = flow.driver if driver is None else driver
    sub = quadrature_substeps or flow.substeps
    _, s2, _ = coeffs.blocks(driver)
    mu = np.asarray(compute_mu(coeffs.nu, driver.components(s2), flow.times), dtype=float)
    if not coeffs.has_affine:
        rho = np.zeros((flow.times.size, flow.lattice.size))
    else:
        integ = FlowIntegrator(coeffs, driver, flow.lattice.points(), sub, jacobian=False, rho=True)
        _, _, rhos = _collect(integ, flow.times)
        rho = np.stack(rhos)
    return AffineFlowData(flow.times, mu, rho, sub)


def solve_flows(coeffs, driver, lattice, out_times, substeps: int = 32, inverse: bool = True, box=None):
    """Transport flow and affine data in one call."""
    flow = solve_transport_flow(coeffs, driver, lattice, out_times, substeps, inverse, box)
    return flow, compute_rho(coeffs, flow, driver, substeps)


# --- audits ---------------------------------------------------------------------

def audit_divergence_identity(flow: DiffeoFlowGrid, g_test: Callable, frame: int = -1, margin: int = 2) -> dict:
    """Finite-difference residuals of the volume-preserving divergence identities.

    (a) ``max |div((Dpsi_t) o psi_t^{-1})|`` (column-wise divergence),
    (b) ``max |div(g o psi_t) - div((Dpsi_t o psi_t^{-1}) g) o psi_t|``.

    ``Dpsi_t`` at ``psi_t^{-1}(y)`` is integrated exactly from the inverse
    points, so only the finite differences and (for (b)) one bilinear
    interpolation contribute to the residual.
    """
    lat = flow.lattice
    if lat.d != 2:
        raise ValueError("the divergence audit needs d = 2")
    if flow.psi_inv is None:
        raise ValueError("flow was computed without inverse")
    k = frame % flow.times.size
    t = float(flow.times[k])
    y = lat.points()
    pre = flow.psi_inv[k]
    integ = FlowIntegrator(flow.coeffs, flow.driver, pre, flow.substeps, jacobian=True, rho=False)
    integ.advance_to(t)
    B = integ.jac  # B[n, a, b] = d_b psi_a at psi^{-1}(y)

    inner = np.zeros(lat.shape, dtype=bool)
    inner[margin:-margin, margin:-margin] = True
    inner = inner.ravel()

    grad_B = lat.gradient(B)  # [n, a, b, c] = d_c B[a, b]
    div_B = np.einsum("njij->ni", grad_B)
    res_a = float(np.max(np.abs(div_B[inner])))

    g_psi = g_test(flow.psi[k])
    div_g_psi = np.einsum("nii->n", lat.gradient(g_psi))
    Bg = np.einsum("nab,nb->na", B, g_test(y))
    div_Bg = np.einsum("nii->n", lat.gradient(Bg))
    psi_k = flow.psi[k]
    lo = np.asarray(lat.origin) + margin * np.asarray(lat.spacing)
    hi = np.asarray(lat.upper) - margin * np.asarray(lat.spacing)
    ok = inner & np.all((psi_k >= lo) & (psi_k <= hi), axis=-1)
    at_psi = lat.interpolate(div_Bg, psi_k[ok])
    res_b = float(np.max(np.abs(div_g_psi[ok] - at_psi))) if np.any(ok) else 0.0
    return {"t": t, "h": float(max(lat.spacing)), "residual_a": res_a, "residual_b": res_b}


def flow_stability_gap(
    coeffs: Coefficients,
    driver_a: PiecewiseLinearPath,
    driver_b: PiecewiseLinearPath,
    lattice: Lattice,
    out_times=None,
    substeps: int = 32,
) -> dict:
    """Sup-norm gaps ``|psi^a - psi^b|``, ``|Dpsi^a - Dpsi^b|``, ``|(psi^a)^{-1} - (psi^b)^{-1}|``."""
    if out_times is None:
        out_times = np.unique(np.concatenate([driver_a.times, driver_b.times]))
    fa = solve_transport_flow(coeffs, driver_a, lattice, out_times, substeps)
    fb = solve_transport_flow(coeffs, driver_b, lattice, out_times, substeps)

    def sup(a, b):
        return float(np.max(np.abs(a - b)))

    return {
        "psi": sup(fa.psi, fb.psi),
        "jac": sup(fa.jac, fb.jac),
        "psi_inv": sup(fa.psi_inv, fb.psi_inv),
    }
