"""Sampled stability constants, a-priori bounds and hypothesis checks for problems of the form
``dv/dt + div f(t, x, v) = F(t, x, v)``.

Every sup-norm here is a maximum over a finite lattice of the computational
box times ``[-V, V]`` times the problem's sample times, so it is a lower
estimate of the true supremum that increases as the lattice is refined.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .lattice import Lattice


_trapz = getattr(np, "trapezoid", None) or np.trapz


def dimension_constant(d: int) -> float:
    return 0.5 * np.pi * d


@dataclass(frozen=True)
class StabilityConstants:
    kappa0: float
    kappa: float
    M: float
    V: float
    Cd: float
    U_t: tuple[float, ...] = ()
    V_t: tuple[float, ...] = ()

    def __post_init__(self):
        for name in ("kappa0", "kappa", "M", "V", "Cd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HypothesisReport:
    entries: tuple[dict, ...]
    box: tuple[tuple[float, ...], tuple[float, ...]]
    value_range: float
    threshold: float
    caveat: str = "sampled on the listed box and value range only"

    @property
    def passed(self) -> bool:
        return all(e["pass"] for e in self.entries)

    def get(self, name: str) -> dict:
        return next(e for e in self.entries if e["name"] == name)

    def to_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


# --- sampling ---------------------------------------------------------------------------

@dataclass
class _Samples:
    """Evaluator values on ``times x lattice x v-grid``."""

    lattice: Lattice
    v: np.ndarray
    times: np.ndarray
    dfdv: np.ndarray          # (nt, nv, m, d)
    G: np.ndarray             # F - div f, (nt, nv, m)
    dGdv: np.ndarray          # (nt, nv, m)
    dFdv: np.ndarray          # (nt, nv, m)
    div: np.ndarray           # div f, (nt, nv, m)
    ddivdv: np.ndarray        # (nt, nv, m)
    G0: np.ndarray            # (nt, m)


def _sample(problem, box, V: float, n: int = 33, nv: int = 17, times=None, step: float | None = None) -> _Samples:
    lat = Lattice.from_box(box[0], box[1], n)
    x = lat.points()
    m = x.shape[0]
    vs = np.linspace(-V, V, nv)
    times = np.atleast_1d(problem.sample_times() if times is None else times).astype(float)
    step = step or 1e-5 * max(1.0, V)
    has_src = getattr(problem, "has_source", False)

    def G_of(t, v):
        vv = np.full(m, v)
        src = problem.source(t, x, vv) if has_src else 0.0
        return src - problem.flux_div(t, x, vv)

    out = {k: [] for k in ("dfdv", "G", "dGdv", "dFdv", "div", "ddivdv", "G0")}
    for t in times:
        t = float(t)
        rows = {k: [] for k in ("dfdv", "G", "dGdv", "dFdv", "div", "ddivdv")}
        for v in vs:
            vv = np.full(m, v)
            rows["dfdv"].append(problem.flux_dv(t, x, vv))
            div = problem.flux_div(t, x, vv)
            rows["div"].append(div)
            src = problem.source(t, x, vv) if has_src else np.zeros(m)
            rows["G"].append(src - div)
            rows["dFdv"].append(problem.source_dv(t, x, vv) if has_src else np.zeros(m))
            dp = problem.flux_div(t, x, vv + step)
            dm = problem.flux_div(t, x, vv - step)
            rows["ddivdv"].append((dp - dm) / (2 * step))
            rows["dGdv"].append((G_of(t, v + step) - G_of(t, v - step)) / (2 * step))
        for k, val in rows.items():
            out[k].append(np.stack(val))
        out["G0"].append(G_of(t, 0.0))
    return _Samples(lat, vs, times, *(np.stack(out[k]) for k in
                                      ("dfdv", "G", "dGdv", "dFdv", "div", "ddivdv", "G0")))


def _sup(a) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def _grad_dfdv_sup(s: _Samples) -> float:
    best = 0.0
    for it in range(s.times.size):
        for iv in range(s.v.size):
            J = s.lattice.gradient(s.dfdv[it, iv])  # (m, d, d)
            best = max(best, float(np.max(np.sqrt(np.sum(J * J, axis=(-2, -1))))))
    return best


def _grad_G_profile(s: _Samples) -> np.ndarray:
    """``J(t) = int sup_v |grad_x (F - div f)(t, x, v)| dx`` at each sample time."""
    cell = float(np.prod(s.lattice.spacing))
    out = np.zeros(s.times.size)
    for it in range(s.times.size):
        worst = np.zeros(s.lattice.size)
        for iv in range(s.v.size):
            g = s.lattice.gradient(s.G[it, iv])
            worst = np.maximum(worst, np.linalg.norm(g, axis=-1))
        out[it] = float(np.sum(worst)) * cell
    return out


def _G_profile(s: _Samples) -> np.ndarray:
    cell = float(np.prod(s.lattice.spacing))
    return np.array([float(np.sum(np.max(np.abs(s.G[it]), axis=0))) * cell for it in range(s.times.size)])


# --- constants ----------------------------------------------------------------------------

def estimate_constants(problem_a, problem_b, box, value_range: float, n: int = 33, nv: int = 17,
                       times=None, U_t=(), V_t=()) -> StabilityConstants:
    """``kappa0`` from ``problem_a``; ``kappa`` from both; ``M`` is the sampled wavespeed of ``problem_b``."""
    d = len(np.atleast_1d(box[0]))
    sa = _sample(problem_a, box, value_range, n, nv, times)
    sb = sa if problem_b is problem_a else _sample(problem_b, box, value_range, n, nv, times)
    kappa0 = (2 * d + 1) * _grad_dfdv_sup(sa) + _sup(sa.dFdv)
    kappa = _sup(sa.dFdv) + _sup(sb.ddivdv - sa.ddivdv)
    M = float(np.max(np.linalg.norm(sb.dfdv, axis=-1)))
    return StabilityConstants(kappa0, kappa, M, float(value_range), dimension_constant(d),
                              tuple(float(u) for u in U_t), tuple(float(v) for v in V_t))


def linf_rate(problem, box, value_range: float, n: int = 33, nv: int = 17, times=None) -> float:
    """``sup |(div f - F)(., ., 0)| + sup |d_v (div f - F)|`` (the growth rate of the sup-norm bound)."""
    s = _sample(problem, box, value_range, n, nv, times)
    return _sup(s.G0) + _sup(s.dGdv)


def linf_bound(u0_linf: float, M: float, T: float) -> float:
    return (u0_linf + 1.0) * float(np.exp(2.0 * M * T))


def gradient_integral(problem, box, value_range: float, t: float, kappa0: float,
                      n: int = 33, nv: int = 17, nt: int = 9) -> float:
    """``int_0^t e^{kappa0 (t - r)} int |grad_x (F - div f)(r, x, .)|_inf dx dr`` by trapezoid in r."""
    if t <= 0:
        return 0.0
    r = np.linspace(0.0, t, nt)
    J = _grad_G_profile(_sample(problem, box, value_range, n, nv, r))
    return float(_trapz(np.exp(kappa0 * (t - r)) * J, r))


def tv_bound(tv_u0: float, kappa0: float, t: float, integral_term: float, d: int = 1) -> float:
    return tv_u0 * float(np.exp(kappa0 * t)) + dimension_constant(d) * integral_term


def exp_difference_quotient(a: float, b: float, t: float) -> float:
    """``(e^{at} - e^{bt}) / (a - b)``, continuous across ``a = b`` where it equals ``t e^{at}``."""
    if abs(a - b) < 1e-12:
        return t * float(np.exp(a * t))
    lo = min(a, b)
    return float(np.exp(lo * t) * np.expm1(abs(a - b) * t) / abs(a - b))


def local_stability_bound(
    t: float,
    kappa0: float,
    kappa: float,
    u0_gap: float,
    flux_gap: float,
    tv_u0: float,
    d: int = 1,
    r=None,
    grad_profile=None,
    defect_profile=None,
) -> float:
    """Right side of the localized L1 stability estimate between two entropy solutions.

    ``u0_gap`` is the L1 distance of the data on the enlarged ball, ``flux_gap``
    the sup of ``|d_u(f - g)|`` over the cone, ``grad_profile(r)`` the integral of
    ``|grad_x (F - div f)|`` and ``defect_profile(r)`` the ball integral of
    ``|(F - G) - div(f - g)|``, both sampled on ``r`` in ``[0, t]``.
    """
    total = float(np.exp(kappa * t)) * u0_gap
    inner = exp_difference_quotient(kappa0, kappa, t) * tv_u0
    if r is not None and grad_profile is not None:
        w = np.array([exp_difference_quotient(kappa0, kappa, t - ri) for ri in r])
        inner += dimension_constant(d) * float(_trapz(w * np.asarray(grad_profile), r))
    total += flux_gap * inner
    if r is not None and defect_profile is not None:
        total += float(_trapz(np.exp(kappa * (t - np.asarray(r))) * np.asarray(defect_profile), r))
    return total


def rate_bound(l1_u0_gap: float, K: float, tv_u0: float, rough_dist: float) -> float:
    return l1_u0_gap + K * tv_u0 * rough_dist


# --- hypotheses -------------------------------------------------------------------------------

def validate_hypotheses(problem, box, value_range: float, n: int = 33, nv: int = 17, times=None,
                        threshold: float = 1e8) -> HypothesisReport:
    """Sampled sizes of the quantities the well-posedness hypotheses require to be finite."""
    s = _sample(problem, box, value_range, n, nv, times)
    r = s.times
    J = _grad_G_profile(s)
    I = _G_profile(s)

    def integral(p):
        return float(_trapz(p, r)) if r.size > 1 else 0.0

    sup_f = 0.0
    x = s.lattice.points()
    for t in r:
        for v in s.v:
            sup_f = max(sup_f, _sup(problem.flux(float(t), x, np.full(x.shape[0], v))))
    rows = [
        ("H1", "sup |f|", sup_f),
        ("H1", "sup |d_u f|", float(np.max(np.linalg.norm(s.dfdv, axis=-1)))),
        ("H1", "sup |F - div f|", _sup(s.G)),
        ("H1", "sup |d_u (F - div f)|", _sup(s.dGdv)),
        ("H2*", "sup |grad d_u f|", _grad_dfdv_sup(s)),
        ("H2*", "sup |d_u F|", _sup(s.dFdv)),
        ("H2*", "int int |grad (F - div f)|", integral(J)),
        ("H3", "sup |(div f - F)(., ., 0)|", _sup(s.G0)),
        ("H3", "sup |d_u (div f - F)|", _sup(s.dGdv)),
        ("H4", "int int |F - div f|", integral(I)),
    ]
    entries = tuple(
        {"hypothesis": h, "name": name, "value": val, "finite": bool(np.isfinite(val)),
         "pass": bool(np.isfinite(val) and val <= threshold)}
        for h, name, val in rows
    )
    lo, hi = (tuple(float(q) for q in np.atleast_1d(b)) for b in box)
    return HypothesisReport(entries, (lo, hi), float(value_range), threshold)


# --- audit records ------------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundAudit:
    benchmark: str
    name: str
    bound: float
    measured: float
    allowance: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.measured <= self.bound + self.allowance)

    def to_dict(self) -> dict:
        return {"benchmark": self.benchmark, "name": self.name, "bound": self.bound, "measured": self.measured,
                "allowance": self.allowance, "pass": self.passed, **self.details}


def write_audit_report(audits, path) -> None:
    Path(path).write_text(json.dumps([a.to_dict() for a in audits], indent=2, sort_keys=True))
