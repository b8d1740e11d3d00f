"""Experiment configuration and runners: the full pipeline driver -> flow -> transformed solve -> u on a ball."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .estimates import (
    BoundAudit,
    estimate_constants,
    gradient_integral,
    linf_bound,
    linf_rate,
    local_stability_bound,
    tv_bound,
)
from .flows import (
    Coefficients,
    audit_divergence_identity,
    build_coefficients,
    compute_mu,
    inverse_flow,
    solve_flows,
)
from .fvsolver import (
    BumpFamily,
    EntropyAccumulator,
    GridSolution,
    k_grid,
    l1,
    l1_ball_distance,
    linf,
    solve,
    tv,
)
from .lattice import Grid, Lattice
from .roughpath import (
    PiecewiseLinearPath,
    add_paths,
    brownian_piecewise_linear,
    lift,
    rough_distance,
)
from .transform import (
    HomogeneousProblem,
    StreamingFrames,
    TransformedProblem,
    build_robust_problem,
    forward_transform,
    inverse_transform,
    make_flux,
    pull_back,
)


class PipelineError(RuntimeError):
    """A pipeline stage failed; ``level`` tags the driver level when relevant."""

    def __init__(self, message: str, level: int | None = None):
        super().__init__(message if level is None else f"[level {level}] {message}")
        self.level = level


# --- configuration ---------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    benchmark: str
    d: int
    flux: dict
    coefficients: dict
    driver: dict
    grid: dict
    initial: dict
    T: float = 1.0
    cfl: float = 0.9
    p: float = 2.5
    ball: dict = field(default_factory=lambda: {"R": 0.5, "x0": None})
    flow: dict = field(default_factory=lambda: {"substeps": 32, "h": None})
    n_snapshots: int = 20
    perturbation_scales: list = field(default_factory=lambda: [0.02, 0.05, 0.1])
    extra: dict = field(default_factory=dict)
    output: str | None = None

    def __post_init__(self):
        if not 1 <= self.p < 3:
            raise ValueError("p must lie in [1, 3)")
        levels = self.driver.get("levels")
        if levels is not None and list(levels) != sorted(set(levels)):
            raise ValueError("dyadic levels must be strictly ascending")
        if self.ball.get("x0") is None:
            self.ball = {**self.ball, "x0": [0.0] * self.d}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def replace(self, **changes) -> "ExperimentConfig":
        data = self.to_dict()
        for key, val in changes.items():
            if isinstance(val, dict) and isinstance(data.get(key), dict):
                data[key] = {**data[key], **val}
            else:
                data[key] = val
        return ExperimentConfig.from_dict(data)

    # derived objects
    def coeffs(self) -> Coefficients:
        return build_coefficients({"d": self.d, **self.coefficients})

    def flux_spec(self):
        return make_flux({"d": self.d, **self.flux})

    def make_grid(self, h: float | None = None) -> Grid:
        g = self.grid
        return Grid.from_box(g["lower"], g["upper"], h or g["h"])

    def snapshot_times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_snapshots + 1)

    def u0(self):
        return initial_data(self.initial)


@dataclass
class ExperimentResult:
    name: str
    config: dict
    rows: list = field(default_factory=list)
    audits: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(a["pass"] for a in self.audits)

    def write(self, out_dir) -> None:
        """CSV table plus JSON manifest; wall-clock time is kept out of the files for reproducibility."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if self.rows:
            write_rows(out / f"{self.name}.csv", self.rows)
        manifest = {
            "experiment": self.name,
            "version": __version__,
            "config": self.config,
            "summary": self.summary,
            "audits": self.audits,
            "passed": self.passed,
        }
        (out / f"{self.name}.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return repr(float(obj)) if not np.isfinite(obj) else float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_rows(path, rows: list[dict]) -> None:
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for r in rows:
            w.writerow([repr(float(r[k])) if isinstance(r[k], (float, np.floating)) else r[k] for k in keys])


def _audit(benchmark: str, name: str, bound: float, measured: float, allowance: float = 0.0, **details) -> dict:
    return BoundAudit(benchmark, name, float(bound), float(measured), float(allowance), details).to_dict()


# --- initial data ---------------------------------------------------------------------

def initial_data(spec: dict):
    """Point-value initial data evaluated at cell centres (last axis of the argument is space)."""
    kind = spec["name"]
    amp = float(spec.get("amplitude", 1.0))
    if kind == "riemann":
        x0, left, right = float(spec.get("x0", 0.0)), float(spec["left"]), float(spec["right"])
        return lambda x: np.where(x[..., 0] < x0, left, right)
    if kind == "interval":
        a, b = spec["a"], spec["b"]
        return lambda x: amp * ((x[..., 0] >= a) & (x[..., 0] < b))
    if kind == "disk":
        c, r = np.asarray(spec["center"], dtype=float), float(spec["radius"])
        return lambda x: amp * (np.sum((x - c) ** 2, axis=-1) < r * r)
    if kind == "square":
        lo, hi = np.asarray(spec["lower"], dtype=float), np.asarray(spec["upper"], dtype=float)
        return lambda x: amp * np.all((x >= lo) & (x < hi), axis=-1)
    if kind == "gaussian":
        c, w = np.asarray(spec["center"], dtype=float), float(spec["width"])
        return lambda x: amp * np.exp(-0.5 * np.sum((x - c) ** 2, axis=-1) / w**2)
    raise ValueError(f"unknown initial data {kind!r}")


# --- drivers ----------------------------------------------------------------------------

def make_driver(cfg: ExperimentConfig, level: int | None = None, seed: int | None = None) -> PiecewiseLinearPath:
    n = cfg.coeffs().n_driver
    spec = cfg.driver
    kind = spec.get("kind", "brownian")
    if n == 0:
        return PiecewiseLinearPath(np.array([0.0, cfg.T]), np.zeros((2, 0)))
    if kind == "brownian":
        lev = level if level is not None else spec.get("level", max(spec.get("levels", [8])))
        return brownian_piecewise_linear(seed if seed is not None else spec.get("seed", 0), n, cfg.T, lev)
    if kind == "linear":
        slope = np.broadcast_to(np.asarray(spec.get("slope", 1.0), dtype=float), (n,))
        return PiecewiseLinearPath(np.array([0.0, cfg.T]), np.stack([np.zeros(n), slope * cfg.T]))
    if kind == "file":
        return PiecewiseLinearPath.load(spec["path"])
    raise ValueError(f"unknown driver kind {kind!r}")


# --- pipeline ---------------------------------------------------------------------------

@dataclass
class PipelineOutput:
    v: GridSolution
    u_ball: np.ndarray      # (n_snapshots + 1, n_ball)
    mask: np.ndarray
    alpha_max: float
    problem: object


def _flow_lattice(cfg: ExperimentConfig, grid: Grid) -> Lattice:
    h_flow = cfg.flow.get("h")
    if h_flow is None or h_flow <= min(grid.h):
        return grid.node_lattice()
    lo, hi = np.asarray(grid.origin), np.asarray(grid.upper)
    n = np.rint((hi - lo) / h_flow).astype(int) + 1
    return Lattice.from_box(lo, hi, n)


def _ball_lattice(lat: Lattice, center, R: float) -> Lattice:
    """Sub-lattice of ``lat``'s spacing covering the ball's bounding box (clipped to ``lat``)."""
    c = np.asarray(center, dtype=float)
    sp = np.asarray(lat.spacing)
    lo = np.maximum(np.asarray(lat.origin), np.floor((c - R - np.asarray(lat.origin)) / sp) * sp + lat.origin)
    hi = np.minimum(np.asarray(lat.upper), np.ceil((c + R - np.asarray(lat.origin)) / sp) * sp + lat.origin)
    n = np.rint((hi - lo) / sp).astype(int) + 1
    return Lattice(tuple(lo), tuple(sp), tuple(n))


def build_problem(cfg: ExperimentConfig, driver: PiecewiseLinearPath, grid: Grid):
    coeffs, flux = cfg.coeffs(), cfg.flux_spec()
    if coeffs.n_driver == 0:
        return HomogeneousProblem(flux), None
    lat = _flow_lattice(cfg, grid)
    frames = StreamingFrames(coeffs, driver, lat, cfg.flow.get("substeps", 32), sample_times=cfg.snapshot_times())
    return TransformedProblem(flux, frames), lat


def run_pipeline(cfg: ExperimentConfig, driver: PiecewiseLinearPath, h: float | None = None,
                 u0=None, observer=None, level: int | None = None) -> PipelineOutput:
    """Flows, transformed solve and pull-back of v to u on the observation ball at every snapshot."""
    grid = cfg.make_grid(h)
    coeffs = cfg.coeffs()
    problem, lat = build_problem(cfg, driver, grid)
    try:
        sol = solve(problem, grid, u0 or cfg.u0(), cfg.T, cfg.cfl, cfg.snapshot_times(), observer=observer)
    except Exception as exc:  # re-raise with the level tag
        raise PipelineError(str(exc), level) from exc
    R, x0 = float(cfg.ball["R"]), cfg.ball["x0"]
    mask = grid.ball_mask(R, x0)
    y = grid.centers()[mask]
    u_ball = np.empty((sol.times.size, y.shape[0]))
    if lat is None:
        for k in range(sol.times.size):
            u_ball[k] = sol.values[k][mask]
    else:
        sub = cfg.flow.get("substeps", 32)
        exact = lat == grid.node_lattice()
        blat = None if exact else _ball_lattice(lat, x0, R + max(grid.h))
        _, s2, _ = coeffs.blocks(driver)
        z2 = driver.components(s2)
        for k, t in enumerate(sol.times):
            t = float(t)
            rho = problem.frames.rho_at(t)
            if blat is None:
                pre = inverse_flow(coeffs, driver, y, t, sub)
            else:
                pre = blat.interpolate(inverse_flow(coeffs, driver, blat.points(), t, sub), y)
            mu = float(compute_mu(coeffs.nu, z2, t))
            try:
                u_ball[k] = pull_back(grid, sol.values[k], mu, lambda p: lat.interpolate(rho, p, clamp=True), pre)
            except Exception as exc:
                raise PipelineError(str(exc), level) from exc
    alpha = _max_wavespeed(problem, sol)
    return PipelineOutput(sol, u_ball, mask, alpha, problem)


def _max_wavespeed(problem, sol: GridSolution) -> float:
    """Largest dissipation coefficient seen at the snapshots (cone speed actually used)."""
    from .fvsolver import lf_fluxes

    best = 0.0
    for t, v in zip(sol.times[:-1], sol.values[:-1]):
        _, alphas = lf_fluxes(problem, float(t), sol.grid, v)
        best = max(best, max(alphas))
    return best


def _cone_check(cfg: ExperimentConfig, M: float) -> dict:
    lo, hi = np.asarray(cfg.grid["lower"], dtype=float), np.asarray(cfg.grid["upper"], dtype=float)
    x0 = np.asarray(cfg.ball["x0"], dtype=float)
    room = float(min(np.min(x0 - lo), np.min(hi - x0)))
    need = float(cfg.ball["R"]) + M * cfg.T
    return {"padding_available": room, "padding_needed": need, "cone_ok": bool(need <= room)}


def _ball_l1(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    return float(np.sum(np.abs(a - b)) * grid.cell_volume)


# --- experiments --------------------------------------------------------------------------

def run_wong_zakai(cfg: ExperimentConfig, h: float | None = None, levels=None) -> ExperimentResult:
    """``D_n = max_t ||u^n - u^{n_max}||_{L1(B_R)}`` over nested Brownian levels of one seed."""
    start = time.perf_counter()
    levels = sorted(levels or cfg.driver["levels"])
    seed = cfg.driver.get("seed", 0)
    grid = cfg.make_grid(h)
    top = run_pipeline(cfg, make_driver(cfg, levels[-1], seed), h, level=levels[-1])
    rows, alpha = [], top.alpha_max
    for n in levels[:-1]:
        out = run_pipeline(cfg, make_driver(cfg, n, seed), h, level=n)
        alpha = max(alpha, out.alpha_max)
        gaps = [_ball_l1(out.u_ball[k], top.u_ball[k], grid) for k in range(top.u_ball.shape[0])]
        rows.append({"level": n, "h": float(grid.h[0]), "D": float(max(gaps)),
                     "t_argmax": float(top.v.times[int(np.argmax(gaps))])})
    rows.append({"level": levels[-1], "h": float(grid.h[0]), "D": 0.0, "t_argmax": 0.0})
    D = [r["D"] for r in rows[:-1]]
    summary = {"levels": levels, "D": D, "strictly_decreasing": bool(np.all(np.diff(D) < 0)),
               "floor": D[-1] if D else 0.0, "alpha_max": alpha, **_cone_check(cfg, alpha)}
    res = ExperimentResult("wongzakai", cfg.to_dict(), rows, [], summary, time.perf_counter() - start)
    res.audits.append(_audit(cfg.benchmark, "cone_padding", summary["padding_available"],
                             summary["padding_needed"]))
    return res


def run_rate_experiment(cfg: ExperimentConfig, perturbation_scales=None, h: float | None = None) -> ExperimentResult:
    """Gap ``sup_t ||u^1 - u^2||_{L1(B_R)}`` for drivers ``z`` and ``z + lam w`` against their rough distance."""
    start = time.perf_counter()
    coeffs = cfg.coeffs()
    if coeffs.n2 or coeffs.n3:
        raise ValueError("the rate experiment is for pure transport noise")
    scales = list(cfg.perturbation_scales if perturbation_scales is None else perturbation_scales)
    seed = cfg.driver.get("seed", 0)
    z = make_driver(cfg, seed=seed)
    w = make_driver(cfg, seed=seed + 1)
    grid = cfg.make_grid(h)
    base = run_pipeline(cfg, z, h)
    u0 = cfg.u0()
    tv0 = tv(np.asarray(u0(grid.centers()), dtype=float), grid)
    rows, audits = [], []
    for lam in scales:
        zl = add_paths(z, w, lam)
        dist = rough_distance(lift(z, cfg.p), lift(zl, cfg.p)) if lam else 0.0
        other = run_pipeline(cfg, zl, h)
        gap = max(_ball_l1(a, b, grid) for a, b in zip(base.u_ball, other.u_ball))
        ratio = gap / (tv0 * dist) if dist > 0 else 0.0
        rows.append({"lambda": float(lam), "rough_distance": float(dist), "gap": float(gap), "ratio": float(ratio)})
    ratios = [r["ratio"] for r in rows if r["rough_distance"] > 0]
    spread = (max(ratios) - min(ratios)) / max(ratios) if ratios else 0.0
    # contraction case: same driver, different data
    u0b = _perturbed_data(cfg)
    other = run_pipeline(cfg, z, h, u0=u0b)
    gaps = [_ball_l1(a, b, grid) for a, b in zip(base.u_ball, other.u_ball)]
    # data from outside the ball reaches it, so the bound is the whole-domain data gap
    diff0 = np.asarray(u0(grid.centers()) - u0b(grid.centers()), dtype=float)
    data_gap = float(np.sum(np.abs(diff0)) * grid.cell_volume)
    # the pull-back resamples v off the cell centres, which costs O(h TV) in L1
    slack = max(float(grid.h[0]) * tv(diff0, grid), 1e-12 * max(1.0, data_gap))
    summary = {"tv_u0": tv0, "ratio_spread": spread, "K_estimate": max(ratios) if ratios else 0.0,
               "contraction_data_gap": data_gap, "contraction_sup_gap": max(gaps),
               "contraction_final_gap": gaps[-1]}
    audits.append(_audit(cfg.benchmark, "rate_ratio_spread", 0.3, spread))
    audits.append(_audit(cfg.benchmark, "l1_contraction", data_gap, max(gaps), slack))
    return ExperimentResult("rate", cfg.to_dict(), rows, audits, summary, time.perf_counter() - start)


def _perturbed_data(cfg: ExperimentConfig):
    base = cfg.u0()
    scale = float(cfg.extra.get("contraction_scale", 0.5))
    return lambda x: scale * base(x)


# --- oracles --------------------------------------------------------------------------------

def burgers_riemann_exact(x: np.ndarray, t: float, left: float, right: float, x0: float = 0.0) -> np.ndarray:
    """Entropy solution of Burgers' equation for Riemann data."""
    xi = (np.asarray(x) - x0) / t if t > 0 else None
    if t == 0:
        return np.where(np.asarray(x) < x0, left, right)
    if left > right:
        s = 0.5 * (left + right)
        return np.where(xi < s, left, right)
    return np.clip(xi, left, right)


def oracle_burgers_shock(h: float = 1 / 400, T: float = 1.0) -> dict:
    grid = Grid.from_box([-1.0], [2.0], h)
    pb = HomogeneousProblem(make_flux({"name": "burgers", "d": 1}))
    sol = solve(pb, grid, lambda x: (x[..., 0] < 0).astype(float), T)
    v = sol.final
    # the shock sits where the profile crosses the mid-value (mass alone is fixed by conservation)
    x = grid.centers()[:, 0]
    k = int(np.nonzero((v[:-1] >= 0.5) & (v[1:] < 0.5))[0][-1])
    pos = float(x[k] + (v[k] - 0.5) / (v[k] - v[k + 1]) * h)
    err = abs(pos - 0.5 * T)
    return {"name": "burgers_shock", "position": pos, "error": err, "tolerance": 2 * h, "pass": err < 2 * h}


def oracle_linear_advection(hs=(1 / 100, 1 / 200, 1 / 400), c: float = 1.0, T: float = 0.5) -> dict:
    errs, tol = [], []
    for h in hs:
        grid = Grid.from_box([-1.0], [2.0], h)
        pb = HomogeneousProblem(make_flux({"name": "linear", "d": 1, "velocity": [c]}))
        u0 = lambda x: np.exp(-0.5 * (x[..., 0] / 0.1) ** 2)
        sol = solve(pb, grid, u0, T)
        x = grid.centers()
        exact = u0(x - c * T)
        errs.append(l1(sol.final - exact, grid))
        tol.append(3 * h * tv(u0(x), grid))
    mono = bool(np.all(np.diff(errs) < 0))
    ok = mono and all(e < t for e, t in zip(errs, tol))
    return {"name": "linear_advection", "errors": errs, "tolerances": tol, "monotone": mono, "pass": ok}


def oracle_constant_shift(cfg: ExperimentConfig, h: float | None = None) -> dict:
    """Constant transport field in 1D: ``u(t, y) = w(t, y + c z_t)`` with ``w`` the noise-free Burgers solution."""
    coeffs = cfg.coeffs()
    c = float(coeffs.H_fields[0].params["c"][0])
    driver = make_driver(cfg)
    out = run_pipeline(cfg, driver, h)
    grid = out.v.grid
    y = grid.centers()[out.mask][:, 0]
    spec = cfg.initial
    worst = 0.0
    for k, t in enumerate(out.v.times):
        shift = c * float(driver(float(t))[0] - driver.values[0, 0])
        exact = burgers_riemann_exact(y + shift, float(t), spec["left"], spec["right"], spec.get("x0", 0.0))
        worst = max(worst, float(np.sum(np.abs(out.u_ball[k] - exact)) * grid.cell_volume))
    tol = 5 * float(grid.h[0])
    return {"name": "constant_shift", "max_l1_error": worst, "tolerance": tol, "pass": bool(worst < tol)}


def oracle_zero_noise(cfg: ExperimentConfig) -> dict:
    zero = cfg.replace(coefficients={"H": [], "nu": [], "g": []})
    a = run_pipeline(zero, make_driver(zero, seed=1)).u_ball
    b = run_pipeline(zero, make_driver(zero, seed=2)).u_ball
    gap = float(np.max(np.abs(a - b)))
    return {"name": "zero_noise_identity", "gap": gap, "pass": gap == 0.0}


def transform_round_trip(h: float, scale: float = 1.0, T: float = 0.5, seed: int = 7, level: int = 5,
                         substeps: int = 8) -> float:
    """L1 discrepancy on the inner box of forward-then-inverse transform of a Gaussian under rotation."""
    coeffs = build_coefficients({"d": 2, "H": [{"name": "rotation", "scale": scale}]})
    driver = brownian_piecewise_linear(seed, 1, T, level)
    grid = Grid.from_box([-1.0, -1.0], [1.0, 1.0], h)
    lat = grid.center_lattice()
    flow, affine = solve_flows(coeffs, driver, lat, [T], substeps)
    u0 = np.exp(-0.5 * np.sum((grid.centers() - np.array([0.3, 0.0])) ** 2, axis=-1) / 0.1**2)
    u = GridSolution(grid, np.array([T]), u0[None])
    back = inverse_transform(forward_transform(u, flow, affine), flow, affine)
    inner = grid.ball_mask(0.6, [0.0, 0.0])
    return float(np.sum(np.abs(back.values[0] - u0)[inner]) * grid.cell_volume)


def divergence_audit(h: float, field_spec: dict | None = None, T: float = 0.5, seed: int = 7,
                     level: int = 3, substeps: int = 32, half_width: float = 0.5) -> dict:
    # enough substeps that the RK4 volume defect sits below the h^2 truncation error
    spec = field_spec or {"name": "stream_gaussian", "amplitude": 0.3, "width": 0.4}
    coeffs = build_coefficients({"d": 2, "H": [spec]})
    driver = brownian_piecewise_linear(seed, 1, T, level)
    n = int(round(2 * half_width / h)) + 1
    lat = Lattice.from_box([-half_width] * 2, [half_width] * 2, n)
    flow, _ = solve_flows(coeffs, driver, lat, [T], substeps)
    return audit_divergence_identity(flow, _test_vector_field)


def _test_vector_field(y: np.ndarray) -> np.ndarray:
    return np.stack([np.sin(2 * y[..., 0]) * np.cos(y[..., 1]), np.cos(y[..., 0]) * np.sin(3 * y[..., 1])], axis=-1)


def run_oracle_suite(cfg: ExperimentConfig | None = None) -> ExperimentResult:
    start = time.perf_counter()
    cfg = cfg or default_config("B1")
    checks = [oracle_burgers_shock(), oracle_linear_advection()]
    if cfg.d == 1 and cfg.coefficients.get("H"):
        checks.append(oracle_constant_shift(cfg))
    checks.append(oracle_zero_noise(cfg))
    rt = [transform_round_trip(h) for h in (1 / 32, 1 / 64)]
    checks.append({"name": "transform_round_trip", "discrepancy": rt, "ratio": rt[1] / rt[0],
                   "pass": rt[1] / rt[0] <= 0.5 + 0.05})
    da = [divergence_audit(h) for h in (1 / 32, 1 / 64)]
    ratio = da[0]["residual_a"] / da[1]["residual_a"]
    checks.append({"name": "divergence_identity", "residual_a": [d["residual_a"] for d in da],
                   "residual_b": [d["residual_b"] for d in da], "decay": ratio, "pass": ratio >= 3.0})
    audits = [{"benchmark": cfg.benchmark, "name": c["name"], "pass": bool(c["pass"])} for c in checks]
    rows = [{"check": c["name"], "pass": bool(c["pass"])} for c in checks]
    return ExperimentResult("oracle", cfg.to_dict(), rows, audits, {"checks": checks}, time.perf_counter() - start)


# --- bound audits ------------------------------------------------------------------------------

def _stored_problem(cfg: ExperimentConfig, h: float | None = None):
    """Transformed problem with stored frames on the cell-node lattice at snapshot times (1D use)."""
    grid = cfg.make_grid(h)
    coeffs = cfg.coeffs()
    driver = make_driver(cfg)
    times = np.union1d(driver.times, cfg.snapshot_times())
    flow, affine = solve_flows(coeffs, driver, grid.node_lattice(), times, cfg.flow.get("substeps", 32),
                               inverse=False)
    return build_robust_problem(cfg.flux_spec(), flow, affine), grid


def entropy_family(cfg: ExperimentConfig) -> BumpFamily:
    return BumpFamily.for_box(cfg.grid["lower"], cfg.grid["upper"], cfg.T)


def audit_max_principle(cfg: ExperimentConfig, h: float | None = None) -> dict:
    transport = cfg.replace(coefficients={**cfg.coefficients, "nu": [], "g": []})
    grid = transport.make_grid(h)
    problem, _ = build_problem(transport, make_driver(transport), grid)
    sol = solve(problem, grid, transport.u0(), transport.T, transport.cfl, transport.snapshot_times())
    u0 = np.asarray(transport.u0()(grid.centers()), dtype=float)
    measured = max(linf(v) for v in sol.values)
    lo = min(float(np.min(v)) for v in sol.values)
    # face coefficients are lattice differences of psi, constant only up to roundoff
    bound = linf(u0)
    return _audit(cfg.benchmark, "max_principle", bound, measured, 1e-12 * max(1.0, bound),
                  min_value=lo, min_u0=float(np.min(u0)), h=float(grid.h[0]))


def audit_linf(cfg: ExperimentConfig, h: float | None = None) -> dict:
    problem, grid = _stored_problem(cfg, h)
    sol = solve(problem, grid, cfg.u0(), cfg.T, cfg.cfl, cfg.snapshot_times())
    V0 = linf(sol.values[0])
    box = (cfg.grid["lower"], cfg.grid["upper"])
    V = max(linf(v) for v in sol.values)
    M = linf_rate(problem, box, max(V, V0 + 1.0), n=65)
    bound = linf_bound(V0, M, cfg.T)
    return _audit(cfg.benchmark, "linf_growth", bound, V, 10 * float(grid.h[0]), rate=M, h=float(grid.h[0]))


def audit_tv(cfg: ExperimentConfig, h: float | None = None) -> list[dict]:
    problem, grid = _stored_problem(cfg, h)
    sol = solve(problem, grid, cfg.u0(), cfg.T, cfg.cfl, cfg.snapshot_times())
    box = (cfg.grid["lower"], cfg.grid["upper"])
    V = max(linf(v) for v in sol.values)
    consts = estimate_constants(problem, problem, box, V, n=129)
    tv0 = tv(sol.values[0], grid)
    hh = float(grid.h[0])
    out = []
    for k in range(1, sol.times.size, max(1, (sol.times.size - 1) // 4)):
        t = float(sol.times[k])
        integral = gradient_integral(problem, box, V, t, consts.kappa0, n=129)
        bound = tv_bound(tv0, consts.kappa0, t, integral, cfg.d)
        out.append(_audit(cfg.benchmark, f"tv_growth(t={t:.3g})", bound, tv(sol.values[k], grid),
                          5 * hh * bound, kappa0=consts.kappa0, integral=integral, h=hh))
    return out


def calibrate_scheme_constant(h: float, T: float = 0.5, c: float = 1.0) -> float:
    """``C`` with ``L1 error(T) = C (h + dt) T`` for linear advection of an indicator."""
    grid = Grid.from_box([-1.0], [2.0], h)
    pb = HomogeneousProblem(make_flux({"name": "linear", "d": 1, "velocity": [c]}))
    u0 = lambda x: ((x[..., 0] >= -0.5) & (x[..., 0] < 0.0)).astype(float)
    sol = solve(pb, grid, u0, T)
    err = l1(sol.final - u0(grid.centers() - c * T), grid)
    dt = sol.info["dt_max"]
    return err / ((h + dt) * T)


def twin_flux_audit(eps: float, h: float = 1 / 400, T: float = 0.5, R: float = 0.75, C: float | None = None,
                    sign: float = 1.0) -> dict:
    """Burgers against ``(1 + eps)``-scaled Burgers from the same data, compared with the stability bound.

    ``sign = -1`` corrupts the second flux (wrong sign) while keeping the bound of the intended pair.
    """
    grid = Grid.from_box([-1.5], [1.5], h)
    u0 = lambda x: ((x[..., 0] >= -0.5) & (x[..., 0] < 0.0)).astype(float)
    fa = HomogeneousProblem(make_flux({"name": "burgers", "d": 1}))
    fb_true = HomogeneousProblem(make_flux({"name": "burgers", "d": 1, "scale": 1 + eps}))
    fb_run = HomogeneousProblem(make_flux({"name": "burgers", "d": 1, "scale": sign * (1 + eps)}))
    times = np.linspace(0, T, 11)
    a = solve(fa, grid, u0, T, snapshot_times=times)
    b = solve(fb_run, grid, u0, T, snapshot_times=times)
    V = max(linf(a.values[0]), linf(b.values[0]))
    box = ([-1.5], [1.5])
    consts = estimate_constants(fa, fb_true, box, V)
    tv0 = tv(a.values[0], grid)
    C = calibrate_scheme_constant(h) if C is None else C
    dt = max(a.info["dt_max"], b.info["dt_max"])
    worst = None
    for k, t in enumerate(times[1:], start=1):
        t = float(t)
        measured = l1_ball_distance(a.values[k], b.values[k], grid, R, [0.0])
        # sup of |d_u (f - g)| over the value range; the flux difference is x-free
        flux_gap = eps * V
        bound = local_stability_bound(t, consts.kappa0, consts.kappa, 0.0, flux_gap, tv0, 1)
        allowance = C * (h + dt) * t
        # report the time where the bound is most nearly used up
        usage = measured / (bound + allowance)
        if worst is None or usage > worst[0]:
            worst = (usage, t, bound, measured, allowance)
    _, t, bound, measured, allowance = worst
    name = "twin_flux" if sign > 0 else "twin_flux_corrupted"
    return _audit("twin", f"{name}(eps={eps})", bound, measured, allowance, t=t, C=C, h=h)


def entropy_audit(cfg: ExperimentConfig, h: float | None = None, n_k: int = 33) -> dict:
    grid = cfg.make_grid(h)
    problem, _ = (_stored_problem(cfg, h)[0], None) if cfg.d == 1 and cfg.coeffs().n_driver else \
        build_problem(cfg, make_driver(cfg), grid)
    u0 = np.asarray(cfg.u0()(grid.centers()), dtype=float)
    V = max(1.0, 1.5 * linf(u0) + 1.0)
    acc = EntropyAccumulator(problem, grid, k_grid(V, n_k), entropy_family(cfg))
    solve(problem, grid, u0, cfg.T, cfg.cfl, cfg.snapshot_times(), observer=acc)
    return _audit(cfg.benchmark, "entropy_residual", 0.0, -acc.residual(), 1e-3, argmin=acc.argmin(),
                  h=float(grid.h[0]))


def expansion_shock_residual(h: float = 1 / 400, T: float = 1.0, n_steps: int = 100) -> float:
    """Kruzkov functional minimum for the stationary non-entropic shock ``-1 | +1`` of Burgers."""
    grid = Grid.from_box([-1.0], [1.0], h)
    v = np.where(grid.centers()[..., 0] < 0, -1.0, 1.0)
    pb = HomogeneousProblem(make_flux({"name": "burgers", "d": 1}))
    acc = EntropyAccumulator(pb, grid, k_grid(1.0), BumpFamily.for_box([-1.0], [1.0], T))
    dt = T / n_steps
    for n in range(n_steps):
        acc(n * dt, dt, v)
    return acc.residual()


def run_bound_audits(cfgs=None, h: float = 1 / 400, include_2d: bool = False, h_2d: float = 1 / 64) -> ExperimentResult:
    """All bound audits; 2D benchmarks run at ``h_2d`` (the residuals are O(h), so coarser is stricter)."""
    start = time.perf_counter()
    cfgs = cfgs or [default_config("B1"), default_config("B2")] + ([default_config("B3")] if include_2d else [])
    audits = []
    for cfg in cfgs:
        hh = h if cfg.d == 1 else h_2d
        audits.append(audit_max_principle(cfg, hh))
        if cfg.d == 1:
            audits.extend(audit_tv(cfg, hh))
            if cfg.coeffs().n2 or cfg.coeffs().n3:
                audits.append(audit_linf(cfg, hh))
        audits.append(entropy_audit(cfg, hh))
    C = calibrate_scheme_constant(h)
    for eps in (0.05, 0.1):
        audits.append(twin_flux_audit(eps, h, C=C))
    corrupted = twin_flux_audit(0.1, h, C=C, sign=-1.0)
    res_exp = expansion_shock_residual(h)
    sensitivity = [
        {**corrupted, "name": "sensitivity:" + corrupted["name"], "pass": not corrupted["pass"]},
        {"benchmark": "manufactured", "name": "sensitivity:expansion_shock", "bound": -0.1,
         "measured": res_exp, "allowance": 0.0, "pass": res_exp < -0.1},
    ]
    audits.extend(sensitivity)
    rows = [{"benchmark": a["benchmark"], "name": a["name"], "bound": a["bound"], "measured": a["measured"],
             "allowance": a["allowance"], "pass": a["pass"]} for a in audits]
    return ExperimentResult("audit", {"configs": [c.to_dict() for c in cfgs], "h": h, "h_2d": h_2d}, rows, audits,
                            {"scheme_constant": C}, time.perf_counter() - start)


# --- shipped benchmarks --------------------------------------------------------------------------

def default_config(name: str) -> ExperimentConfig:
    if name == "B1":
        return ExperimentConfig(
            benchmark="B1", d=1, flux={"name": "burgers"},
            coefficients={"H": [{"name": "constant", "c": [1.0]}], "nu": [], "g": []},
            driver={"kind": "brownian", "seed": 7, "levels": [3, 4, 5, 6, 7, 8], "level": 8},
            grid={"lower": [-5.0], "upper": [5.0], "h": 1 / 400},
            initial={"name": "riemann", "left": 1.0, "right": 0.0, "x0": 0.0},
            T=1.0, ball={"R": 1.5, "x0": [0.0]}, flow={"substeps": 8, "h": None},
        )
    if name == "B2":
        return ExperimentConfig(
            benchmark="B2", d=1, flux={"name": "burgers"},
            coefficients={"H": [], "nu": [1.0], "g": [{"name": "bump", "amplitude": 1.0, "center": [0.0],
                                                        "width": 0.3}]},
            driver={"kind": "brownian", "seed": 7, "levels": [3, 4, 5, 6, 7, 8], "level": 8},
            grid={"lower": [-3.0], "upper": [3.0], "h": 1 / 400},
            initial={"name": "interval", "a": -0.5, "b": 0.5, "amplitude": 1.0},
            T=1.0, ball={"R": 1.5, "x0": [0.0]}, flow={"substeps": 8, "h": None},
        )
    if name == "B3":
        return ExperimentConfig(
            benchmark="B3", d=2, flux={"name": "burgers"},
            coefficients={"H": [{"name": "rotation", "scale": 1.0}], "nu": [0.5],
                          "g": [{"name": "bump", "amplitude": 0.5, "center": [0.0, 0.0], "width": 0.25}]},
            driver={"kind": "brownian", "seed": 7, "levels": [3, 4, 5, 6, 7, 8], "level": 8},
            grid={"lower": [-1.0, -1.0], "upper": [1.0, 1.0], "h": 1 / 256},
            initial={"name": "disk", "center": [0.25, 0.0], "radius": 0.2, "amplitude": 0.5},
            T=0.5, ball={"R": 0.5, "x0": [0.0, 0.0]}, flow={"substeps": 4, "h": 1 / 64},
        )
    raise KeyError(f"unknown benchmark {name!r}")


BENCHMARKS = ("B1", "B2", "B3")
