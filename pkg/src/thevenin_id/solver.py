"""Trust-region nonlinear least squares.

One iteration loop serves three problem flavours:

* unconstrained: minimise ``0.5 * ||r(x)||^2``;
* box constrained: same cost, ``lower <= x <= upper`` handled with an
  interior reflective strategy (Coleman-Li affine scaling);
* ridge regularized: the residual is augmented with ``P0^-1/2 (x - x0)``.

Steps come from a dogleg solution of the scaled subproblem using the
Gauss-Newton Hessian ``J^T J``. The solver is deterministic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, EvaluationFailure, InfeasibleBounds, NonPositivePrior


@dataclass
class NlsProblem:
    residual: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    dim: int
    n_residuals: int

    def cost(self, x) -> float:
        r = self.residual(np.asarray(x, dtype=float))
        return 0.5 * float(r @ r)


@dataclass(frozen=True)
class BoxConstraint:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape:
            raise InfeasibleBounds("lower and upper bounds differ in shape")
        if np.any(lo > hi) or np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise InfeasibleBounds("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unbounded(cls, dim):
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    def contains(self, x, slack=0.0) -> bool:
        return bool(np.all(x >= self.lower - slack) and np.all(x <= self.upper + slack))

    def make_interior(self, x, margin=1e-10) -> np.ndarray:
        """Clip ``x`` into the box and nudge it off any finite bound."""
        lo, hi = self.lower, self.upper
        x = np.clip(np.asarray(x, dtype=float), lo, hi)
        width = hi - lo
        fixed = width == 0
        finite = np.isfinite(width) & ~fixed
        pad = np.where(finite, margin * width, margin * np.maximum(1.0, np.abs(x)))
        x = np.where(np.isfinite(lo) & ~fixed & (x <= lo + pad), lo + pad, x)
        x = np.where(np.isfinite(hi) & ~fixed & (x >= hi - pad), hi - pad, x)
        return x


@dataclass(frozen=True)
class TrustRegionConfig:
    delta0: float = 100.0
    delta_max: float = 1e10
    eta_accept: float = 1e-4
    shrink: float = 0.25
    grow: float = 2.0
    gtol: float = 1e-8
    xtol: float = 1e-10
    ftol: float = 1e-10
    max_iter: int = 400

    def __post_init__(self):
        if not 0 < self.eta_accept < 1:
            raise ConfigError("eta_accept must lie in (0, 1)")
        if not 0 < self.shrink < 1 or not self.grow > 1:
            raise ConfigError("shrink must lie in (0, 1) and grow above 1")
        if self.delta0 <= 0 or self.delta_max < self.delta0:
            raise ConfigError("need 0 < delta0 <= delta_max")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")


@dataclass
class SolveReport:
    theta_hat: np.ndarray
    cost: float
    iterations: int
    termination_reason: str
    cost_trace: list[float]
    gradient_norm: float
    wall_time: float
    n_evaluations: int = 0
    iterates: list[np.ndarray] = field(default_factory=list, repr=False)
    derived: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.termination_reason in ("gtol", "xtol", "ftol")

    def to_json(self) -> dict:
        return {
            "theta_hat": [float(v) for v in self.theta_hat],
            "derived": {k: float(v) for k, v in self.derived.items()},
            "cost": float(self.cost),
            "iterations": int(self.iterations),
            "termination_reason": self.termination_reason,
            "wall_time_ms": 1e3 * self.wall_time,
        }


def _evaluate(problem, x):
    with np.errstate(over="ignore", invalid="ignore"):
        r = np.asarray(problem.residual(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise EvaluationFailure(f"non-finite residual at x={x.tolist()}")
    return r


def _evaluate_jac(problem, x):
    with np.errstate(over="ignore", invalid="ignore"):
        jac = np.asarray(problem.jacobian(x), dtype=float)
    if not np.all(np.isfinite(jac)):
        raise EvaluationFailure(f"non-finite Jacobian at x={x.tolist()}")
    return jac


def _cl_scaling(x, g, lower, upper):
    """Coleman-Li distance vector ``v`` and its derivative ``dv``.

    Coordinates whose relevant bound is infinite get ``v = 1, dv = 0``,
    which reduces to the plain unconstrained update there.
    """
    v = np.ones_like(x)
    dv = np.zeros_like(x)
    m = (g < 0) & np.isfinite(upper)
    v[m] = upper[m] - x[m]
    dv[m] = -1.0
    m = (g > 0) & np.isfinite(lower)
    v[m] = x[m] - lower[m]
    dv[m] = 1.0
    return v, dv


class _QuadModel:
    """``m(p) = g.p + 0.5 p.(A^T A + diag(c)) p`` in scaled coordinates."""

    def __init__(self, a, f, c):
        self.a = a
        self.c = c
        self.g = a.T @ f

    def value(self, p):
        ap = self.a @ p
        return float(self.g @ p + 0.5 * (ap @ ap + p @ (self.c * p)))

    def curvature(self, p):
        ap = self.a @ p
        return float(ap @ ap + p @ (self.c * p))


def _dogleg(gn, g, curv_g, delta):
    """Dogleg step for radius ``delta`` given the Gauss-Newton point ``gn``."""
    gn_norm = np.linalg.norm(gn)
    if gn_norm <= delta:
        return gn, False
    gg = g @ g
    if gg == 0.0:
        return gn * (delta / gn_norm), True
    tau = gg / curv_g if curv_g > 0 else np.inf
    cauchy = -tau * g
    c_norm = np.linalg.norm(cauchy)
    if c_norm >= delta or not np.isfinite(c_norm):
        return -g * (delta / np.sqrt(gg)), True
    # intersect the segment cauchy -> gn with the sphere
    d = gn - cauchy
    a = d @ d
    b = 2.0 * (cauchy @ d)
    c = c_norm**2 - delta**2
    t = (-b + np.sqrt(b * b - 4 * a * c)) / (2 * a)
    return cauchy + t * d, True


def _step_to_bound(x, s, lower, upper):
    """Largest ``t`` with ``x + t s`` inside the box, and which coordinates hit it."""
    with np.errstate(divide="ignore", invalid="ignore"):
        steps = np.where(s > 0, (upper - x) / s, np.where(s < 0, (lower - x) / s, np.inf))
    steps = np.where(np.isnan(steps), np.inf, steps)
    t = steps.min()
    hits = steps == t if np.isfinite(t) else np.zeros_like(s, dtype=bool)
    return t, hits


def _line_min(model, p0, direction, lo, hi):
    """Minimise the model along ``p0 + tau * direction`` for ``tau`` in [lo, hi]."""
    a = 0.5 * model.curvature(direction)
    ap0 = model.a @ p0
    b = model.g @ direction + float(ap0 @ (model.a @ direction)) + float(p0 @ (model.c * direction))
    if a > 0:
        tau = np.clip(-b / (2 * a), lo, hi)
    else:
        tau = hi if b < 0 else lo
    return tau


def _sphere_interval(p0, d, delta):
    """tau range keeping ``||p0 + tau d|| <= delta``."""
    a = d @ d
    b = 2 * (p0 @ d)
    c = p0 @ p0 - delta**2
    disc = max(b * b - 4 * a * c, 0.0)
    return (-b - np.sqrt(disc)) / (2 * a), (-b + np.sqrt(disc)) / (2 * a)


def _select_step(x, p, scale, model, delta, lower, upper, theta):
    """Keep the step strictly feasible; try truncation, reflection and a gradient step."""
    s = scale * p
    t, hits = _step_to_bound(x, s, lower, upper)
    if t > 1.0:
        return p
    candidates = [theta * t * p]
    # reflect off the first bound hit
    if t > 0:
        p_b = t * p
        r = p.copy()
        r[hits] *= -1
        x_b = x + scale * p_b
        t_r, _ = _step_to_bound(x_b, scale * r, lower, upper)
        _, tau_tr = _sphere_interval(p_b, r, delta)
        hi = min(t_r * theta, tau_tr)
        if hi > 0:
            tau = _line_min(model, p_b, r, 0.0, hi)
            candidates.append(p_b + tau * r)
    # restricted anti-gradient
    g = model.g
    if np.any(g):
        t_g, _ = _step_to_bound(x, -scale * g, lower, upper)
        hi = min(t_g * theta, delta / np.linalg.norm(g))
        if hi > 0:
            tau = _line_min(model, np.zeros_like(p), -g, 0.0, hi)
            candidates.append(-tau * g)
    values = [model.value(c) for c in candidates]
    return candidates[int(np.argmin(values))]


def _trust_region(problem: NlsProblem, x0, lower, upper, cfg: TrustRegionConfig, cost_offset=None) -> SolveReport:
    start = time.perf_counter()
    bounded = bool(np.any(np.isfinite(lower)) or np.any(np.isfinite(upper)))
    x = np.asarray(x0, dtype=float).copy()
    f = _evaluate(problem, x)
    n_eval = 1
    cost = 0.5 * float(f @ f)
    jac = _evaluate_jac(problem, x)
    g = jac.T @ f
    delta = cfg.delta0
    trace = [cost]
    iterates = [x.copy()]
    reason = "max_iter"
    it = 0

    new_point = True
    while True:
        if new_point:
            v, dv = _cl_scaling(x, g, lower, upper)
            scale = np.sqrt(v)
            g_scaled = scale * g
            opt = np.linalg.norm(v * g, ord=np.inf)
            if opt < cfg.gtol:
                reason = "gtol"
                break
            # bound-induced curvature, zero where no finite bound is active
            c = g * dv
            a_mat = jac * scale
            model = _QuadModel(a_mat, f, c)
            if bounded and np.any(c > 0):
                a_aug = np.vstack([a_mat, np.diag(np.sqrt(c))])
                f_aug = np.concatenate([f, np.zeros_like(x)])
            else:
                a_aug, f_aug = a_mat, f
            gn = -np.linalg.lstsq(a_aug, f_aug, rcond=None)[0]
            curv_g = model.curvature(g_scaled)
            new_point = False
        if it >= cfg.max_iter:
            break

        p, _ = _dogleg(gn, g_scaled, curv_g, delta)
        if bounded:
            theta = max(0.995, 1.0 - np.linalg.norm(g_scaled, ord=np.inf))
            p = _select_step(x, p, scale, model, delta, lower, upper, theta)
        step = scale * p
        predicted = -model.value(p)
        x_new = x + step
        if bounded:
            x_new = np.clip(x_new, lower, upper)
        f_new = _evaluate(problem, x_new)
        n_eval += 1
        cost_new = 0.5 * float(f_new @ f_new)
        actual = cost - cost_new
        rho = actual / predicted if predicted > 0 else -np.inf

        p_norm = np.linalg.norm(p)
        if rho < 0.25:
            delta = cfg.shrink * p_norm if p_norm > 0 else cfg.shrink * delta
        elif rho > 0.75 and p_norm >= 0.95 * delta:
            delta = min(cfg.grow * delta, cfg.delta_max)
        it += 1

        if rho > cfg.eta_accept and actual > 0:
            step_norm = np.linalg.norm(step)
            x, f, cost = x_new, f_new, cost_new
            jac = _evaluate_jac(problem, x)
            g = jac.T @ f
            trace.append(cost)
            iterates.append(x.copy())
            new_point = True
            if actual < cfg.ftol * cost and rho > 0.25:
                reason = "ftol"
                break
            if step_norm < cfg.xtol * (cfg.xtol + np.linalg.norm(x)):
                reason = "xtol"
                break
        elif delta < cfg.xtol * (cfg.xtol + np.linalg.norm(x)):
            reason = "xtol"
            break

    cost_final = 0.5 * float(f @ f)
    return SolveReport(
        theta_hat=x,
        cost=cost_final,
        iterations=it,
        termination_reason=reason,
        cost_trace=trace,
        gradient_norm=float(np.linalg.norm(g)),
        wall_time=time.perf_counter() - start,
        n_evaluations=n_eval,
        iterates=iterates,
    )


def solve_unconstrained(problem: NlsProblem, theta_init, cfg: TrustRegionConfig | None = None) -> SolveReport:
    cfg = cfg or TrustRegionConfig()
    inf = np.full(problem.dim, np.inf)
    return _trust_region(problem, theta_init, -inf, inf, cfg)


def solve_box_constrained(problem: NlsProblem, box: BoxConstraint, theta_init,
                          cfg: TrustRegionConfig | None = None) -> SolveReport:
    cfg = cfg or TrustRegionConfig()
    if box.lower.shape != (problem.dim,):
        raise InfeasibleBounds(f"bounds must have length {problem.dim}")
    x0 = box.make_interior(theta_init)
    return _trust_region(problem, x0, box.lower, box.upper, cfg)


def regularized_problem(problem: NlsProblem, theta0, p0) -> NlsProblem:
    """Append ``P0^-1/2 (x - theta0)`` to the residual vector."""
    theta0 = np.asarray(theta0, dtype=float)
    p0d = np.diag(p0) if np.ndim(p0) == 2 else np.asarray(p0, dtype=float)
    if p0d.shape != (problem.dim,) or np.any(~(p0d > 0)):
        raise NonPositivePrior("prior variances must be strictly positive")
    w = 1.0 / np.sqrt(p0d)
    w_mat = np.diag(w)

    def residual(x):
        return np.concatenate([problem.residual(x), w * (x - theta0)])

    def jacobian(x):
        return np.vstack([problem.jacobian(x), w_mat])

    return NlsProblem(residual, jacobian, problem.dim, problem.n_residuals + problem.dim)


def solve_regularized(problem: NlsProblem, theta0, p0, theta_init,
                      cfg: TrustRegionConfig | None = None) -> SolveReport:
    """Minimise ``J(x) + 0.5 (x - theta0)^T P0^-1 (x - theta0)``; reported cost includes the penalty."""
    return solve_unconstrained(regularized_problem(problem, theta0, p0), theta_init, cfg)
