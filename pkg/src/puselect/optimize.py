"""First-order unconstrained minimizers shared by all fitting procedures.

Three methods behind one contract: Adam, Nadam (Adam with a Nesterov
momentum correction), and L-BFGS with a backtracking Armijo line search.
Every run is deterministic in (init, config), keeps the best iterate seen,
and reports whether the gradient-norm tolerance was met.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = ["Method", "OptimizerConfig", "OptimResult", "NonFiniteError", "minimize"]


class Method(Enum):
    ADAM = "adam"
    NADAM = "nadam"
    LBFGS = "lbfgs"


@dataclass(frozen=True)
class OptimizerConfig:
    method: Method = Method.ADAM
    step_size: float = 1e-2
    max_iters: int = 2000
    grad_tol: float = 1e-6
    history_size: int = 10  # L-BFGS only
    moment_decays: tuple[float, float] = (0.9, 0.999)
    epsilon: float = 1e-8  # inside adaptive-moment denominators

    def __post_init__(self):
        if self.step_size <= 0 or self.grad_tol <= 0 or self.max_iters < 1:
            raise ValueError("step_size, grad_tol must be positive and max_iters >= 1")
        if self.history_size < 1:
            raise ValueError("history_size must be >= 1")
        b1, b2 = self.moment_decays
        if not (0 < b1 < 1 and 0 < b2 < 1):
            raise ValueError("moment decays must lie in (0, 1)")


@dataclass(frozen=True)
class OptimResult:
    params: np.ndarray
    loss: float
    grad_norm: float
    iterations: int
    converged: bool


class NonFiniteError(ValueError):
    """Objective or gradient became non-finite; carries the offending iterate."""

    def __init__(self, message: str, iterate: np.ndarray):
        super().__init__(message)
        self.iterate = np.array(iterate)


class _Best:
    """Tracks the lowest-loss iterate visited so far."""

    def __init__(self, x: np.ndarray, f: float, gnorm: float):
        self.x, self.f, self.gnorm = x.copy(), f, gnorm

    def offer(self, x: np.ndarray, f: float, gnorm: float) -> None:
        if f < self.f:
            self.x, self.f, self.gnorm = x.copy(), f, gnorm


def _eval(objective, gradient, x: np.ndarray) -> tuple[float, np.ndarray]:
    # Gradient first: fused objective/gradient pairs memoize the value
    # computed alongside the gradient, making the objective call free.
    g = np.asarray(gradient(x), dtype=float)
    f = float(objective(x))
    if not np.isfinite(f):
        raise NonFiniteError(f"objective is {f} at iterate", x)
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("gradient has non-finite entries at iterate", x)
    return f, g


def minimize(objective, gradient, init, cfg: OptimizerConfig) -> OptimResult:
    """Minimize a smooth function from ``init``.

    Stops once the current gradient norm drops to ``cfg.grad_tol`` or the
    iteration budget runs out, and returns the best iterate seen (so the
    reported loss never exceeds the starting loss).  ``converged`` reflects
    the gradient norm at the returned point.
    """
    x = np.array(init, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("initial point is not finite", x)
    f, g = _eval(objective, gradient, x)
    best = _Best(x, f, float(np.linalg.norm(g)))
    iterations = 0

    if best.gnorm > cfg.grad_tol:
        if cfg.method in (Method.ADAM, Method.NADAM):
            iterations = _adaptive_moment(objective, gradient, x, f, g, cfg, best)
        else:
            iterations = _lbfgs(objective, gradient, x, f, g, cfg, best)

    return OptimResult(
        params=best.x,
        loss=best.f,
        grad_norm=best.gnorm,
        iterations=iterations,
        converged=bool(best.gnorm <= cfg.grad_tol),
    )


def _adaptive_moment(objective, gradient, x, f, g, cfg: OptimizerConfig, best: _Best) -> int:
    b1, b2 = cfg.moment_decays
    nesterov = cfg.method == Method.NADAM
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for it in range(1, cfg.max_iters + 1):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**it)
        v_hat = v / (1.0 - b2**it)
        if nesterov:
            m_hat = b1 * m_hat + (1.0 - b1) * g / (1.0 - b1**it)
        x = x - cfg.step_size * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        f, g = _eval(objective, gradient, x)
        gnorm = float(np.linalg.norm(g))
        best.offer(x, f, gnorm)
        if gnorm <= cfg.grad_tol:
            return it
    return cfg.max_iters


def _lbfgs(objective, gradient, x, f, g, cfg: OptimizerConfig, best: _Best) -> int:
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []

    for it in range(1, cfg.max_iters + 1):
        direction = -_two_loop(g, s_hist, y_hist, rho_hist)
        slope = float(direction @ g)
        if slope >= 0.0:
            # Not a descent direction: drop the history and fall back to
            # steepest descent.
            s_hist, y_hist, rho_hist = [], [], []
            direction = -g
            slope = -float(g @ g)

        step, f_new = _backtrack(objective, x, f, direction, slope)
        if step == 0.0:
            return it - 1  # line search stalled; best iterate already recorded
        x_new = x + step * direction
        g_new = np.asarray(gradient(x_new), dtype=float)
        if not (np.isfinite(f_new) and np.all(np.isfinite(g_new))):
            raise NonFiniteError("objective or gradient non-finite at iterate", x_new)
        gnorm = float(np.linalg.norm(g_new))
        best.offer(x_new, f_new, gnorm)

        s_vec = x_new - x
        y_vec = g_new - g
        sy = float(s_vec @ y_vec)
        if sy > 1e-10 * float(np.linalg.norm(s_vec)) * float(np.linalg.norm(y_vec)):
            s_hist.append(s_vec)
            y_hist.append(y_vec)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > cfg.history_size:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)
        x, f, g = x_new, f_new, g_new
        if gnorm <= cfg.grad_tol:
            return it
    return cfg.max_iters


def _two_loop(g: np.ndarray, s_hist, y_hist, rho_hist) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s_vec, y_vec, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
        a = rho * float(s_vec @ q)
        alphas.append(a)
        q -= a * y_vec
    if s_hist:
        y_last = y_hist[-1]
        q *= float(s_hist[-1] @ y_last) / float(y_last @ y_last)
    for s_vec, y_vec, rho, a in zip(s_hist, y_hist, rho_hist, reversed(alphas)):
        b = rho * float(y_vec @ q)
        q += (a - b) * s_vec
    return q


_ARMIJO = 1e-4
_BACKTRACK = 0.5
_MAX_HALVINGS = 40
_MAX_INTERP_STEP = 10.0


def _backtrack(objective, x, f, direction, slope):
    """Backtracking Armijo line search with quadratic interpolation.

    The unit step is probed along with the minimizer of the quadratic
    through phi(0), phi'(0), phi(1).  The interpolated step is trusted on
    its own only when the probe confirms the quadratic model, which makes
    it exact on quadratic objectives (so the quasi-Newton loop terminates
    in about `dim` iterations there) without letting a wildly wrong model
    collapse the step on strongly non-quadratic ones.  Otherwise a
    safeguarded interpolating shrink takes over.  Returns (step, value);
    step 0.0 signals a stall.
    """

    def admissible(step, value):
        return np.isfinite(value) and value <= f + _ARMIJO * step * slope

    f_unit = float(objective(x + direction))
    candidates = []
    if admissible(1.0, f_unit):
        candidates.append((1.0, f_unit))
    curvature = 2.0 * (f_unit - f - slope) if np.isfinite(f_unit) else 0.0
    if curvature > 0.0:
        step_q = min(-slope / curvature, _MAX_INTERP_STEP)
        if step_q > 0.0 and step_q != 1.0:
            f_q = float(objective(x + step_q * direction))
            if admissible(step_q, f_q):
                predicted = f + slope * step_q + 0.5 * curvature * step_q**2
                model_ok = abs(f_q - predicted) <= 1e-6 * (abs(f) + abs(f_q)) + 1e-12
                if model_ok or step_q >= 0.1:
                    candidates.append((step_q, f_q))
    if admissible(1.0, f_unit) and f_unit <= f + 0.5 * slope:
        # The unit step still captures at least half the linear decrease, so
        # the scaling of the direction is too timid (typical when curvature
        # pairs were rejected); march forward while the value keeps falling.
        step, f_step = 1.0, f_unit
        for _ in range(10):
            f_next = float(objective(x + 2.0 * step * direction))
            if admissible(2.0 * step, f_next) and f_next < f_step:
                step, f_step = 2.0 * step, f_next
            else:
                break
        candidates.append((step, f_step))
    if candidates:
        return min(candidates, key=lambda c: c[1])

    # Shrink with one-point interpolation, clipped to [0.1 t, 0.5 t] so the
    # step neither collapses nor stagnates.
    step, f_step = 1.0, f_unit
    for _ in range(_MAX_HALVINGS):
        denom = 2.0 * (f_step - f - slope * step) if np.isfinite(f_step) else 0.0
        proposal = -slope * step * step / denom if denom > 0.0 else 0.5 * step
        step = min(max(proposal, 0.1 * step), 0.5 * step)
        f_step = float(objective(x + step * direction))
        if admissible(step, f_step):
            return step, f_step
    return 0.0, f
