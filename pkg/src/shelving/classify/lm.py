"""Damped Gauss-Newton (Levenberg-Marquardt) least squares."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class FitError(RuntimeError):
    """Fit did not converge or the data cannot support the model."""

    def __init__(self, message, residual_norm=None):
        super().__init__(message if residual_norm is None else f"{message} (residual norm {residual_norm:.4g})")
        self.residual_norm = residual_norm


@dataclass
class LMResult:
    params: np.ndarray
    stderr: np.ndarray
    cov: np.ndarray
    cost: float                      # sum of squared residuals
    n_iter: int
    history: list = field(default_factory=list)  # cost after each accepted step


def levenberg_marquardt(residual, jacobian, p0, max_iter=200, xtol=1e-12, ftol=1e-14, lam0=1e-3):
    """
    Minimise ``sum(residual(p)**2)``.

    Uses Marquardt's diagonal scaling: the damped normal equations are
    ``(J^T J + lam * diag(J^T J)) dp = -J^T r``.  A step is accepted only if
    it lowers the cost, so ``history`` is non-increasing.
    """
    p = np.asarray(p0, dtype=float).copy()
    r = residual(p)
    cost = float(r @ r)
    history = [cost]
    lam = lam0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = jacobian(p)
        A = J.T @ J
        g = J.T @ r
        diag = np.maximum(np.diag(A), 1e-300)
        improved = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            p_new = p + step
            r_new = residual(p_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                improved = True
                break
            lam *= 10
        if not improved:
            # no descent direction left: we are at a (numerical) minimum
            converged = True
            break
        small_step = np.all(np.abs(step) <= xtol * (np.abs(p) + xtol))
        small_gain = cost - cost_new <= ftol * max(cost, 1e-300)
        p, r, cost = p_new, r_new, cost_new
        history.append(cost)
        lam = max(lam / 10, 1e-15)
        if small_step or small_gain:
            converged = True
            break
    if not converged:
        raise FitError(f"no convergence after {max_iter} iterations", np.sqrt(cost))

    J = jacobian(p)
    dof = max(len(r) - len(p), 1)
    try:
        cov = np.linalg.inv(J.T @ J) * (cost / dof)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular Jacobian at solution", np.sqrt(cost)) from exc
    stderr = np.sqrt(np.clip(np.diag(cov), 0, None))
    return LMResult(p, stderr, cov, cost, it, history)
