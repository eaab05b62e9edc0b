"""Quasi-Newton minimizer used by the calibrator fits.

Limited-memory BFGS (two-loop recursion) with Armijo backtracking; curvature
pairs failing the positivity test are dropped, which degrades gracefully to
plain gradient descent with step halving. An optional projection is applied
to every candidate iterate, so constraints hold at every accepted point and
the monotone-decrease contract covers the projected sequence.
"""

from dataclasses import dataclass

import numpy as np

MAX_ITER = 500
GRAD_TOL = 1e-7
LOSS_REL_TOL = 1e-10
MEMORY = 10
ARMIJO_C1 = 1e-4
BACKTRACK_FACTOR = 0.5
MAX_BACKTRACKS = 60
CURVATURE_EPS = 1e-10


@dataclass
class MinimizeResult:
    x: np.ndarray
    initial_loss: float
    final_loss: float
    iterations: int
    converged: bool
    grad_norm: float


def _two_loop_direction(grad, s_list, y_list, rho_list):
    q = grad.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    # scale by the latest curvature estimate
    s, y = s_list[-1], y_list[-1]
    q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def minimize(fun_grad, x0, project=None, max_iter=MAX_ITER, grad_tol=GRAD_TOL,
             loss_rel_tol=LOSS_REL_TOL, memory=MEMORY):
    """Minimize fun_grad(x) -> (loss, grad) starting from x0.

    project(x) -> x, when given, maps any point into the feasible set; it is
    applied to x0 and to every line-search candidate.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    if project is not None:
        x = project(x)
    f, g = fun_grad(x)
    f0 = f
    s_list, y_list, rho_list = [], [], []
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm < grad_tol:
            converged = True
            iterations -= 1
            break

        if s_list:
            d = _two_loop_direction(g, s_list, y_list, rho_list)
            if np.dot(d, g) >= 0.0:  # not a descent direction, reset
                s_list, y_list, rho_list = [], [], []
                d = -g
        else:
            d = -g

        # first-step scaling keeps the raw-gradient step sane on summed losses
        alpha = 1.0 if s_list else min(1.0, 1.0 / max(1.0, float(np.sum(np.abs(g)))))
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            x_new = x + alpha * d
            if project is not None:
                x_new = project(x_new)
            step = x_new - x
            if not np.any(step):
                break
            f_new, g_new = fun_grad(x_new)
            if f_new <= f + ARMIJO_C1 * np.dot(g, step):
                accepted = True
                break
            alpha *= BACKTRACK_FACTOR
        if not accepted:
            break  # no further decrease possible at this scale

        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > CURVATURE_EPS * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > memory:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)

        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        if decrease <= loss_rel_tol * max(1.0, abs(f)):
            converged = True
            break

    return MinimizeResult(
        x=x,
        initial_loss=float(f0),
        final_loss=float(f),
        iterations=iterations,
        converged=converged,
        grad_norm=float(np.max(np.abs(g))) if g.size else 0.0,
    )
