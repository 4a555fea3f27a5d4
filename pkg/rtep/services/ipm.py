"""Primal-dual interior-point method for smooth nonlinear programs

The iteration follows the slack formulation h(x) + Z = 0, Z > 0 with a
reduced Newton system

    [ M   dg' ] [dx  ]   [-N]
    [ dg   0  ] [dlam] = [-g]

where M = Lxx + dh' diag(mu/Z) dh. The KKT matrix is factorized with a
symmetric indefinite LDL' factorization whose inertia drives the Hessian
regularization, and the same factors serve both the predictor and the
corrector step.
"""

import logging
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from rtep.models.solver import IpmOptions, KktResiduals, NlpProblem, NlpSolution, SolveStatus

logger = logging.getLogger(__name__)


class _LdlSolver:
    """Solve K x = b from scipy.linalg.ldl factors"""

    def __init__(self, lu: np.ndarray, d: np.ndarray, perm: np.ndarray):
        self.lower = lu[perm]
        self.perm = perm
        n = d.shape[0]
        self.banded = np.zeros((3, n))
        self.banded[0, 1:] = np.diag(d, 1)
        self.banded[1] = np.diag(d)
        self.banded[2, :-1] = np.diag(d, -1)

    def __call__(self, b: np.ndarray) -> np.ndarray:
        w = la.solve_triangular(self.lower, b[self.perm], lower=True, unit_diagonal=True)
        v = la.solve_banded((1, 1), self.banded, w)
        y = la.solve_triangular(self.lower.T, v, lower=False, unit_diagonal=True)
        x = np.empty_like(y)
        x[self.perm] = y
        return x


def _inertia(d: np.ndarray) -> Tuple[int, int, int]:
    """(positive, negative, zero) eigenvalue counts of a 1x1/2x2 block-diagonal D"""
    n = d.shape[0]
    scale = max(1.0, float(np.max(np.abs(np.diag(d)))) if n else 1.0)
    tiny = 1e-13 * scale
    pos = neg = zero = 0
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            a, b, c = d[i, i], d[i + 1, i], d[i + 1, i + 1]
            det = a * c - b * b
            if det < -tiny * tiny:
                pos += 1
                neg += 1
            elif det > tiny * tiny:
                if a + c > 0:
                    pos += 2
                else:
                    neg += 2
            else:
                zero += 1
                if a + c > 0:
                    pos += 1
                else:
                    neg += 1
            i += 2
        else:
            v = d[i, i]
            if v > tiny:
                pos += 1
            elif v < -tiny:
                neg += 1
            else:
                zero += 1
            i += 1
    return pos, neg, zero


def _dense(A) -> np.ndarray:
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


class _Evaluator:
    """Problem callbacks with variable bounds appended as inequality rows"""

    def __init__(self, problem: NlpProblem):
        self.problem = problem
        n = problem.n
        self.upper = np.flatnonzero(np.isfinite(problem.xmax))
        self.lower = np.flatnonzero(np.isfinite(problem.xmin))
        eye = sp.identity(n, format="csr")
        self.bound_jac = sp.vstack([eye[self.upper], -eye[self.lower]], format="csr")
        self.n_bounds = self.upper.size + self.lower.size

    def constraints(self, x: np.ndarray):
        h, g, dh, dg = self.problem.constraints(x)
        h = np.asarray(h, dtype=float).reshape(-1)
        g = np.asarray(g, dtype=float).reshape(-1)
        if self.n_bounds:
            hb = np.concatenate([x[self.upper] - self.problem.xmax[self.upper],
                                 self.problem.xmin[self.lower] - x[self.lower]])
            h = np.concatenate([h, hb])
            dh = sp.vstack([sp.csr_matrix(dh, shape=(h.size - self.n_bounds, x.size)), self.bound_jac],
                           format="csr")
        dh = sp.csr_matrix(dh, shape=(h.size, x.size))
        dg = sp.csr_matrix(dg, shape=(g.size, x.size))
        return h, g, dh, dg

    def split_mu(self, mu: np.ndarray):
        """(problem rows, upper bounds, lower bounds)"""
        k = mu.size - self.n_bounds
        n = self.problem.n
        mu_upper = np.zeros(n)
        mu_lower = np.zeros(n)
        mu_upper[self.upper] = mu[k:k + self.upper.size]
        mu_lower[self.lower] = mu[k + self.upper.size:]
        return mu[:k], mu_upper, mu_lower


def _kkt_measures(x, f_grad, h, g, dh, dg, lam, mu) -> KktResiduals:
    lx = f_grad + dg.T @ lam + dh.T @ mu
    xnorm = float(np.max(np.abs(x))) if x.size else 0.0
    lam_norm = float(np.max(np.abs(lam))) if lam.size else 0.0
    mu_norm = float(np.max(np.abs(mu))) if mu.size else 0.0
    g_norm = float(np.max(np.abs(g))) if g.size else 0.0
    h_max = float(np.max(h)) if h.size else 0.0
    return KktResiduals(
        stationarity=float(np.max(np.abs(lx))) / (1.0 + max(lam_norm, mu_norm)) if lx.size else 0.0,
        feasibility=max(g_norm, h_max, 0.0) / (1.0 + xnorm),
        complementarity=float(np.sum(np.abs(mu * h))) / (1.0 + xnorm) if mu.size else 0.0,
        dual_sign=max(0.0, -float(np.min(mu))) if mu.size else 0.0,
    )


def check_kkt(
    problem: NlpProblem,
    x: np.ndarray,
    lam: Optional[np.ndarray] = None,
    mu: Optional[np.ndarray] = None,
    mu_lower: Optional[np.ndarray] = None,
    mu_upper: Optional[np.ndarray] = None,
) -> KktResiduals:
    """Scaled KKT residuals of a candidate point

    Stationarity is divided by 1 + max multiplier, feasibility and
    complementarity by 1 + max |x|, the same scaling pdipm_solve converges on.
    """
    x = np.asarray(x, dtype=float)
    ev = _Evaluator(problem)
    h, g, dh, dg = ev.constraints(x)
    _, df = problem.objective(x)
    lam = np.zeros(g.size) if lam is None else np.asarray(lam, dtype=float)
    mu_rows = np.zeros(h.size - ev.n_bounds) if mu is None else np.asarray(mu, dtype=float)
    mu_upper = np.zeros(problem.n) if mu_upper is None else np.asarray(mu_upper, dtype=float)
    mu_lower = np.zeros(problem.n) if mu_lower is None else np.asarray(mu_lower, dtype=float)
    mu_all = np.concatenate([mu_rows, mu_upper[ev.upper], mu_lower[ev.lower]])
    return _kkt_measures(x, np.asarray(df, dtype=float), h, g, dh, dg, lam, mu_all)


def pdipm_solve(
    problem: NlpProblem,
    options: Optional[IpmOptions] = None,
    x0: Optional[np.ndarray] = None,
) -> NlpSolution:
    """Solve an NLP with the primal-dual interior-point method

    Args:
        problem: Problem callbacks and data
        options: Solver options (defaults from settings)
        x0: Optional starting point overriding problem.x0

    Returns:
        NlpSolution: Converged KKT point; the best iterate that met the
        acceptable tolerance with status ACCEPTABLE; or the last iterate with
        a max-iter / numerical-failure status
    """
    opt = options or IpmOptions()
    ev = _Evaluator(problem)
    n = problem.n
    x = np.array(problem.x0 if x0 is None else x0, dtype=float)

    f, df = problem.objective(x)
    h, g, dh, dg = ev.constraints(x)
    neq, niq = g.size, h.size

    lam = np.zeros(neq)
    Z = np.full(niq, opt.z0)
    far = h < -opt.z0
    Z[far] = -h[far]
    gamma = 1.0
    mu = np.full(niq, opt.z0)
    big = gamma / Z > opt.z0
    mu[big] = gamma / Z[big]

    history = []
    delta_prev = 0.0
    status = SolveStatus.MAX_ITER
    message = ""
    acceptable_point = None
    f_prev = f
    residuals = _kkt_measures(x, df, h, g, dh, dg, lam, mu)

    for iteration in range(1, opt.max_iter + 1):
        mu_rows, _, _ = ev.split_mu(mu)
        Lxx = _dense(problem.hessian(x, lam, mu_rows, 1.0))
        dh_d = dh.toarray()
        dg_d = dg.toarray()
        Lx = df + dg_d.T @ lam + dh_d.T @ mu
        zinv = 1.0 / Z if niq else np.zeros(0)
        M = Lxx + (dh_d.T * (mu * zinv)) @ dh_d if niq else Lxx

        solver, delta_prev, ok = _factorize(M, dg_d, n, neq, delta_prev, opt.max_regularization)
        if not ok:
            status = SolveStatus.NUMERICAL_FAILURE
            message = "KKT system could not be regularized"
            break

        def newton(rc):
            if niq:
                N = Lx + dh_d.T @ ((rc + mu * (h + Z)) * zinv)
            else:
                N = Lx
            sol = solver(-np.concatenate([N, g]))
            dx, dlam = sol[:n], sol[n:]
            if niq:
                dZ = -h - Z - dh_d @ dx
                dmu = (rc - mu * dZ) * zinv
            else:
                dZ = dmu = np.zeros(0)
            return dx, dlam, dZ, dmu

        if niq and opt.predictor_corrector:
            dx, dlam, dZ, dmu = newton(-Z * mu)
            ap, ad = _step_lengths(Z, dZ, mu, dmu, 1.0)
            gap = Z @ mu / niq
            gap_aff = (Z + ap * dZ) @ (mu + ad * dmu) / niq
            sigma = min(1.0, (gap_aff / gap) ** 3) if gap > 0 else 0.0
            gamma = min(sigma * gap, gamma) if iteration > 1 else sigma * gap
            dx, dlam, dZ, dmu = newton(gamma - Z * mu - dZ * dmu)
        else:
            dx, dlam, dZ, dmu = newton(gamma - Z * mu if niq else np.zeros(0))

        if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dlam))):
            status = SolveStatus.NUMERICAL_FAILURE
            message = "non-finite Newton step"
            break

        alpha_p, alpha_d = _step_lengths(Z, dZ, mu, dmu, opt.step_fraction)
        x = x + alpha_p * dx
        lam = lam + alpha_d * dlam
        if niq:
            Z = Z + alpha_p * dZ
            mu = mu + alpha_d * dmu
            if not opt.predictor_corrector:
                gamma = opt.sigma * (Z @ mu) / niq

        f, df = problem.objective(x)
        h, g, dh, dg = ev.constraints(x)
        if not (np.isfinite(f) and np.all(np.isfinite(h)) and np.all(np.isfinite(g))):
            status = SolveStatus.NUMERICAL_FAILURE
            message = "non-finite function values"
            break

        residuals = _kkt_measures(x, df, h, g, dh, dg, lam, mu)
        cost_change = abs(f - f_prev) / (1.0 + abs(f_prev))
        f_prev = f
        record = {
            "iteration": iteration,
            "objective": float(f),
            "feasibility": residuals.feasibility,
            "stationarity": residuals.stationarity,
            "complementarity": residuals.complementarity,
            "barrier": float(gamma),
            "alpha_p": float(alpha_p),
            "alpha_d": float(alpha_d),
        }
        history.append(record)
        if opt.log_iterations and logger.isEnabledFor(logging.DEBUG):
            logger.debug(
                f"[{problem.name}] it {iteration:3d} f={f:.8e} feas={residuals.feasibility:.2e} "
                f"grad={residuals.stationarity:.2e} comp={residuals.complementarity:.2e} "
                f"gamma={gamma:.2e} ap={alpha_p:.3f} ad={alpha_d:.3f}"
            )

        if residuals.within(opt.tolerance) and cost_change < opt.tolerance:
            status = SolveStatus.CONVERGED
            break
        if residuals.within(opt.acceptable_tolerance):
            acceptable_point = (x.copy(), lam.copy(), mu.copy(), f, residuals, iteration)

    if status != SolveStatus.CONVERGED and acceptable_point is not None:
        x, lam, mu, f, residuals, it_ok = acceptable_point
        message = f"iterate {it_ok} kept after {status.value}{': ' + message if message else ''}"
        logger.warning(
            f"[{problem.name}] only the acceptable tolerance {opt.acceptable_tolerance:g} was met ({message})"
        )
        status = SolveStatus.ACCEPTABLE

    mu_rows, mu_upper, mu_lower = ev.split_mu(mu)
    if status not in (SolveStatus.CONVERGED, SolveStatus.ACCEPTABLE):
        logger.warning(f"[{problem.name}] PDIPM stopped with status {status.value} after {len(history)} iterations")
    return NlpSolution(
        x=x,
        lam=lam,
        mu=mu_rows,
        mu_lower=mu_lower,
        mu_upper=mu_upper,
        objective=float(f),
        status=status,
        iterations=len(history),
        residuals=residuals,
        history=history,
        message=message,
    )


def _step_lengths(Z, dZ, mu, dmu, fraction) -> Tuple[float, float]:
    alpha_p = alpha_d = 1.0
    neg = dZ < 0
    if np.any(neg):
        alpha_p = min(1.0, fraction * float(np.min(-Z[neg] / dZ[neg])))
    neg = dmu < 0
    if np.any(neg):
        alpha_d = min(1.0, fraction * float(np.min(-mu[neg] / dmu[neg])))
    return alpha_p, alpha_d


def _factorize(M, dg, n, neq, delta_prev, max_delta):
    """LDL' of the KKT matrix with inertia-correcting regularization"""
    K = np.zeros((n + neq, n + neq))
    K[:n, :n] = 0.5 * (M + M.T)
    K[n:, :n] = dg
    K[:n, n:] = dg.T
    delta = 0.0
    delta_c = 0.0
    first = True
    while True:
        Kr = K.copy()
        if delta:
            Kr[np.arange(n), np.arange(n)] += delta
        if delta_c:
            Kr[np.arange(n, n + neq), np.arange(n, n + neq)] -= delta_c
        try:
            lu, d, perm = la.ldl(Kr, lower=True, hermitian=True)
        except (ValueError, la.LinAlgError):
            return None, delta_prev, False
        pos, neg, zero = _inertia(d)
        if pos == n and neg == neq and zero == 0:
            break
        if zero and neq and not delta_c:
            delta_c = 1e-8
        if first:
            delta = 1e-8 if delta_prev == 0 else max(1e-20, delta_prev / 3.0)
            first = False
        else:
            delta *= 100.0 if delta_prev == 0 else 8.0
        if delta > max_delta:
            return None, delta_prev, False
    return _LdlSolver(lu, d, perm), delta, True


def multistart_solve(
    problem: NlpProblem,
    starts: Iterable[np.ndarray],
    options: Optional[IpmOptions] = None,
) -> NlpSolution:
    """Run pdipm_solve from several starts and keep the best point

    Strictly converged points rank ahead of acceptable ones.
    """
    best = None
    last = None
    for k, x0 in enumerate(starts):
        sol = pdipm_solve(problem, options, x0=x0)
        last = sol
        if sol.usable and (best is None or (sol.converged, -sol.objective) > (best.converged, -best.objective)):
            best = sol
        elif not sol.usable:
            logger.info(f"[{problem.name}] start {k} ended with status {sol.status.value}")
    if best is None:
        if last is None:
            raise ValueError("multistart_solve needs at least one start")
        return last
    return best


def check_derivatives(
    problem: NlpProblem,
    x: np.ndarray,
    eps: float = 1e-6,
    seed: int = 0,
) -> Dict[str, float]:
    """Relative errors of analytic derivatives against central differences

    Returns:
        dict: Max relative error for the gradient, the Jacobians of h and g and
        the Hessian of the Lagrangian at random multipliers
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    rng = np.random.default_rng(seed)
    _, df = problem.objective(x)
    h, g, dh, dg = problem.constraints(x)
    dh, dg = _dense(dh).reshape(-1, n), _dense(dg).reshape(-1, n)
    lam = rng.uniform(-1, 1, size=np.size(g))
    mu = rng.uniform(0, 1, size=np.size(h))

    def lagrangian_grad(z):
        _, dfz = problem.objective(z)
        _, _, dhz, dgz = problem.constraints(z)
        return np.asarray(dfz) + _dense(dgz).reshape(-1, n).T @ lam + _dense(dhz).reshape(-1, n).T @ mu

    fd_grad = np.zeros(n)
    fd_dh = np.zeros_like(dh)
    fd_dg = np.zeros_like(dg)
    fd_hess = np.zeros((n, n))
    for k in range(n):
        step = np.zeros(n)
        step[k] = eps * max(1.0, abs(x[k]))
        fp, _ = problem.objective(x + step)
        fm, _ = problem.objective(x - step)
        hp, gp, _, _ = problem.constraints(x + step)
        hm, gm, _, _ = problem.constraints(x - step)
        width = 2 * step[k]
        fd_grad[k] = (fp - fm) / width
        fd_dh[:, k] = (np.asarray(hp) - np.asarray(hm)) / width
        fd_dg[:, k] = (np.asarray(gp) - np.asarray(gm)) / width
        fd_hess[:, k] = (lagrangian_grad(x + step) - lagrangian_grad(x - step)) / width
    hess = _dense(problem.hessian(x, lam, mu, 1.0))

    def rel(a, b):
        if a.size == 0:
            return 0.0
        return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))

    return {
        "gradient": rel(fd_grad, np.asarray(df, dtype=float)),
        "inequality_jacobian": rel(fd_dh, dh),
        "equality_jacobian": rel(fd_dg, dg),
        "hessian": rel(fd_hess, hess),
    }
