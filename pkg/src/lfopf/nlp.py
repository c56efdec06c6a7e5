"""Smooth NLP contract and a self-contained primal-dual interior-point solver.

Problem form: min f(x) s.t. g(x) = 0, h(x) <= 0, lb <= x <= ub. An instance
is any object exposing n, lb, ub, x0 and the evaluators objective/gradient/
equalities/eq_jacobian/inequalities/ineq_jacobian (dense Jacobians). The
assembled OPF satisfies this protocol; NlpInstance wraps plain callables
for small problems and tests.

Algorithm: slack variables on all inequalities (finite variable bounds are
folded in as inequality rows, equal bounds as equality rows), logarithmic
barrier with a monotone barrier schedule (mu divided by 10 each time the
inner Newton loop converges), fraction-to-the-boundary step clipping at
0.995, an l1-penalty Armijo line search, and inertia-correcting diagonal
regularization of the KKT matrix when factorization fails or produces an
ascent direction. Runs are deterministic: no randomness, no time-based
control flow.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    LOCALLY_INFEASIBLE = "locally_infeasible"
    ITERATION_LIMIT = "iteration_limit"
    NUMERICAL_ERROR = "numerical_error"


class AllStartsFailedError(RuntimeError):
    """No multistart run reached an optimal point."""


@dataclass
class SolverOptions:
    tol_kkt: float = 1e-8
    max_iter: int = 3000
    mu0: float = 0.1
    ftb: float = 0.995          # fraction-to-the-boundary factor
    hessian: str = "fd"         # fd | bfgs | gn
    line_search: bool = True
    inner_max: int = 150
    fd_step: float = 1e-5
    trace: object = None        # optional per-iteration callback (diagnostics)


@dataclass
class SolveResult:
    status: SolveStatus
    x: np.ndarray
    objective: float
    iterations: int
    kkt: dict
    wall_time: float
    lam: np.ndarray             # equality multipliers (user rows)
    z: np.ndarray               # inequality multipliers (user rows)
    mult_lb: np.ndarray         # lower-bound multipliers per variable
    mult_ub: np.ndarray
    barrier_path: list = field(default_factory=list)
    message: str = ""


def _as_array(v, n, fill):
    if v is None:
        return np.full(n, fill)
    return np.asarray(v, dtype=float)


@dataclass
class NlpInstance:
    """Callable-based instance for direct construction in code and tests."""
    n: int
    objective: callable
    gradient: callable
    equalities: callable = None
    eq_jacobian: callable = None
    inequalities: callable = None
    ineq_jacobian: callable = None
    lb: np.ndarray = None
    ub: np.ndarray = None
    x0: np.ndarray = None

    def __post_init__(self):
        if self.equalities is None:
            self.equalities = lambda x: np.zeros(0)
            self.eq_jacobian = lambda x: np.zeros((0, self.n))
        if self.inequalities is None:
            self.inequalities = lambda x: np.zeros(0)
            self.ineq_jacobian = lambda x: np.zeros((0, self.n))
        self.lb = _as_array(self.lb, self.n, -np.inf)
        self.ub = _as_array(self.ub, self.n, np.inf)
        if self.x0 is None:
            self.x0 = np.clip(np.zeros(self.n), self.lb, self.ub)


class _Expanded:
    """Instance view with bounds folded into constraint rows.

    Finite lower/upper bounds become inequality rows appended after the
    user's; pinned variables (lb == ub) become equality rows appended after
    the user's. Both extra Jacobian blocks are constant.
    """

    def __init__(self, inst):
        self.inst = inst
        self.n = inst.n
        lb = np.asarray(inst.lb, dtype=float)
        ub = np.asarray(inst.ub, dtype=float)
        fixed = np.isfinite(lb) & np.isfinite(ub) & (ub - lb <= 1e-14)
        self.fixed_idx = np.flatnonzero(fixed)
        self.fixed_val = lb[self.fixed_idx]
        self.lb_idx = np.flatnonzero(np.isfinite(lb) & ~fixed)
        self.ub_idx = np.flatnonzero(np.isfinite(ub) & ~fixed)
        self.lb_val = lb[self.lb_idx]
        self.ub_val = ub[self.ub_idx]

        self.m_user = len(inst.equalities(inst.x0))
        self.p_user = len(inst.inequalities(inst.x0))
        self.m = self.m_user + len(self.fixed_idx)
        self.p = self.p_user + len(self.lb_idx) + len(self.ub_idx)

        self._Jfix = np.zeros((len(self.fixed_idx), self.n))
        for r, j in enumerate(self.fixed_idx):
            self._Jfix[r, j] = 1.0
        self._Jb = np.zeros((len(self.lb_idx) + len(self.ub_idx), self.n))
        for r, j in enumerate(self.lb_idx):
            self._Jb[r, j] = -1.0
        for r, j in enumerate(self.ub_idx):
            self._Jb[len(self.lb_idx) + r, j] = 1.0

    def g(self, x):
        rows = [self.inst.equalities(x)]
        if len(self.fixed_idx):
            rows.append(x[self.fixed_idx] - self.fixed_val)
        return np.concatenate(rows) if self.m else np.zeros(0)

    def Jg(self, x):
        if not self.m:
            return np.zeros((0, self.n))
        return np.vstack([self.inst.eq_jacobian(x), self._Jfix]) if len(self.fixed_idx) \
            else self.inst.eq_jacobian(x)

    def h(self, x):
        rows = [self.inst.inequalities(x)]
        if len(self.lb_idx):
            rows.append(self.lb_val - x[self.lb_idx])
        if len(self.ub_idx):
            rows.append(x[self.ub_idx] - self.ub_val)
        return np.concatenate(rows) if self.p else np.zeros(0)

    def Jh(self, x):
        if not self.p:
            return np.zeros((0, self.n))
        blocks = [self.inst.ineq_jacobian(x)]
        if len(self._Jb):
            blocks.append(self._Jb)
        return np.vstack(blocks)

    def grad_lagrangian(self, x, lam, z):
        out = self.inst.gradient(x).astype(float, copy=True)
        if self.m:
            out += self.Jg(x).T @ lam
        if self.p:
            out += self.Jh(x).T @ z
        return out


class _Hessian:
    """Lagrangian Hessian strategies; all return a dense symmetric matrix."""

    def __init__(self, ex: _Expanded, opts: SolverOptions):
        self.ex = ex
        self.opts = opts
        self.B = np.eye(ex.n)
        self._prev = None  # (x, gradL) for BFGS

    def reset(self):
        self.B = np.eye(self.ex.n)
        self._prev = None

    def compute(self, x, lam, z):
        mode = self.opts.hessian
        if mode == "fd":
            return self._fd(x, lam, z)
        if mode == "gn":
            return self._gauss_newton(x, lam, z)
        if mode == "bfgs":
            return self.B.copy()
        raise ValueError(f"unknown hessian mode {self.opts.hessian!r}")

    def _fd(self, x, lam, z):
        # Central differences of the Lagrangian gradient; bound rows are
        # linear and contribute nothing, so only user multipliers enter.
        n = self.ex.n
        lam_u = lam[:self.ex.m_user]
        z_u = z[:self.ex.p_user]
        inst = self.ex.inst

        def gradL(xp):
            out = inst.gradient(xp).astype(float, copy=True)
            if self.ex.m_user:
                out += inst.eq_jacobian(xp).T @ lam_u
            if self.ex.p_user:
                out += inst.ineq_jacobian(xp).T @ z_u
            return out

        H = np.zeros((n, n))
        for j in range(n):
            hj = self.opts.fd_step * max(1.0, abs(x[j]))
            xp = x.copy()
            xp[j] += hj
            gp = gradL(xp)
            xp[j] = x[j] - hj
            gm = gradL(xp)
            H[:, j] = (gp - gm) / (2.0 * hj)
        return 0.5 * (H + H.T)

    def _gauss_newton(self, x, lam, z):
        H = np.zeros((self.ex.n, self.ex.n))
        diag = getattr(self.ex.inst, "objective_hessian_diag", None)
        if diag is not None:
            H[np.diag_indices_from(H)] = diag(x)
        Jg = self.ex.Jg(x)
        if len(Jg):
            H += Jg.T @ Jg
        Jh = self.ex.Jh(x)
        if len(Jh):
            H += Jh.T @ Jh
        return H

    def bfgs_update(self, x_new, lam, z):
        if self.opts.hessian != "bfgs":
            return
        g_new = self.ex.grad_lagrangian(x_new, lam, z)
        if self._prev is not None:
            x_old, _ = self._prev
            g_old = self.ex.grad_lagrangian(x_old, lam, z)
            s = x_new - x_old
            y = g_new - g_old
            Bs = self.B @ s
            sBs = float(s @ Bs)
            sy = float(s @ y)
            if sBs > 1e-16:
                # Powell damping keeps the update positive definite
                if sy < 0.2 * sBs:
                    theta = 0.8 * sBs / (sBs - sy)
                    y = theta * y + (1.0 - theta) * Bs
                    sy = float(s @ y)
                if sy > 1e-16:
                    self.B = self.B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
        self._prev = (x_new.copy(), g_new)


def solve(inst, opts: SolverOptions | None = None) -> SolveResult:
    """Run the interior-point method on an NLP instance.

    On OPTIMAL the returned point satisfies stationarity, equality and
    inequality feasibility and complementarity to tol_kkt. Deterministic
    for identical inputs and options.
    """
    opts = opts or SolverOptions()
    t_start = time.perf_counter()
    ex = _Expanded(inst)
    n, m, p = ex.n, ex.m, ex.p

    x = np.asarray(inst.x0, dtype=float).copy()
    if len(ex.fixed_idx):
        x[ex.fixed_idx] = ex.fixed_val
    lam = np.zeros(m)
    hx = ex.h(x)
    s = np.maximum(-hx, 0.1) if p else np.zeros(0)
    mu = opts.mu0
    z = np.minimum(np.maximum(mu / s, 1e-8), 1e8) if p else np.zeros(0)

    hess = _Hessian(ex, opts)
    barrier_path = [mu]
    nu = 1.0  # l1 penalty weight
    total_iters = 0
    message = ""
    status = None
    mu_min = max(opts.tol_kkt * 1e-2, 1e-14)
    consecutive_tiny = 0

    def residuals(xv, lamv, zv, sv, muv):
        gx = ex.g(xv)
        hv = ex.h(xv)
        rd = ex.grad_lagrangian(xv, lamv, zv)
        comp = sv * zv - muv if p else np.zeros(0)
        return gx, hv, rd, comp

    def kkt_norms(gx, hv, rd, sv, zv):
        stat = float(np.max(np.abs(rd))) if n else 0.0
        eq = float(np.max(np.abs(gx))) if m else 0.0
        ineq = float(np.max(np.abs(hv + sv))) if p else 0.0
        comp0 = float(np.max(np.abs(sv * zv))) if p else 0.0
        return dict(stationarity=stat, eq=eq, ineq=ineq, comp=comp0)

    def merit(xv, sv, muv, nuv):
        val = inst.objective(xv)
        if p:
            if np.any(sv <= 0.0):
                return np.inf
            val -= muv * float(np.sum(np.log(sv)))
        gx = ex.g(xv)
        hv = ex.h(xv)
        pen = 0.0
        if m:
            pen += float(np.sum(np.abs(gx)))
        if p:
            pen += float(np.sum(np.abs(hv + sv)))
        return val + nuv * pen

    while True:
        # ----- inner Newton loop for the current barrier parameter -----
        inner = 0
        while True:
            gx, hv, rd, comp = residuals(x, lam, z, s, mu)
            if not np.all(np.isfinite(rd)) or not np.all(np.isfinite(gx)) \
                    or (p and not np.all(np.isfinite(hv))):
                status = SolveStatus.NUMERICAL_ERROR
                message = "non-finite residuals"
                break
            norms = kkt_norms(gx, hv, rd, s, z)
            err_mu = max(norms["stationarity"], norms["eq"], norms["ineq"],
                         float(np.max(np.abs(comp))) if p else 0.0)
            # optimality for the original problem
            if max(norms.values()) <= opts.tol_kkt:
                status = SolveStatus.OPTIMAL
                break
            if err_mu <= max(mu, 0.1 * opts.tol_kkt):
                break  # inner converged, tighten barrier
            if total_iters >= opts.max_iter:
                status = SolveStatus.ITERATION_LIMIT
                break
            if inner >= opts.inner_max:
                break

            W = hess.compute(x, lam, z)
            Jg = ex.Jg(x)
            Jh = ex.Jh(x)
            rh = hv + s if p else np.zeros(0)

            if p:
                with np.errstate(over="ignore", divide="ignore"):
                    sigma = np.minimum(z / s, 1e16)
                    barrier_term = np.minimum(mu / s, 1e16)
                M = W + Jh.T @ (sigma[:, None] * Jh)
                Ncorr = Jh.T @ (barrier_term + sigma * rh)
            else:
                M = W
                Ncorr = np.zeros(n)
            grad_obj = inst.gradient(x).astype(float, copy=True)
            base = grad_obj + (Jg.T @ lam if m else 0.0)
            rhs_x = -(base + Ncorr)

            # Inertia correction: a useful Newton direction needs the
            # Hessian block positive semidefinite on the null space of the
            # equality Jacobian. Escalate delta_w only on clearly negative
            # curvature, jumping straight past the offending eigenvalue;
            # weakly positive curvature is left to the line search.
            if m:
                q_full, _ = np.linalg.qr(Jg.T, mode="complete")
                Znull = q_full[:, min(m, n):]
            else:
                Znull = np.eye(n)
            delta_w = 0.0
            dx = dlam = None
            for attempt in range(30):
                M_reg = M + delta_w * np.eye(n)
                if Znull.shape[1]:
                    red = Znull.T @ M_reg @ Znull
                    scale_red = 1.0 + float(np.max(np.abs(red)))
                    try:
                        ev_min = float(np.min(np.linalg.eigvalsh(0.5 * (red + red.T))))
                    except np.linalg.LinAlgError:
                        ev_min = -scale_red
                    if ev_min < -1e-12 * scale_red:
                        delta_w = max(1.2 * (-ev_min), 10.0 * delta_w, 1e-8)
                        continue
                K = np.zeros((n + m, n + m))
                K[:n, :n] = M_reg
                if m:
                    K[:n, n:] = Jg.T
                    K[n:, :n] = Jg
                    if delta_w > 0.0:
                        K[n:, n:] = -1e-10 * np.eye(m)
                rhs = np.concatenate([rhs_x, -gx]) if m else rhs_x
                try:
                    sol = np.linalg.solve(K, rhs)
                except np.linalg.LinAlgError:
                    delta_w = max(10.0 * delta_w, 1e-8)
                    continue
                if not np.all(np.isfinite(sol)):
                    delta_w = max(10.0 * delta_w, 1e-8)
                    continue
                dx = sol[:n]
                dlam = sol[n:]
                break
            if dx is None:
                status = SolveStatus.NUMERICAL_ERROR
                message = "KKT system could not be factorized"
                break

            if p:
                ds = -rh - Jh @ dx
                with np.errstate(over="ignore", divide="ignore"):
                    barrier_slope = float(np.sum(np.clip(ds / s, -1e16, 1e16)))
                dphi = float(grad_obj @ dx) - mu * barrier_slope
                # from the linearized complementarity S z = mu e; clipped so
                # collapsing slacks on infeasible problems cannot overflow
                # (fraction-to-the-boundary damps the step anyway)
                with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                    dz = np.clip((mu - s * z - z * ds) / s, -1e16, 1e16)
            else:
                ds = np.zeros(0)
                dphi = float(grad_obj @ dx)
            viol = (float(np.sum(np.abs(gx))) if m else 0.0) + \
                   (float(np.sum(np.abs(rh))) if p else 0.0)

            # l1 penalty weight: at least the multiplier scale, and large
            # enough that the (inertia-corrected) direction is a descent
            # direction for the merit function
            lam_trial = lam + dlam if m else lam
            est = 0.0
            if m:
                est = max(est, float(np.max(np.abs(lam_trial))))
            if p:
                est = max(est, float(np.max(np.abs(z))))
            nu = max(nu, 1.5 * est + 1.0)
            if viol > 1e-8 and dphi > 0.0:
                nu = max(nu, 2.0 * dphi / viol + 1.0)

            # fraction-to-the-boundary step limits
            alpha_p = 1.0
            alpha_d = 1.0
            if p:
                neg = ds < 0
                if np.any(neg):
                    alpha_p = min(1.0, opts.ftb * float(np.min(-s[neg] / ds[neg])))
                negz = dz < 0
                if np.any(negz):
                    alpha_d = min(1.0, opts.ftb * float(np.min(-z[negz] / dz[negz])))

            alpha = alpha_p
            if opts.line_search:
                phi0 = merit(x, s, mu, nu)
                dphi0 = float(grad_obj @ dx)
                if p:
                    with np.errstate(over="ignore", divide="ignore"):
                        dphi0 -= mu * float(np.sum(np.clip(ds / s, -1e16, 1e16)))
                dphi0 -= nu * viol
                ok = False
                for _ in range(25):
                    xt = x + alpha * dx
                    st = s + alpha * ds if p else s
                    if merit(xt, st, mu, nu) <= phi0 + 1e-4 * alpha * min(dphi0, 0.0):
                        ok = True
                        break
                    alpha *= 0.5
                if not ok:
                    alpha = min(alpha, 1e-10)

            x = x + alpha * dx
            if p:
                s = s + alpha * ds
                z = z + alpha_d * dz
                z = np.maximum(z, 1e-16)
            if m:
                lam = lam + alpha_d * dlam
            hess.bfgs_update(x, lam, z)
            if opts.trace is not None:
                opts.trace(dict(iter=total_iters, mu=mu, alpha=alpha,
                                alpha_d=alpha_d, delta_w=delta_w, nu=nu,
                                viol=viol, dphi=dphi, err=err_mu))

            total_iters += 1
            inner += 1
            if alpha <= 1e-10 and alpha_p > 1e-10:
                consecutive_tiny += 1
            else:
                consecutive_tiny = 0
            if consecutive_tiny >= 8:
                gx, hv, rd, comp = residuals(x, lam, z, s, mu)
                infeas = max(float(np.max(np.abs(gx))) if m else 0.0,
                             float(np.max(hv)) if p else 0.0)
                status = (SolveStatus.LOCALLY_INFEASIBLE if infeas > 1e-6
                          else SolveStatus.NUMERICAL_ERROR)
                message = "step length collapsed"
                break

        if status is not None:
            break
        if total_iters >= opts.max_iter:
            status = SolveStatus.ITERATION_LIMIT
            break
        if mu <= mu_min:
            # barrier exhausted; classify what we ended at
            gx, hv, rd, comp = residuals(x, lam, z, s, 0.0)
            norms = kkt_norms(gx, hv, rd, s, z)
            if max(norms.values()) <= opts.tol_kkt:
                status = SolveStatus.OPTIMAL
            else:
                infeas = max(norms["eq"], float(np.max(hv)) if p else 0.0)
                status = (SolveStatus.LOCALLY_INFEASIBLE if infeas > 10.0 * opts.tol_kkt
                          else SolveStatus.ITERATION_LIMIT)
            break
        mu = mu / 10.0
        barrier_path.append(mu)
        hess.reset()
        nu = 1.0  # re-estimated from the multipliers of the new stage

    gx, hv, rd, comp = residuals(x, lam, z, s, 0.0)
    norms = kkt_norms(gx, hv, rd, s, z)
    if status is SolveStatus.OPTIMAL and max(norms.values()) > opts.tol_kkt:
        status = SolveStatus.ITERATION_LIMIT
    if status is SolveStatus.NUMERICAL_ERROR:
        # a collapsed step or unfactorizable KKT system at a clearly
        # infeasible point is evidence of local infeasibility, not a bug
        infeas = max(norms["eq"], float(np.max(hv)) if p else 0.0)
        if infeas > max(1e-6, 1e3 * opts.tol_kkt):
            status = SolveStatus.LOCALLY_INFEASIBLE

    mult_lb = np.zeros(n)
    mult_ub = np.zeros(n)
    if p:
        zb = z[ex.p_user:]
        mult_lb[ex.lb_idx] = zb[:len(ex.lb_idx)]
        mult_ub[ex.ub_idx] = zb[len(ex.lb_idx):]
    return SolveResult(
        status=status,
        x=x,
        objective=float(inst.objective(x)),
        iterations=total_iters,
        kkt=norms,
        wall_time=time.perf_counter() - t_start,
        lam=lam[:ex.m_user].copy(),
        z=z[:ex.p_user].copy() if p else np.zeros(0),
        mult_lb=mult_lb,
        mult_ub=mult_ub,
        barrier_path=barrier_path,
        message=message,
    )


def verify_kkt(inst, result: SolveResult) -> dict:
    """Independent post-hoc KKT residuals from the returned multipliers.

    Recomputes stationarity, feasibility, complementarity and multiplier
    signs with fresh evaluator calls; used by tests as a certificate check
    separate from the solver's internal bookkeeping.
    """
    x = result.x
    stat = inst.gradient(x).astype(float, copy=True)
    g = inst.equalities(x)
    if len(g):
        stat += inst.eq_jacobian(x).T @ result.lam
    h = inst.inequalities(x)
    if len(h):
        stat += inst.ineq_jacobian(x).T @ result.z
    stat += result.mult_ub - result.mult_lb
    lb = np.asarray(inst.lb, dtype=float)
    ub = np.asarray(inst.ub, dtype=float)
    comp = 0.0
    if len(h):
        comp = float(np.max(np.abs(h * result.z)))
    lb_act = np.where(np.isfinite(lb), x - lb, 0.0)
    ub_act = np.where(np.isfinite(ub), ub - x, 0.0)
    comp = max(comp,
               float(np.max(np.abs(lb_act * result.mult_lb))) if len(x) else 0.0,
               float(np.max(np.abs(ub_act * result.mult_ub))) if len(x) else 0.0)
    return dict(
        stationarity=float(np.max(np.abs(stat))) if len(x) else 0.0,
        eq=float(np.max(np.abs(g))) if len(g) else 0.0,
        ineq=float(np.max(h)) if len(h) else 0.0,
        bound=float(max(np.max(lb - x, initial=0.0), np.max(x - ub, initial=0.0))),
        comp=comp,
        sign=float(-min(np.min(result.z, initial=0.0),
                        np.min(result.mult_lb, initial=0.0),
                        np.min(result.mult_ub, initial=0.0))),
    )


def check_derivatives(inst, x0=None, h: float = 1e-6) -> float:
    """Worst deviation of supplied first derivatives vs central differences.

    The per-entry metric is |analytic - fd| / max(1, |analytic|, |fd|), so
    large entries are compared relatively and near-zero entries absolutely.
    """
    x0 = np.asarray(inst.x0 if x0 is None else x0, dtype=float)
    n = inst.n

    def fd(fun, dim):
        J = np.zeros((dim, n))
        for j in range(n):
            hj = h * max(1.0, abs(x0[j]))
            xp = x0.copy()
            xp[j] += hj
            fp = fun(xp)
            xp[j] = x0[j] - hj
            fm = fun(xp)
            J[:, j] = (np.atleast_1d(fp) - np.atleast_1d(fm)) / (2.0 * hj)
        return J

    def dev(analytic, approx):
        a = np.asarray(analytic, dtype=float)
        f = np.asarray(approx, dtype=float)
        if a.size == 0:
            return 0.0
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(f)))
        return float(np.max(np.abs(a - f) / denom))

    worst = dev(inst.gradient(x0), fd(lambda xv: inst.objective(xv), 1)[0])
    g = inst.equalities(x0)
    if len(g):
        worst = max(worst, dev(inst.eq_jacobian(x0), fd(inst.equalities, len(g))))
    hh = inst.inequalities(x0)
    if len(hh):
        worst = max(worst, dev(inst.ineq_jacobian(x0), fd(inst.inequalities, len(hh))))
    return worst


def multistart(inst, starts, opts: SolverOptions | None = None):
    """Solve from several starting points; return (best result, all results).

    The best result is the lowest-objective OPTIMAL run (ties broken by
    start order, so the outcome is deterministic). Raises
    AllStartsFailedError when no start converges.
    """
    if not len(starts):
        raise ValueError("multistart needs at least one starting point")
    results = []
    best = None
    for x0 in starts:
        trial = _WithStart(inst, np.asarray(x0, dtype=float))
        res = solve(trial, opts)
        results.append(res)
        if res.status is SolveStatus.OPTIMAL:
            if best is None or res.objective < best.objective - 0.0:
                best = res
    if best is None:
        raise AllStartsFailedError(
            f"all {len(results)} starts failed: "
            + ", ".join(r.status.value for r in results))
    return best, results


class _WithStart:
    """Instance proxy overriding only the starting point."""

    def __init__(self, inst, x0):
        self._inst = inst
        self.x0 = x0

    def __getattr__(self, name):
        return getattr(self._inst, name)


def with_start(inst, x0) -> _WithStart:
    """View of an instance with a different starting point; the underlying
    instance is shared, not copied."""
    return _WithStart(inst, np.asarray(x0, dtype=float))
