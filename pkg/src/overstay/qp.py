"""Dense primal active-set solver for small convex QPs.

    minimize    0.5 x^T H x + f^T x
    subject to  C x  = d
                A x <= b

H only needs to be PSD. Zero-curvature directions of the reduced Hessian are
followed until a constraint blocks them, so LPs (H = 0) with a bounded
feasible region are handled too.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog


class QpError(RuntimeError):
    pass


class QpInfeasibleError(QpError):
    pass


class QpUnboundedError(QpError):
    pass


class QpMaxIterError(QpError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class QpSettings:
    tolerance: float = 1e-9
    max_iter: int = 1000


@dataclass
class KktResiduals:
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.primal, self.dual, self.complementarity)


@dataclass
class QpResult:
    x: np.ndarray
    objective: float
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    working_set: list = field(default_factory=list)
    iterations: int = 0
    residuals: KktResiduals | None = None


def _as_2d(M, n):
    if M is None:
        return np.zeros((0, n))
    return np.atleast_2d(np.asarray(M, dtype=float)).reshape(-1, n)


def _as_1d(v, m):
    if v is None:
        return np.zeros(m)
    return np.asarray(v, dtype=float).reshape(m)


def kkt_residuals(H, f, A, b, C, d, x, nu, lam) -> KktResiduals:
    """Infinity-norm KKT residuals for the sign convention lam >= 0 on A x <= b."""
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    A, C = _as_2d(A, n), _as_2d(C, n)
    b, d = _as_1d(b, A.shape[0]), _as_1d(d, C.shape[0])
    grad = H @ x + f + C.T @ nu + A.T @ lam
    slack = A @ x - b
    primal = 0.0
    if C.shape[0]:
        primal = float(np.max(np.abs(C @ x - d)))
    if A.shape[0]:
        primal = max(primal, float(np.max(slack, initial=0.0)))
    return KktResiduals(
        stationarity=float(np.max(np.abs(grad), initial=0.0)),
        primal=primal,
        dual=float(max(0.0, -np.min(lam, initial=0.0))),
        complementarity=float(np.max(np.abs(lam * slack), initial=0.0)),
    )


def find_feasible_point(A, b, C, d, n) -> np.ndarray:
    """Phase one: any point of {Cx = d, Ax <= b}, via an LP with zero cost."""
    res = linprog(
        np.zeros(n),
        A_ub=A if A.shape[0] else None,
        b_ub=b if A.shape[0] else None,
        A_eq=C if C.shape[0] else None,
        b_eq=d if C.shape[0] else None,
        bounds=[(None, None)] * n,
        method="highs",
    )
    if res.status == 2:
        raise QpInfeasibleError(f"feasible region is empty ({res.message})")
    if res.status != 0:
        raise QpError(f"phase one failed: {res.message}")
    return np.asarray(res.x, dtype=float)


def _independent_subset(C, A, candidates, tol):
    """Greedily keep candidate rows of A that are independent of C and of each other."""
    rows = [r for r in C]
    kept = []
    rank = np.linalg.matrix_rank(np.array(rows), tol=tol) if rows else 0
    for i in candidates:
        trial = np.array(rows + [A[i]])
        r = np.linalg.matrix_rank(trial, tol=tol)
        if r > rank:
            rows.append(A[i])
            kept.append(i)
            rank = r
    return kept


def qp_solve(H, f, A=None, b=None, C=None, d=None, settings: QpSettings = QpSettings(), x0=None, working_set=None) -> QpResult:
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    f = _as_1d(f, n)
    A, C = _as_2d(A, n), _as_2d(C, n)
    b, d = _as_1d(b, A.shape[0]), _as_1d(d, C.shape[0])
    tol = settings.tolerance
    scale = max(1.0, float(np.max(np.abs(H), initial=0.0)), float(np.max(np.abs(f), initial=0.0)))

    if x0 is None:
        x = find_feasible_point(A, b, C, d, n)
    else:
        x = np.array(x0, dtype=float)
    feas_tol = 1e-7
    if C.shape[0] and np.max(np.abs(C @ x - d)) > feas_tol:
        raise QpInfeasibleError("starting point violates the equality constraints")
    if A.shape[0] and np.max(A @ x - b) > feas_tol:
        raise QpInfeasibleError("starting point violates the inequality constraints")

    if working_set is None:
        working_set = np.flatnonzero(A @ x - b >= -feas_tol) if A.shape[0] else []
    else:
        working_set = [i for i in working_set if A[i] @ x - b[i] >= -feas_tol]
    W = _independent_subset(C, A, list(working_set), 1e-10)

    # pin x onto the working-set faces exactly
    M = np.vstack([C, A[W]]) if W else C
    if M.shape[0]:
        rhs = np.concatenate([d, b[W]])
        x = x + np.linalg.lstsq(M, rhs - M @ x, rcond=None)[0]

    for it in range(1, settings.max_iter + 1):
        g = H @ x + f
        M = np.vstack([C, A[W]]) if W else C
        Z = null_space(M) if M.shape[0] else np.eye(n)
        unbounded_dir = False
        if Z.shape[1] == 0:
            p = np.zeros(n)
        else:
            Hr = Z.T @ H @ Z
            gr = Z.T @ g
            evals, Q = np.linalg.eigh(0.5 * (Hr + Hr.T))
            curv = evals > 1e-10 * max(1.0, float(np.max(np.abs(evals))))
            gq = Q.T @ gr
            flat = ~curv & (np.abs(gq) > tol * scale)
            if np.any(flat):
                p = -Z @ (Q[:, flat] @ gq[flat])
                unbounded_dir = True
            else:
                p = -Z @ (Q[:, curv] @ (gq[curv] / evals[curv]))

        if np.max(np.abs(p)) <= tol * max(1.0, float(np.max(np.abs(x)))):
            if M.shape[0]:
                mult = np.linalg.lstsq(M.T, -g, rcond=None)[0]
            else:
                mult = np.zeros(0)
            lam_w = mult[C.shape[0]:]
            if lam_w.size == 0 or np.min(lam_w) >= -tol * scale:
                nu = mult[: C.shape[0]]
                lam = np.zeros(A.shape[0])
                lam[W] = np.clip(lam_w, 0.0, None)
                res = kkt_residuals(H, f, A, b, C, d, x, nu, lam)
                return QpResult(
                    x=x,
                    objective=float(0.5 * x @ H @ x + f @ x),
                    eq_multipliers=nu,
                    ineq_multipliers=lam,
                    working_set=list(W),
                    iterations=it,
                    residuals=res,
                )
            W.pop(int(np.argmin(lam_w)))
            continue

        alpha = np.inf if unbounded_dir else 1.0
        blocking = None
        if A.shape[0]:
            Ap = A @ p
            inactive = np.setdiff1d(np.arange(A.shape[0]), W)
            cand = inactive[Ap[inactive] > 1e-12]
            if cand.size:
                ratios = (b[cand] - A[cand] @ x) / Ap[cand]
                ratios = np.maximum(ratios, 0.0)
                j = int(np.argmin(ratios))
                if ratios[j] < alpha:
                    alpha = float(ratios[j])
                    blocking = int(cand[j])
        if not np.isfinite(alpha):
            raise QpUnboundedError("objective is unbounded below on the feasible set")
        x = x + alpha * p
        if blocking is not None:
            W.append(blocking)

    g = H @ x + f
    raise QpMaxIterError(
        f"active-set solver hit {settings.max_iter} iterations",
        residuals={"gradient_inf_norm": float(np.max(np.abs(g), initial=0.0)), "working_set_size": len(W)},
    )
