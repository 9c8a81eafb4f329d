"""Infinitesimal transport cost, discrete action functionals, and the
projection onto the paraboloid set that powers the solver's proximal step.

The pointwise cost of moving/creating mass is a perspective-type function
    j(X, Y, Z) = 1/2 (Y L1^+) . (X^+ Y L1^+) + 1/2 (Z L2^+) . (X^+ Z L2^+)
finite only when X is PSD and the ranges of Y^T, Z^T, [Y, Z] sit inside the
ranges of L1, L2, X respectively.  It is the support function of
    O = {(A, B, C): A + 1/2 B L1^2 B^T + 1/2 C L2^2 C^T <= 0}
so its prox reduces to a Euclidean projection onto O (Moreau).
"""

import math

import numpy as np

from . import _kernels, tensor
from .errors import ProjectionError, ShapeError
from .fields import WeightPair

_range_repairs = 0

#: relative range-condition violations below this are projected out silently
RANGE_REPAIR_TOL = 1e-8


def range_repair_count():
    return _range_repairs


def reset_range_repair_count():
    global _range_repairs
    _range_repairs = 0


class ActionValue:
    """Extended-real cost value with a range-violation flag."""

    __slots__ = ("value", "range_violation")

    def __init__(self, value, range_violation=False):
        self.value = value
        self.range_violation = range_violation

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"ActionValue({self.value}, range_violation={self.range_violation})"


class ParaboloidPoint:
    """Triple (A, B, C) in the ambient space of the paraboloid set."""

    __slots__ = ("A", "B", "C")

    def __init__(self, A, B, C):
        self.A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        self.B = np.atleast_2d(np.asarray(B, dtype=np.float64))
        self.C = np.atleast_2d(np.asarray(C, dtype=np.float64))
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.C.shape != (n, n) or self.B.shape[0] != n:
            raise ShapeError(
                f"incompatible slots: A {self.A.shape}, B {self.B.shape}, C {self.C.shape}"
            )

    def norm(self):
        return math.sqrt(
            np.sum(self.A**2) + np.sum(self.B**2) + np.sum(self.C**2)
        )

    def __sub__(self, other):
        return ParaboloidPoint(self.A - other.A, self.B - other.B, self.C - other.C)


def _as_weight(lam, n, k):
    if isinstance(lam, WeightPair):
        return lam
    lam1, lam2 = lam
    lam1 = np.asarray(lam1, dtype=np.float64)
    lam2 = np.asarray(lam2, dtype=np.float64)
    if lam1.ndim == 0:
        lam1 = float(lam1) * np.eye(k)
    if lam2.ndim == 0:
        lam2 = float(lam2) * np.eye(n)
    return WeightPair(lam1, lam2)


def _range_project(M, proj, tol, norm_ref):
    """Project M onto a range; returns (repaired M, violated, repaired)."""
    global _range_repairs
    PM = proj @ M
    gap = float(np.linalg.norm(M - PM))
    if gap <= 1e-14 * max(norm_ref, 1e-300):
        return M, False, False
    if gap <= tol * max(norm_ref, 1e-300):
        _range_repairs += 1
        return PM, False, True
    return M, True, False


def j_lambda(X, Y, Z, lam, rank_tol=tensor.DEFAULT_RANK_TOL, repair_tol=RANGE_REPAIR_TOL):
    """Pointwise infinitesimal cost; +inf when a range condition fails."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64) if not hasattr(X, "to_array") else X.to_array())
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64) if not hasattr(Y, "to_array") else Y.to_array())
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64) if not hasattr(Z, "to_array") else Z.to_array())
    n = X.shape[0]
    if Y.shape[0] != n or Z.shape != (n, n):
        raise ShapeError(f"shape mismatch: X {X.shape}, Y {Y.shape}, Z {Z.shape}")
    wp = _as_weight(lam, n, Y.shape[1])

    w, V = _kernels.eigh_batch(X)
    fro = max(float(np.linalg.norm(X)), 1e-300)
    if w[0] < -1e-12 * fro:
        return ActionValue(math.inf, range_violation=True)
    w = np.maximum(w, 0.0)
    cut = rank_tol * max(w[-1], 0.0)
    inv = np.where(w > cut, 1.0 / np.where(w > 0, w, 1.0), 0.0)
    Xp = (V * inv) @ V.T
    PX = (V * (w > cut).astype(float)) @ V.T

    # range conditions of the cost's domain
    P1 = wp.lam1 @ wp.lam1_pinv
    Yr, violY, _ = _range_project(Y.T, P1, repair_tol, np.linalg.norm(Y))
    Y = Yr.T
    if violY:
        return ActionValue(math.inf, range_violation=True)
    stack = np.concatenate([Y, Z], axis=1)
    stack_r, violX, _ = _range_project(stack, PX, repair_tol, np.linalg.norm(stack))
    if violX:
        return ActionValue(math.inf, range_violation=True)
    Y = stack_r[:, : Y.shape[1]]
    Z = stack_r[:, Y.shape[1] :]

    YL = Y @ wp.lam1_pinv
    ZL = Z @ wp.lam2_inv
    val = 0.5 * float(np.sum(YL * (Xp @ YL))) + 0.5 * float(np.sum(ZL * (Xp @ ZL)))
    return ActionValue(val, range_violation=False)


def _quad_term_batch(X, M, weights, lam_pinv, rank_tol, repair_tol):
    """sum_b w_b (M_b L^+) . (X_b^+ (M_b L^+)), with range handling.

    Returns (value, hard_violation).  Near-range violations (relative size
    <= repair_tol) are projected out and counted in the module counter.
    """
    global _range_repairs
    w, V = _kernels.eigh_batch(X)
    w = np.maximum(w, 0.0)
    cut = rank_tol * np.maximum(w[:, -1:], 0.0)
    keep = w > cut
    inv = np.where(keep, 1.0 / np.where(w > 0, w, 1.0), 0.0)
    ML = M @ lam_pinv
    # range condition: components of ML outside Ran(X)
    Vt_ML = np.einsum("bji,bjk->bik", V, ML)
    inside = Vt_ML * keep[:, :, None]
    gap2 = np.sum((Vt_ML - inside) ** 2, axis=(1, 2))
    ref2 = np.maximum(np.sum(ML * ML, axis=(1, 2)), 1e-300)
    hard = gap2 > (repair_tol**2) * ref2
    soft = (gap2 > 1e-28 * ref2) & ~hard
    _range_repairs += int(np.sum(soft))
    if np.any(hard) and np.any(weights[hard] > 0):
        return math.inf, True
    val = np.einsum("b,bik,bi,bik->", weights, inside, inv, inside)
    return 0.5 * float(val), False


def element_state_average(mesh, values):
    """Arithmetic vertex average per element: (1/(d+1)) sum over its vertices."""
    return values[mesh.simplices].mean(axis=1)


def j_sigma(mesh, G, q, R, lam, rank_tol=tensor.DEFAULT_RANK_TOL, repair_tol=RANGE_REPAIR_TOL):
    """Spatial discrete action.

    1/2 sum_K |K| qK . (avg_K G)^+ qK + 1/2 sum_v |T_v| Rv . Gv^+ Rv, with the
    weight matrices applied as in the pointwise cost.
    """
    Gv = G.values if hasattr(G, "values") else np.asarray(G)
    qv = q.values if hasattr(q, "values") else np.asarray(q)
    Rv = R.values if hasattr(R, "values") else np.asarray(R)
    n = Gv.shape[1]
    k = qv.shape[2]
    if qv.shape[1] != n or Rv.shape[1:] != (n, n):
        raise ShapeError(f"field shapes incompatible: G n={n}, q {qv.shape}, R {Rv.shape}")
    wp = _as_weight(lam, n, k)

    Gavg = element_state_average(mesh, Gv)
    val1, hard1 = _quad_term_batch(
        Gavg, qv, mesh.element_volumes, wp.lam1_pinv, rank_tol, repair_tol
    )
    if hard1:
        return math.inf
    val2, hard2 = _quad_term_batch(
        Gv, Rv, mesh.patch_volumes, wp.lam2_inv, rank_tol, repair_tol
    )
    if hard2:
        return math.inf
    return val1 + val2


def j_tau_sigma(path, lam, **kw):
    """Time-aggregated action: tau * sum_k J_sigma(midpoint state, q_k, R_k)."""
    tau = path.tau
    total = 0.0
    for k in range(path.N):
        mid = 0.5 * (path.states[k] + path.states[k + 1])  # before pseudoinversion
        val = j_sigma(path.mesh, mid, path.momenta[k], path.sources[k], lam, **kw)
        if math.isinf(val):
            return math.inf
        total += tau * val
    return total


def j_sigma_conjugate(mesh, G, u, W, lam):
    """Conjugate quadratic form: 1/2 sum |K| u.(avg G)u + 1/2 sum |T_v| W.G W."""
    Gv = G.values if hasattr(G, "values") else np.asarray(G)
    uv = u.values if hasattr(u, "values") else np.asarray(u)
    Wv = W.values if hasattr(W, "values") else np.asarray(W)
    n = Gv.shape[1]
    if uv.shape[1] != n or Wv.shape[1:] != (n, n):
        raise ShapeError("conjugate argument shapes incompatible")
    wp = _as_weight(lam, n, uv.shape[2])
    Gavg = element_state_average(mesh, Gv)
    uL = uv @ wp.lam1
    WL = Wv @ wp.lam2
    t1 = 0.5 * np.einsum("b,bik,bij,bjk->", mesh.element_volumes, uL, Gavg, uL)
    t2 = 0.5 * np.einsum("b,bik,bij,bjk->", mesh.patch_volumes, WL, Gv, WL)
    return float(t1 + t2)


# ---------------------------------------------------------------------------
# paraboloid projection


def paraboloid_residual(p, lam):
    """Largest eigenvalue of A + 1/2 B L1^2 B^T + 1/2 C L2^2 C^T."""
    wp = _as_weight(lam, p.A.shape[0], p.B.shape[1])
    L1sq = wp.lam1 @ wp.lam1
    L2sq = wp.lam2 @ wp.lam2
    M = p.A + 0.5 * p.B @ L1sq @ p.B.T + 0.5 * p.C @ L2sq @ p.C.T
    w, _ = _kernels.eigh_batch(0.5 * (M + M.T))
    return float(w[-1])


def _scalar_multiplier(a0, mus, vals2, tol=1e-12, max_iter=100):
    """Root of (a0 - s) + 1/2 sum_i mu_i v_i^2 / (1 + s mu_i)^2 = 0 on s >= 0."""

    def g(s):
        return a0 - s + 0.5 * np.sum(mus * vals2 / (1.0 + s * mus) ** 2)

    if g(0.0) <= 0.0:
        return 0.0
    lo, hi = 0.0, a0 + 0.5 * float(np.sum(mus * vals2))
    s = max(a0, 0.0)
    for _ in range(max_iter):
        val = g(s)
        if abs(val) <= tol * max(1.0, abs(a0), float(np.sum(mus * vals2))):
            return s
        if val > 0.0:
            lo = s
        else:
            hi = s
        gp = -1.0 - np.sum(mus * mus * vals2 / (1.0 + s * mus) ** 3)
        sn = s - val / gp
        s = sn if lo < sn < hi else 0.5 * (lo + hi)
    return s


def _solve_bc(Sigma, B0, lam_sq_eigs, lam_sq_vecs):
    """Solve M + Sigma M Lsq = B0 column-wise in the eigenbasis of Lsq."""
    n = Sigma.shape[0]
    Bt = B0 @ lam_sq_vecs
    out = np.empty_like(Bt)
    eye = np.eye(n)
    for j, mu in enumerate(lam_sq_eigs):
        out[:, j] = np.linalg.solve(eye + mu * Sigma, Bt[:, j])
    return out @ lam_sq_vecs.T


def project_onto_paraboloid(p, lam, tol=1e-10, max_iter=100):
    """Euclidean projection onto {A + 1/2 B L1^2 B^T + 1/2 C L2^2 C^T <= 0}.

    Dual formulation in the multiplier Sigma >= 0: the inner minimization is
    closed-form, the concave dual is maximized by a damped semismooth Newton
    with projected-gradient ascent as safeguard.  Scalar inputs use the exact
    Newton-on-cubic path (tolerance 1e-12).
    """
    if not isinstance(p, ParaboloidPoint):
        p = ParaboloidPoint(*p)
    n = p.A.shape[0]
    k = p.B.shape[1]
    wp = _as_weight(lam, n, k)
    A0 = 0.5 * (p.A + p.A.T)
    scale = max(p.norm(), 1.0)

    L1sq = wp.lam1 @ wp.lam1
    L2sq = wp.lam2 @ wp.lam2
    mu1, Q1 = np.linalg.eigh(L1sq)
    mu2, Q2 = np.linalg.eigh(L2sq)

    if n == 1:
        b = (p.B @ Q1).ravel()
        c = (p.C @ Q2).ravel()
        s = _scalar_multiplier(float(A0[0, 0]), np.concatenate([mu1, mu2]), np.concatenate([b**2, c**2]))
        B = _solve_bc(np.array([[s]]), p.B, mu1, Q1)
        C = _solve_bc(np.array([[s]]), p.C, mu2, Q2)
        return ParaboloidPoint(A0 - s, B, C)

    def x_of(Sigma):
        B = _solve_bc(Sigma, p.B, mu1, Q1)
        C = _solve_bc(Sigma, p.C, mu2, Q2)
        return B, C

    def grad(Sigma):
        B, C = x_of(Sigma)
        M = A0 - Sigma + 0.5 * B @ L1sq @ B.T + 0.5 * C @ L2sq @ C.T
        return 0.5 * (M + M.T), B, C

    def psd_part(M):
        w, V = _kernels.eigh_batch(M)
        return (V * np.maximum(w, 0.0)) @ V.T

    M0, _, _ = grad(np.zeros((n, n)))
    w0, _ = _kernels.eigh_batch(M0)
    if w0[-1] <= tol * scale:
        return ParaboloidPoint(A0, p.B, p.C)  # already a member

    lip = 1.0 + max(np.max(mu1, initial=0.0) ** 2 * float(np.sum(p.B**2)),
                    np.max(mu2, initial=0.0) ** 2 * float(np.sum(p.C**2)))
    eta = 1.0 / lip
    iu = np.triu_indices(n)

    def F(vec):
        Sigma = np.zeros((n, n))
        Sigma[iu] = vec
        Sigma.T[iu] = vec
        M, _, _ = grad(Sigma)
        return (Sigma - psd_part(Sigma + M))[iu]

    Sigma = np.zeros((n, n))
    for _ in range(50):  # ascent warm-up
        M, _, _ = grad(Sigma)
        Sigma = psd_part(Sigma + eta * M)

    vec = Sigma[iu].copy()
    fv = F(vec)
    m = vec.size
    for _ in range(max_iter):
        if np.linalg.norm(fv) <= 1e-13 * scale:
            break
        J = np.empty((m, m))
        h = 1e-7 * max(1.0, float(np.linalg.norm(vec)))
        for j in range(m):
            e = vec.copy()
            e[j] += h
            J[:, j] = (F(e) - fv) / h
        try:
            step = np.linalg.solve(J, -fv)
        except np.linalg.LinAlgError:
            step = -fv
        t = 1.0
        improved = False
        base = np.linalg.norm(fv)
        for _ in range(30):
            cand = vec + t * step
            fc = F(cand)
            if np.linalg.norm(fc) < (1.0 - 1e-4 * t) * base:
                vec, fv = cand, fc
                improved = True
                break
            t *= 0.5
        if not improved:
            Sigma = np.zeros((n, n))
            Sigma[iu] = vec
            Sigma.T[iu] = vec
            for _ in range(100):  # safeguard: plain dual ascent
                M, _, _ = grad(Sigma)
                Sigma = psd_part(Sigma + eta * M)
            vec = Sigma[iu].copy()
            fv = F(vec)

    Sigma = np.zeros((n, n))
    Sigma[iu] = vec
    Sigma.T[iu] = vec
    Sigma = psd_part(Sigma)
    M, B, C = grad(Sigma)
    out = ParaboloidPoint(A0 - Sigma, B, C)
    resid = paraboloid_residual(out, wp)
    if resid > tol * scale:
        raise ProjectionError(
            f"projection did not reach membership tolerance: residual {resid:.3e}",
            residual=resid,
        )
    return out


def prox_j_lambda(p, lam, gamma):
    """prox of gamma * j via the Moreau identity with the projection."""
    if not isinstance(p, ParaboloidPoint):
        p = ParaboloidPoint(*p)
    scaled = ParaboloidPoint(p.A / gamma, p.B / gamma, p.C / gamma)
    proj = project_onto_paraboloid(scaled, lam)
    return ParaboloidPoint(
        p.A - gamma * proj.A, p.B - gamma * proj.B, p.C - gamma * proj.C
    )
