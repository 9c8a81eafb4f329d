"""Primal-dual solver for the staggered discrete transport problem.

The problem: minimize the time-aggregated action over staggered paths with
prescribed PSD endpoints, subject to the discrete continuity equation
    (G_k - G_{k-1}) + tau D q_k - tau sym(R_k) = 0,   k = 1..N.

A Chambolle-Pock iteration on the saddle formulation: auxiliary per-cell
variables (a, b) per (element, step) and (c, e) per (vertex, step) are tied
to element averages / midpoint states by linear constraints, so the nonsmooth
action splits into independent per-cell proximal steps, each a Moreau-
reflected projection onto a reduced paraboloid set.  Step sizes come from a
power-iteration estimate of the constraint operator norm.  The Hellinger-type
explicit curve provides a feasible start and a cost ceiling.
"""

import math
import time

import numpy as np

from . import _kernels, action, tensor
from .errors import ShapeError
from .fields import DiscreteMomentum, DiscreteSource, DiscreteState, StaggeredPath, WeightPair, norm_dual
from .operators import (
    ContinuousOperatorSpec,
    apply_d_stencil,
    assemble_discrete_divergence,
)


class SolverConfig:
    def __init__(
        self,
        max_iter=200000,
        tol_feas=1e-6,
        tol_obj=1e-8,
        check_every=50,
        dual_every=100,
        step_ratio=1.0,
        power_iters=60,
        prox_iters=8,
        seed=0,
        verbose=False,
    ):
        self.max_iter = max_iter
        self.tol_feas = tol_feas
        self.tol_obj = tol_obj
        self.check_every = check_every
        self.dual_every = dual_every
        self.step_ratio = step_ratio
        self.power_iters = power_iters
        self.prox_iters = prox_iters
        self.seed = seed
        self.verbose = verbose

    def replace(self, **kw):
        out = SolverConfig(**{**self.__dict__, **kw})
        return out


class ProblemSpec:
    """Mesh, operator choice, weights, endpoints and solver settings."""

    def __init__(self, mesh, opspec, weights, N, G0, G1, config=None):
        if N < 1:
            raise ShapeError("N must be >= 1")
        opspec.check_mesh(mesh)
        if G0.values.shape != (mesh.num_vertices, opspec.n, opspec.n):
            raise ShapeError("G0 incompatible with mesh/operator")
        if G1.values.shape != G0.values.shape:
            raise ShapeError("endpoint shapes differ")
        self.mesh = mesh
        self.opspec = opspec
        if not isinstance(weights, WeightPair):
            weights = WeightPair(*weights) if not np.isscalar(weights[0]) else WeightPair(
                weights[0] * np.eye(opspec.k), weights[1] * np.eye(opspec.n)
            )
        self.weights = weights
        self.N = N
        self.G0 = DiscreteState(mesh, G0.values, psd=True)
        self.G1 = DiscreteState(mesh, G1.values, psd=True)
        self.config = config or SolverConfig()

    @property
    def tau(self):
        return 1.0 / self.N


class SolveReport:
    def __init__(self, **kw):
        self.objective = kw.get("objective", math.inf)
        self.path = kw.get("path")
        self.ce_residual = kw.get("ce_residual", math.inf)
        self.psd_repairs = kw.get("psd_repairs", 0)
        self.iterations = kw.get("iterations", 0)
        self.gap = kw.get("gap", math.inf)
        self.dual_bound = kw.get("dual_bound", -math.inf)
        self.wall_ms = kw.get("wall_ms", 0.0)
        self.converged = kw.get("converged", False)
        self.stop_reason = kw.get("stop_reason", "")

    def to_dict(self):
        return {
            "objective": self.objective,
            "ce_residual": self.ce_residual,
            "psd_repairs": self.psd_repairs,
            "iterations": self.iterations,
            "gap": self.gap,
            "dual_bound": self.dual_bound,
            "wall_ms": self.wall_ms,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
        }


def feasible_init(problem):
    """The explicit curve interpolating the endpoint square roots.

    G_i = (sqrt(G0) + i tau (sqrt(G1) - sqrt(G0)))^2 with q = 0 and
    R_i = ((2i-1) tau (sqrt(G1)-sqrt(G0)) + 2 sqrt(G0)) (sqrt(G1)-sqrt(G0));
    satisfies the discrete continuity equation exactly and its action is at
    most 2 sum_v |T_v| ||sqrt(G1) - sqrt(G0)||_F^2.
    """
    mesh, N = problem.mesh, problem.N
    tau = problem.tau
    A = tensor.sqrt_psd_batch(problem.G0.values, clamp_rel=1e-8)
    B = tensor.sqrt_psd_batch(problem.G1.values, clamp_rel=1e-8)
    diff = B - A
    n = A.shape[1]
    states = np.empty((N + 1, mesh.num_vertices, n, n))
    sources = np.empty((N, mesh.num_vertices, n, n))
    for i in range(N + 1):
        S = A + (i * tau) * diff
        states[i] = S @ S
    states[0] = problem.G0.values
    states[N] = problem.G1.values
    for i in range(1, N + 1):
        sources[i - 1] = ((2 * i - 1) * tau * diff + 2 * A) @ diff
    momenta = np.zeros((N, mesh.num_simplices, problem.opspec.n, problem.opspec.k))
    return StaggeredPath(mesh, states, momenta, sources)


def hellinger_curve_bound(problem):
    """Action ceiling of the explicit curve: 2 sum |T_v| ||sqrt diff||^2."""
    A = tensor.sqrt_psd_batch(problem.G0.values, clamp_rel=1e-8)
    B = tensor.sqrt_psd_batch(problem.G1.values, clamp_rel=1e-8)
    d2 = np.sum((B - A) ** 2, axis=(1, 2))
    return 2.0 * float(np.dot(problem.mesh.patch_volumes, d2))


def ce_residual(problem, path):
    """Max over steps of the dual norm of the continuity defect.

    Uses the direct stencil application, independent of the assembled maps
    the iteration itself multiplies with.
    """
    mesh, tau = problem.mesh, path.tau
    worst = 0.0
    for k in range(path.N):
        dq = apply_d_stencil(mesh, problem.opspec, path.momenta[k])
        rs = 0.5 * (path.sources[k] + np.transpose(path.sources[k], (0, 2, 1)))
        defect = (path.states[k + 1] - path.states[k]) / tau + dq - rs
        worst = max(worst, float(np.linalg.norm(defect, axis=(1, 2)).max()))
    return worst


def residual_scale(problem):
    return max(norm_dual(problem.G0), norm_dual(problem.G1), 1e-30) / problem.tau


def _sym(x):
    return 0.5 * (x + np.swapaxes(x, -1, -2))


class _Operators:
    """Assembled maps reshaped for whole-path (all time levels) products."""

    def __init__(self, problem):
        mesh, spec = problem.mesh, problem.opspec
        self.n, self.k = spec.n, spec.k
        dmap, dstar = assemble_discrete_divergence(mesh, spec)
        self.D = dmap.to_csr()
        self.Dt = self.D.T.tocsr()
        self.V = mesh.num_vertices
        self.T = mesh.num_simplices
        self.simplices = mesh.simplices
        self.dplus1 = mesh.dim + 1

    def apply_D(self, q):  # (N, T, n, k) -> (N, V, n, n)
        N = q.shape[0]
        Q = q.reshape(N, -1).T
        out = self.D @ Q
        return out.T.reshape(N, self.V, self.n, self.n)

    def apply_Dt(self, y):  # (N, V, n, n) -> (N, T, n, k)
        N = y.shape[0]
        Y = y.reshape(N, -1).T
        out = self.Dt @ Y
        return out.T.reshape(N, self.T, self.n, self.k)

    def elem_avg(self, g):  # (N, V, n, n) -> (N, T, n, n)
        return g[:, self.simplices].mean(axis=2)

    def elem_avg_t(self, y):  # (N, T, n, n) -> (N, V, n, n)
        N = y.shape[0]
        out = np.zeros((N, self.V, self.n, self.n))
        contrib = np.repeat(y[:, :, None], self.dplus1, axis=2) / self.dplus1
        idx = np.broadcast_to(self.simplices[None], (N,) + self.simplices.shape)
        np.add.at(
            out.reshape(N * self.V, self.n, self.n),
            (idx + np.arange(N)[:, None, None] * self.V).ravel(),
            contrib.reshape(-1, self.n, self.n),
        )
        return out


class _CellProx:
    """Batched Moreau prox for the per-cell reduced paraboloid sets."""

    def __init__(self, n, m, lam, gammas, prox_iters):
        self.n = n
        self.m = m
        self.lamsq = float(lam) ** 2
        self.gammas = gammas  # (cells,) Moreau weights
        self.prox_iters = prox_iters
        self.sigma_warm = None

    def apply(self, za, zb):
        """za (cells, n, n) symmetric slot, zb (cells, n, m). Returns prox."""
        g = self.gammas[:, None, None]
        pa = za / g
        pb = zb / g
        if self.n == 1:
            s = _kernels.project_parabola_scalar(
                pa[:, 0, 0], np.sum(pb * pb, axis=(1, 2)), self.lamsq
            )
            proj_a = pa[:, 0, 0] - s
            scale = 1.0 / (1.0 + s * self.lamsq)
            out_a = za - (g * proj_a[:, None, None])
            out_b = zb - g * (pb * scale[:, None, None])
            return out_a, out_b
        BB = pb @ np.swapaxes(pb, 1, 2)
        if self.sigma_warm is None or self.sigma_warm.shape != pa.shape:
            self.sigma_warm = np.zeros_like(pa)
        sig, w, Vv = _kernels.project_parabola_matrix(
            _sym(pa), BB, self.lamsq, self.sigma_warm, self.prox_iters
        )
        self.sigma_warm = sig
        d = 1.0 / (1.0 + self.lamsq * w)
        inv = np.einsum("bik,bk,bjk->bij", Vv, d, Vv)
        proj_a = _sym(pa) - sig
        proj_b = inv @ pb
        return za - g * proj_a, zb - g * proj_b


def _psd_project(G, n):
    if n == 1:
        repairs = int(np.sum(G < -1e-12))
        return np.maximum(G, 0.0), repairs
    shp = G.shape
    flat = G.reshape(-1, n, n)
    out, repairs = tensor.psd_clamp_batch(_sym(flat))
    return out.reshape(shp), repairs


def solve(problem):
    """Run the primal-dual iteration; returns the best feasible iterate.

    The report's ce_residual comes from the independent stencil; the
    objective is the exact action of the returned path.  The explicit
    feasible curve seeds the iteration and caps the reported objective.
    """
    t_start = time.perf_counter()
    cfg = problem.config
    mesh, spec, N, tau = problem.mesh, problem.opspec, problem.N, problem.tau
    n, k = spec.n, spec.k
    V, T = mesh.num_vertices, mesh.num_simplices
    ops = _Operators(problem)
    lam_iso = problem.weights.isotropic_values()
    if lam_iso is None:
        raise ShapeError("solver supports isotropic weight pairs; use matrix weights only in pointwise costs")
    lam1, lam2 = lam_iso

    G0d, G1d = problem.G0.values, problem.G1.values
    init = feasible_init(problem)
    init_obj = action.j_tau_sigma(init, problem.weights)

    # primal variables
    G = init.states[1:N].copy()  # interior levels
    q = init.momenta.copy()
    R = init.sources.copy()
    mids0 = 0.5 * (init.states[:-1] + init.states[1:])
    a = ops.elem_avg(mids0)
    b = q.copy()
    c = mids0.copy()
    e = R.copy()
    # duals
    yce = np.zeros((N, V, n, n))
    ya = np.zeros((N, T, n, n))
    yb = np.zeros((N, T, n, k))
    yc = np.zeros((N, V, n, n))
    ye = np.zeros((N, V, n, n))

    def mids_of(Gi):
        Gext = np.concatenate([G0d[None], Gi, G1d[None]], axis=0)
        return 0.5 * (Gext[:-1] + Gext[1:])

    def K_residuals(Gi, qi, Ri, ai, bi, ci, ei):
        mids = mids_of(Gi)
        Gext = np.concatenate([G0d[None], Gi, G1d[None]], axis=0)
        rce = (Gext[1:] - Gext[:-1]) + tau * ops.apply_D(qi) - tau * _sym(Ri)
        return rce, ai - ops.elem_avg(mids), bi - qi, ci - mids, ei - Ri

    def KT(yce_, ya_, yb_, yc_, ye_):
        gG = (yce_[:-1] - yce_[1:]) if N > 1 else np.zeros((0, V, n, n))
        if N > 1:
            avg_t = ops.elem_avg_t(ya_)
            gG = gG - 0.5 * (avg_t[:-1] + avg_t[1:]) - 0.5 * (yc_[:-1] + yc_[1:])
        gq = tau * ops.apply_Dt(yce_) - yb_
        gR = -tau * _sym(yce_) - ye_
        return gG, gq, gR, ya_, yb_, yc_, ye_

    # operator norm by power iteration on K^T K (zero-data linear part)
    rng = np.random.default_rng(cfg.seed)

    def K_lin(Gi, qi, Ri, ai, bi, ci, ei):
        zero0 = np.zeros_like(G0d)
        Gext = np.concatenate([zero0[None], Gi, zero0[None]], axis=0)
        mids = 0.5 * (Gext[:-1] + Gext[1:])
        rce = (Gext[1:] - Gext[:-1]) + tau * ops.apply_D(qi) - tau * _sym(Ri)
        return rce, ai - ops.elem_avg(mids), bi - qi, ci - mids, ei - Ri

    x_probe = [rng.normal(size=arr.shape) for arr in (G, q, R, a, b, c, e)]
    nrm0 = math.sqrt(sum(float(np.sum(t * t)) for t in x_probe))
    x_probe = [t / nrm0 for t in x_probe]
    Lsq = 1.0
    for _ in range(cfg.power_iters):
        x_next = KT(*K_lin(*x_probe))
        Lsq = math.sqrt(sum(float(np.sum(t * t)) for t in x_next))
        if Lsq < 1e-30:
            break
        x_probe = [t / Lsq for t in x_next]
    L = math.sqrt(max(Lsq, 1e-30))
    tau_s = cfg.step_ratio / L * 0.99
    sigma_s = 1.0 / (cfg.step_ratio * L) * 0.99

    prox_ab = _CellProx(n, k, lam1, tau_s * np.tile(tau * mesh.element_volumes, N), cfg.prox_iters)
    prox_ce = _CellProx(n, n, lam2, tau_s * np.tile(tau * mesh.patch_volumes, N), cfg.prox_iters)

    def cell_prox(ai, bi, ci, ei):
        sa, sb = prox_ab.apply(
            _sym(ai).reshape(-1, n, n), bi.reshape(-1, n, k)
        )
        sc, se = prox_ce.apply(_sym(ci).reshape(-1, n, n), ei.reshape(-1, n, n))
        return (
            sa.reshape(ai.shape),
            sb.reshape(bi.shape),
            sc.reshape(ci.shape),
            se.reshape(ei.shape),
        )

    best = {
        "objective": init_obj,
        "states": init.states.copy(),
        "momenta": init.momenta.copy(),
        "sources": init.sources.copy(),
        "residual": ce_residual(problem, init),
        "iteration": 0,
    }
    scale = residual_scale(problem)
    psd_repairs = 0
    dual_best = -math.inf
    objective_trace = []
    stop_reason = "max_iter"
    converged = False

    xb = (G.copy(), q.copy(), R.copy(), a.copy(), b.copy(), c.copy(), e.copy())
    it = 0
    while it < cfg.max_iter:
        it += 1
        rce, ra, rb, rc, re = K_residuals(*xb)
        yce += sigma_s * rce
        ya += sigma_s * ra
        yb += sigma_s * rb
        yc += sigma_s * rc
        ye += sigma_s * re

        gG, gq, gR, ga, gb, gc, ge = KT(yce, ya, yb, yc, ye)
        G_old, q_old, R_old = G, q, R
        a_old, b_old, c_old, e_old = a, b, c, e
        if N > 1:
            G, rep = _psd_project(G_old - tau_s * gG, n)
            psd_repairs += rep
        q = q_old - tau_s * gq
        R = R_old - tau_s * gR
        a, b, c, e = cell_prox(
            a_old - tau_s * ga, b_old - tau_s * gb, c_old - tau_s * gc, e_old - tau_s * ge
        )
        xb = (
            2 * G - G_old,
            2 * q - q_old,
            2 * R - R_old,
            2 * a - a_old,
            2 * b - b_old,
            2 * c - c_old,
            2 * e - e_old,
        )

        if it % cfg.check_every == 0 or it == cfg.max_iter:
            states = np.concatenate([G0d[None], G, G1d[None]], axis=0)
            cand = StaggeredPath(mesh, states, q, R)
            res = ce_residual(problem, cand)
            if res <= cfg.tol_feas * scale:
                obj = action.j_tau_sigma(cand, problem.weights)
                if obj < best["objective"]:
                    best = {
                        "objective": obj,
                        "states": states.copy(),
                        "momenta": q.copy(),
                        "sources": R.copy(),
                        "residual": res,
                        "iteration": it,
                    }
            objective_trace.append((it, best["objective"], res))
            if cfg.verbose and it % (cfg.check_every * 20) == 0:
                print(
                    f"  iter {it}: best {best['objective']:.8f} residual {res:.2e}"
                )
            # stop when the tracked best stalls and the iterate is feasible
            lookback = [o for (i, o, _) in objective_trace if i <= it - 100]
            if lookback and res <= cfg.tol_feas * scale and math.isfinite(best["objective"]):
                prev = lookback[-1]
                if abs(prev - best["objective"]) <= cfg.tol_obj * max(1.0, abs(best["objective"])):
                    converged = True
                    stop_reason = "objective_stalled"
                    break

    # certified lower bound from the continuity multiplier (either sign)
    phi = tau * yce / mesh.patch_volumes[None, :, None, None]
    for cand_phi in (phi, -phi):
        val = dual_bound(problem, cand_phi)
        dual_best = max(dual_best, val)
    if math.isfinite(best["objective"]) and dual_best > best["objective"] + 1e-9 * max(
        1.0, abs(best["objective"])
    ):
        raise AssertionError(
            f"weak duality violated: bound {dual_best} > objective {best['objective']}"
        )

    path = StaggeredPath(mesh, best["states"], best["momenta"], best["sources"])
    report = SolveReport(
        objective=best["objective"],
        path=path,
        ce_residual=best["residual"],
        psd_repairs=psd_repairs,
        iterations=it,
        gap=best["objective"] - dual_best if math.isfinite(best["objective"]) else math.inf,
        dual_bound=dual_best,
        wall_ms=1000.0 * (time.perf_counter() - t_start),
        converged=converged,
        stop_reason=stop_reason,
    )
    return report


def dual_bound(problem, phi, repair_rounds=8):
    """Certified lower bound on the discrete optimum from a multiplier guess.

    Evaluates the Lagrangian dual at phi after eliminating (q, R, interior G)
    in closed form; validity needs a per-(level, vertex) matrix inequality,
    restored when violated by shifting each level by a multiple of the
    identity (constants are invisible to the derivation term).  Returns -inf
    when the repair does not settle.
    """
    mesh, spec, N, tau = problem.mesh, problem.opspec, problem.N, problem.tau
    n = spec.n
    lam1 = problem.weights.lam1
    lam2 = problem.weights.lam2
    ops = _Operators(problem)
    volK = mesh.element_volumes
    volV = mesh.patch_volumes
    G0d, G1d = problem.G0.values, problem.G1.values
    d = mesh.dim

    shifts = np.zeros(N)
    eye = np.eye(n)

    def evaluate(shifted):
        # Q_{k,v}: PSD coefficient of each state level after eliminating
        # (q, R) from the Lagrangian in closed form
        from .operators import apply_dstar_stencil

        dphi = np.empty((N, mesh.num_simplices, n, spec.k))
        for kk in range(N):
            dphi[kk] = apply_dstar_stencil(mesh, spec, shifted[kk])
        dL = dphi @ lam1  # (N, T, n, k)
        quad_elem = np.einsum("ktij,ktlj->ktil", dL, dL)  # (dL)(dL)^T
        phiL = shifted @ lam2
        quad_vert = np.einsum("kvij,kvlj->kvil", phiL, phiL)
        Q = np.zeros((N, mesh.num_vertices, n, n))
        scatter = quad_elem * (volK[None, :, None, None] / (d + 1))
        for kk in range(N):
            acc = np.zeros((mesh.num_vertices, n, n))
            np.add.at(acc, mesh.simplices.ravel(), np.repeat(scatter[kk][:, None], d + 1, axis=1).reshape(-1, n, n))
            Q[kk] = acc
        Q = (Q + volV[None, :, None, None] * quad_vert) / (2.0 * tau)

        # interior feasibility rows
        viol = np.zeros(max(N - 1, 0))
        for j in range(1, N):
            Cj = (volV[:, None, None] / tau) * (shifted[j - 1] - shifted[j]) - 0.5 * (
                Q[j - 1] + Q[j]
            )
            w, _ = _kernels.eigh_batch(Cj)
            viol[j - 1] = max(0.0, float(-(w[:, 0] / (volV / tau)).min()))
        value = (
            np.einsum("v,vij,vij->", volV, shifted[N - 1], G1d)
            - np.einsum("v,vij,vij->", volV, shifted[0], G0d)
        ) / tau
        value -= 0.5 * (
            float(np.sum(G0d * Q[0])) + float(np.sum(G1d * Q[N - 1]))
        )
        return value, viol

    for _ in range(repair_rounds):
        shifted = phi - shifts[:, None, None, None] * eye
        value, viol = evaluate(shifted)
        if np.all(viol <= 1e-12):
            return float(value)
        # row j gains (|T_v|/tau)(c_{j+1} - c_j) I; viol is already in c-units
        inc = viol * (1.0 + 1e-9) + 1e-18
        for j in range(1, N):
            shifts[j] = max(shifts[j], shifts[j - 1] + inc[j - 1])
    return -math.inf


def refine_sweep(make_problem, ladder, oracle_value=None):
    """Solve a family over a (cells, N) ladder; returns result-row dicts."""
    rows = []
    for cells, N in ladder:
        problem = make_problem(cells, N)
        report = solve(problem)
        row = {
            "sigma": problem.mesh.size().sigma,
            "tau": problem.tau,
            "objective": report.objective,
            "ce_residual": report.ce_residual,
            "iterations": report.iterations,
            "wall_ms": report.wall_ms,
            "oracle_value": oracle_value,
            "rel_error": (
                abs(report.objective - oracle_value) / abs(oracle_value)
                if oracle_value not in (None, 0.0) and math.isfinite(report.objective)
                else None
            ),
            "converged": report.converged,
        }
        rows.append(row)
    return rows
