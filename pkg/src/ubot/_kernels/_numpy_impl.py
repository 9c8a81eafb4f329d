"""Pure-NumPy batched kernels: the fallback backend.

Same call signatures as the compiled extension in ``_fast.pyx``.  All inputs
are float64 arrays; batches are vectorized, no per-cell Python loops.
"""

import numpy as np

BACKEND = "numpy"

_JACOBI_MAX_SWEEPS = 40
_JACOBI_REL_TOL = 1e-14


def eigh_batch(A):
    """Eigendecomposition of a batch of small symmetric matrices.

    Cyclic Jacobi sweeps, run until the off-diagonal Frobenius mass drops
    below 1e-14 of the diagonal mass.  Returns (w, V) with eigenvalues
    ascending and A = V @ diag(w) @ V.T per batch element.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    squeeze = A.ndim == 2
    if squeeze:
        A = A[None]
    B, n, _ = A.shape
    if n == 1:
        w = A[:, :, 0].copy()
        V = np.ones((B, 1, 1))
        return (w[0], V[0]) if squeeze else (w, V)

    M = A.copy()
    V = np.broadcast_to(np.eye(n), (B, n, n)).copy()
    pairs = [(p, q) for p in range(n - 1) for q in range(p + 1, n)]
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = 0.0
        diag = 0.0
        for p, q in pairs:
            off = off + M[:, p, q] ** 2
        for p in range(n):
            diag = diag + M[:, p, p] ** 2
        if np.all(off <= (_JACOBI_REL_TOL**2) * diag + 1e-300):
            break
        for p, q in pairs:
            apq = M[:, p, q]
            act = np.abs(apq) > 1e-300
            theta = np.where(act, (M[:, q, q] - M[:, p, p]) / np.where(act, 2.0 * apq, 1.0), 0.0)
            t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(theta == 0.0, 1.0, t)  # sign(0) = 0; 45-degree rotation
            t = np.where(act, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # M <- J^T M J with J = I except J[pp]=J[qq]=c, J[pq]=s, J[qp]=-s
            Mp = M[:, :, p].copy()
            Mq = M[:, :, q].copy()
            M[:, :, p] = c[:, None] * Mp - s[:, None] * Mq
            M[:, :, q] = s[:, None] * Mp + c[:, None] * Mq
            Mp = M[:, p, :].copy()
            Mq = M[:, q, :].copy()
            M[:, p, :] = c[:, None] * Mp - s[:, None] * Mq
            M[:, q, :] = s[:, None] * Mp + c[:, None] * Mq
            M[:, p, q] = 0.0
            M[:, q, p] = 0.0
            Vp = V[:, :, p].copy()
            Vq = V[:, :, q].copy()
            V[:, :, p] = c[:, None] * Vp - s[:, None] * Vq
            V[:, :, q] = s[:, None] * Vp + c[:, None] * Vq

    w = np.einsum("bii->bi", M).copy()
    order = np.argsort(w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    return (w[0], V[0]) if squeeze else (w, V)


def project_parabola_scalar(a, bsq, lamsq, tol=1e-13, max_iter=80):
    """Multiplier for the scalar paraboloid projection.

    Solves g(s) = (a - s) + lamsq*bsq / (2 (1 + s*lamsq)^2) = 0 for the cells
    with g(0) > 0, by Newton steps safeguarded with bisection.  Returns s >= 0
    (zero for cells already inside the set).
    """
    a = np.asarray(a, dtype=np.float64)
    bsq = np.asarray(bsq, dtype=np.float64)
    w2 = lamsq * bsq
    viol = a + 0.5 * w2 > 0.0
    s = np.zeros_like(a)
    if not np.any(viol):
        return s
    av = a[viol]
    w2v = w2[viol]
    lo = np.zeros_like(av)
    hi = av + 0.5 * w2v
    x = np.where(av > 0.0, av, 0.0)  # start at the lamsq=0 root
    scale = np.maximum(1.0, np.maximum(np.abs(av), w2v))
    for _ in range(max_iter):
        u = 1.0 + x * lamsq
        g = av - x + 0.5 * w2v / (u * u)
        done = np.abs(g) <= tol * scale
        if np.all(done):
            break
        lo = np.where(g > 0.0, x, lo)
        hi = np.where(g < 0.0, x, hi)
        gp = -1.0 - lamsq * w2v / (u * u * u)
        xn = x - g / gp
        bad = ~((xn > lo) & (xn < hi))
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        x = np.where(done, x, xn)
    s[viol] = x
    return s


def project_parabola_matrix(A, BB, lamsq, sigma, iters):
    """Warm-started dual ascent for the reduced matrix paraboloid projection.

    Target set: {(A_, B_): A_ + lamsq/2 * B_ B_^T <= 0} in the Loewner order.
    ``A`` is the point's symmetric part, ``BB = B0 @ B0.T``, and ``sigma`` the
    warm-started KKT multiplier (PSD).  Runs projected gradient ascent on the
    1-strongly-concave dual; returns (sigma, w, V) where (w, V) is the
    eigendecomposition of the returned multiplier.
    """
    A = np.asarray(A, dtype=np.float64)
    BB = np.asarray(BB, dtype=np.float64)
    Bn, n, _ = A.shape
    sig = np.asarray(sigma, dtype=np.float64).copy()
    normBB = np.sqrt(np.sum(BB * BB, axis=(1, 2)))
    eta = 1.0 / (1.0 + lamsq * lamsq * normBB)
    w = None
    V = None
    eye = np.broadcast_to(np.eye(n), (Bn, n, n))
    for _ in range(max(1, iters)):
        if w is None:
            w, V = eigh_batch(sig)
        # (I + lamsq*sigma)^(-1) through sigma's eigenbasis
        d = 1.0 / (1.0 + lamsq * w)
        inv = np.einsum("bik,bk,bjk->bij", V, d, V)
        M = A - sig + 0.5 * lamsq * (inv @ BB @ inv)
        M = 0.5 * (M + np.transpose(M, (0, 2, 1)))
        w, V = eigh_batch(sig + eta[:, None, None] * M)
        w = np.maximum(w, 0.0)
        sig = np.einsum("bik,bk,bjk->bij", V, w, V)
    return sig, w, V


def _as_batch(x, n):
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(-1, n, n)
