"""Reconstructions, sampling operators, the discrete derivation pair, and
runnable consistency-rate checks.

The derivation is built from the exact identity
    (Dstar_sigma G)_K = mean over K of Dstar(sum_v G_v hat_v),
which is a constant per element for a first-order operator acting on the
piecewise-linear interpolant, so assembly is hat-gradient algebra and the
adjoint D_sigma is an exact weighted transpose.
"""

import math

import numpy as np
import scipy.sparse as sp

from . import action
from .errors import NumericalError, ShapeError, Unsupported
from .fields import DiscreteMomentum, DiscreteSource, DiscreteState

# degree-2 exact quadrature on the reference simplex: barycentric points, weights
_QUAD_DEG2 = {
    1: (np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]]), np.array([1 / 6, 2 / 3, 1 / 6])),
    2: (
        np.array([[0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]]),
        np.array([1 / 3, 1 / 3, 1 / 3]),
    ),
    3: (
        np.array(
            [
                [(5 + 3 * math.sqrt(5)) / 20, (5 - math.sqrt(5)) / 20, (5 - math.sqrt(5)) / 20, (5 - math.sqrt(5)) / 20],
                [(5 - math.sqrt(5)) / 20, (5 + 3 * math.sqrt(5)) / 20, (5 - math.sqrt(5)) / 20, (5 - math.sqrt(5)) / 20],
                [(5 - math.sqrt(5)) / 20, (5 - math.sqrt(5)) / 20, (5 + 3 * math.sqrt(5)) / 20, (5 - math.sqrt(5)) / 20],
                [(5 - math.sqrt(5)) / 20, (5 - math.sqrt(5)) / 20, (5 - math.sqrt(5)) / 20, (5 + 3 * math.sqrt(5)) / 20],
            ]
        ),
        np.array([0.25, 0.25, 0.25, 0.25]),
    ),
}


def quad_points(mesh, refine=0):
    """Quadrature points/weights per element: (T, P, d) coords, (P,) weights,
    (T, P, d+1) barycentric coordinates (= hat-function values)."""
    bary, w = _QUAD_DEG2[mesh.dim]
    if refine:
        bary, w = _refined_rule(mesh.dim, refine)
    X = mesh.vertices[mesh.simplices]  # (T, d+1, d)
    pts = np.einsum("pl,tld->tpd", bary, X)
    return pts, w, np.broadcast_to(bary, (mesh.num_simplices,) + bary.shape)


def _refined_rule(dim, levels):
    """Composite degree-2 rule from `levels` midpoint refinements (1d only)."""
    if dim != 1:
        raise Unsupported("refined quadrature rules are 1d-only")
    bary, w = _QUAD_DEG2[1]
    cells = 2**levels
    pts = []
    wts = []
    for c in range(cells):
        a, b = c / cells, (c + 1) / cells
        for p, wi in zip(bary, w):
            t = a + (b - a) * p[1]
            pts.append([1.0 - t, t])
            wts.append(wi / cells)
    return np.array(pts), np.array(wts)


class ContinuousOperatorSpec:
    """First-order derivation choice: plain or symmetric divergence.

    Divergence: n=1, k=d test fields are scalars, Dstar = grad, D = div.
    SymmetricDivergence: n=d, k=1; Dstar = row divergence of symmetric
    fields, D = symmetric gradient of vector fields.  Both kill constants:
    Dstar(I) = 0.
    """

    DIVERGENCE = "Divergence"
    SYMMETRIC_DIVERGENCE = "SymmetricDivergence"

    def __init__(self, tag, d):
        if tag not in (self.DIVERGENCE, self.SYMMETRIC_DIVERGENCE):
            raise Unsupported(f"unknown operator tag {tag!r}")
        self.tag = tag
        self.d = d
        if tag == self.DIVERGENCE:
            self.n, self.k = 1, d
        else:
            self.n, self.k = d, 1

    def check_mesh(self, mesh):
        if mesh.dim != self.d:
            raise ShapeError(f"operator built for d={self.d}, mesh has d={mesh.dim}")

    def dstar_vertex_action(self, G, g):
        """Contribution of value G at one vertex with hat gradient g."""
        if self.tag == self.DIVERGENCE:
            return G[0, 0] * g[None, :]
        Gs = 0.5 * (G + G.T)
        return (Gs @ g)[:, None]

    def dstar_of_field(self, value_grad):
        """Dstar applied to a smooth test field, from its value gradient.

        value_grad has shape (n, n, d) = gradient of each entry.
        """
        if self.tag == self.DIVERGENCE:
            return value_grad[0, 0, :][None, :]
        return np.einsum("ijj->i", value_grad)[:, None]

    def d_of_field(self, q_value, q_grad):
        """D applied to a smooth momentum field from its gradient.

        q_grad has shape (n, k, d); returns an (n, n) matrix value.
        """
        if self.tag == self.DIVERGENCE:
            return np.array([[np.trace(q_grad[0])]])
        J = q_grad[:, 0, :]  # (d, d) Jacobian of the vector field
        return 0.5 * (J + J.T)


class SparseMap:
    """Triplet sparse matrix on flattened field coordinates."""

    def __init__(self, rows, cols, triplets):
        self.rows = rows
        self.cols = cols
        self.triplets = triplets  # (i, j, value) arrays

    @classmethod
    def from_lists(cls, rows, cols, ii, jj, vv):
        ii = np.asarray(ii, dtype=np.int64)
        jj = np.asarray(jj, dtype=np.int64)
        vv = np.asarray(vv, dtype=np.float64)
        if ii.size and (ii.min() < 0 or ii.max() >= rows or jj.min() < 0 or jj.max() >= cols):
            raise ShapeError("triplet index out of range")
        return cls(rows, cols, (ii, jj, vv))

    def to_csr(self):
        ii, jj, vv = self.triplets
        return sp.coo_matrix((vv, (ii, jj)), shape=(self.rows, self.cols)).tocsr()

    def write_matrix_market(self, path):
        ii, jj, vv = self.triplets
        m = sp.coo_matrix((vv, (ii, jj)), shape=(self.rows, self.cols)).tocoo()
        m.sum_duplicates()
        with open(path, "w") as fh:
            fh.write("%%MatrixMarket matrix coordinate real general\n")
            fh.write(f"{self.rows} {self.cols} {m.nnz}\n")
            for i, j, v in zip(m.row, m.col, m.data):
                fh.write(f"{i + 1} {j + 1} {v:.17g}\n")


def assemble_discrete_divergence(mesh, spec):
    """Assemble (D_sigma, Dstar_sigma) as sparse maps on flattened fields.

    Dstar_sigma maps vertex states (V*n*n) to element fields (T*n*k) exactly;
    D_sigma is its negative adjoint under the weighted inner products, so the
    adjoint identity holds to machine precision by construction.
    """
    spec.check_mesh(mesh)
    n, k, d = spec.n, spec.k, spec.d
    T, V = mesh.num_simplices, mesh.num_vertices
    ii, jj, vv = [], [], []
    for K in range(T):
        for l in range(d + 1):
            v = mesh.simplices[K, l]
            g = mesh.nodal_gradients[K, l]
            if spec.tag == ContinuousOperatorSpec.DIVERGENCE:
                for j in range(d):
                    ii.append(K * d + j)
                    jj.append(v)
                    vv.append(g[j])
            else:
                for i in range(n):
                    for b in range(n):
                        ii.append(K * n + i)
                        jj.append((v * n + i) * n + b)
                        vv.append(0.5 * g[b])
                        ii.append(K * n + i)
                        jj.append((v * n + b) * n + i)
                        vv.append(0.5 * g[b])
    dstar = SparseMap.from_lists(T * n * k, V * n * n, ii, jj, vv)

    ii, jj, vv = dstar.triplets
    wK = np.repeat(mesh.element_volumes, 1)  # per element row weight |K|
    row_elem = ii // (n * k)
    col_vert = jj // (n * n)
    dvals = -vv * mesh.element_volumes[row_elem] / mesh.patch_volumes[col_vert]
    dmap = SparseMap.from_lists(V * n * n, T * n * k, jj, ii, dvals)
    return dmap, dstar


def apply_dstar_stencil(mesh, spec, Gvals):
    """Direct (non-assembled) evaluation of Dstar_sigma; cross-check path."""
    spec.check_mesh(mesh)
    Gs = 0.5 * (Gvals + np.transpose(Gvals, (0, 2, 1)))
    Gk = Gs[mesh.simplices]  # (T, d+1, n, n)
    grads = mesh.nodal_gradients
    if spec.tag == ContinuousOperatorSpec.DIVERGENCE:
        out = np.einsum("tl,tlj->tj", Gk[:, :, 0, 0], grads)[:, None, :]
    else:
        out = np.einsum("tlij,tlj->ti", Gk, grads)[:, :, None]
    return out


def apply_d_stencil(mesh, spec, qvals):
    """Direct evaluation of D_sigma (negative weighted adjoint), by scatter."""
    spec.check_mesh(mesh)
    n = spec.n
    out = np.zeros((mesh.num_vertices, n, n))
    volK = mesh.element_volumes
    if spec.tag == ContinuousOperatorSpec.DIVERGENCE:
        contrib = -np.einsum("tj,tlj->tl", qvals[:, 0, :], mesh.nodal_gradients) * volK[:, None]
        np.add.at(out[:, 0, 0], mesh.simplices.ravel(), contrib.ravel())
    else:
        outer = np.einsum("ti,tlj->tlij", qvals[:, :, 0], mesh.nodal_gradients)
        contrib = -0.5 * (outer + np.transpose(outer, (0, 1, 3, 2))) * volK[:, None, None, None]
        np.add.at(out, mesh.simplices.ravel(), contrib.reshape(-1, n, n))
    return out / mesh.patch_volumes[:, None, None]


# ---------------------------------------------------------------------------
# reconstructions and samplings


class AtomicReconstruction:
    """Vertex field as a weighted sum of Diracs at the vertices."""

    def __init__(self, mesh, values):
        self.mesh = mesh
        self.values = values  # (V, n, m)
        self.atoms = [
            (mesh.vertices[v], mesh.patch_volumes[v] * values[v])
            for v in range(mesh.num_vertices)
        ]

    def total_variation(self):
        return float(
            np.dot(self.mesh.patch_volumes, np.linalg.norm(self.values, axis=(1, 2)))
        )

    def pair(self, fun):
        acc = 0.0
        for x, weight in self.atoms:
            acc += float(np.sum(weight * np.atleast_2d(fun(x))))
        return acc


class PiecewiseConstantReconstruction:
    """Element field as a piecewise-constant density."""

    def __init__(self, mesh, values):
        self.mesh = mesh
        self.values = values  # (T, n, k)

    def total_variation(self):
        return float(
            np.dot(self.mesh.element_volumes, np.linalg.norm(self.values, axis=(1, 2)))
        )

    def pair(self, fun, refine=0):
        pts, w, _ = quad_points(self.mesh, refine)
        acc = 0.0
        for p in range(pts.shape[1]):
            vals = np.array([np.atleast_2d(fun(x)) for x in pts[:, p]])
            acc += w[p] * np.einsum("t,tij,tij->", self.mesh.element_volumes, self.values, vals)
        return float(acc)


class NodalReconstruction:
    """Vertex field as the piecewise-linear interpolant sum_v R_v hat_v."""

    def __init__(self, mesh, values):
        self.mesh = mesh
        self.values = values  # (V, n, m)

    def evaluate(self, x):
        k, lam = self.mesh.find_simplex(x)
        verts = self.mesh.simplices[k]
        return np.einsum("l,lij->ij", lam, self.values[verts])

    def total_variation(self, refine=0):
        pts, w, bary = quad_points(self.mesh, refine)
        vals = self.values[self.mesh.simplices]  # (T, d+1, n, m)
        acc = 0.0
        for p in range(pts.shape[1]):
            field = np.einsum("tl,tlij->tij", bary[:, p], vals)
            acc += w[p] * np.dot(self.mesh.element_volumes, np.linalg.norm(field, axis=(1, 2)))
        return float(acc)

    def pair(self, fun, refine=0):
        pts, w, bary = quad_points(self.mesh, refine)
        vals = self.values[self.mesh.simplices]
        acc = 0.0
        for p in range(pts.shape[1]):
            field = np.einsum("tl,tlij->tij", bary[:, p], vals)
            fv = np.array([np.atleast_2d(fun(x)) for x in pts[:, p]])
            acc += w[p] * np.einsum("t,tij,tij->", self.mesh.element_volumes, field, fv)
        return float(acc)


def reconstruct_atomic(field):
    return AtomicReconstruction(field.mesh, field.values)


def reconstruct_pwconstant(q):
    return PiecewiseConstantReconstruction(q.mesh, q.values)


def reconstruct_linear(field):
    return NodalReconstruction(field.mesh, field.values)


def _sample_vertex_values(mesh, fun, shape, refine=0):
    pts, w, bary = quad_points(mesh, refine)
    acc = np.zeros((mesh.num_vertices,) + shape)
    for p in range(pts.shape[1]):
        try:
            fv = np.array([np.atleast_2d(fun(x)) for x in pts[:, p]])
        except Exception as exc:
            raise NumericalError(f"sampling evaluation failed: {exc}") from exc
        contrib = w[p] * mesh.element_volumes[:, None, None, None] * (
            bary[:, p][:, :, None, None] * fv[:, None, :, :]
        )
        np.add.at(acc, mesh.simplices.ravel(), contrib.reshape(-1, *shape))
    return acc / mesh.patch_volumes[:, None, None]


def sample_state(mesh, f, n=1, refine=0):
    """Adjoint-of-reconstruction sampling onto vertices.

    f is a continuous (matrix-valued) function, or an atomic measure (object
    with an ``atoms`` list of (position, mass) pairs).  For an atom at x the
    exact integral of a hat function against the Dirac is its barycentric
    value, so the atom contributes mass * hat_v(x) / |T_v| at each vertex.
    """
    if hasattr(f, "atoms"):
        first = np.atleast_2d(np.asarray(f.atoms[0][1], dtype=np.float64)) if f.atoms else np.zeros((n, n))
        nn = first.shape[0]
        vals = np.zeros((mesh.num_vertices, nn, nn))
        for x, m in f.atoms:
            m = np.atleast_2d(np.asarray(m, dtype=np.float64))
            k, lam = mesh.find_simplex(np.atleast_1d(x))
            for l, v in enumerate(mesh.simplices[k]):
                vals[v] += lam[l] * m / mesh.patch_volumes[v]
        return DiscreteState(mesh, 0.5 * (vals + np.transpose(vals, (0, 2, 1))))
    probe = np.atleast_2d(f(mesh.vertices[0]))
    vals = _sample_vertex_values(mesh, f, probe.shape, refine)
    return DiscreteState(mesh, 0.5 * (vals + np.transpose(vals, (0, 2, 1))))


def sample_source(mesh, f, refine=0):
    probe = np.atleast_2d(f(mesh.vertices[0]))
    vals = _sample_vertex_values(mesh, f, probe.shape, refine)
    return DiscreteSource(mesh, vals)


def sample_momentum(mesh, f, refine=0):
    """Per-element averages of a continuous n x k field."""
    pts, w, _ = quad_points(mesh, refine)
    probe = np.atleast_2d(f(mesh.vertices[0]))
    acc = np.zeros((mesh.num_simplices,) + probe.shape)
    for p in range(pts.shape[1]):
        try:
            fv = np.array([np.atleast_2d(f(x)) for x in pts[:, p]])
        except Exception as exc:
            raise NumericalError(f"sampling evaluation failed: {exc}") from exc
        acc += w[p] * fv
    return DiscreteMomentum(mesh, acc)


# ---------------------------------------------------------------------------
# consistency-rate checks


class RateReport:
    """Measured errors on a mesh ladder and the fitted convergence order."""

    def __init__(self, name, sigmas, errors):
        self.name = name
        self.sigmas = np.asarray(sigmas, dtype=np.float64)
        self.errors = np.asarray(errors, dtype=np.float64)
        floored = np.maximum(self.errors, 1e-16)
        if len(sigmas) >= 2 and np.all(floored > 1e-15):
            coef = np.polyfit(np.log(self.sigmas), np.log(floored), 1)
            self.order = float(coef[0])
            self.constant = float(np.exp(coef[1]))
        else:
            self.order = math.inf  # errors at machine zero: exact
            self.constant = 0.0

    def __repr__(self):
        return f"RateReport({self.name}: order={self.order:.3f}, errors={self.errors})"


def check_consistency_adjoint(meshes, spec, phi):
    """Sup-error of the adjoint-consistency defect, per mesh, with fit.

    For each element the defect is the mean of Dstar(phi - linear interp of
    phi); its max Frobenius norm over elements is the exact sup over unit-L1
    discrete momenta of the pairing error.
    """
    errors = []
    sigmas = []
    for mesh in meshes:
        spec.check_mesh(mesh)
        pts, w, bary = quad_points(mesh)
        exact = np.zeros((mesh.num_simplices, spec.n, spec.k))
        for p in range(pts.shape[1]):
            dv = np.array([spec.dstar_of_field(phi.dvalue(x)) for x in pts[:, p]])
            exact += w[p] * dv
        phi_at_verts = np.array([np.atleast_2d(phi.value(v)) for v in mesh.vertices])
        interp = apply_dstar_stencil(mesh, spec, phi_at_verts)
        errors.append(float(np.linalg.norm(exact - interp, axis=(1, 2)).max()))
        sigmas.append(mesh.size().sigma)
    return RateReport("adjoint", sigmas, errors)


def check_consistency_sampling(meshes, spec, q_field, gqr_fields=None):
    """Rate reports for derivation consistency and the action gap.

    q_field: smooth momentum test field with the no-flux-type boundary
    behavior, exposing value(x), dvalue(x).  gqr_fields: (G, q, R) smooth
    fields (G uniformly positive) for the action-consistency gap; when
    omitted only the derivation report is produced.
    """
    d_errors = []
    gaps = []
    sigmas = []
    for mesh in meshes:
        spec.check_mesh(mesh)
        sigmas.append(mesh.size().sigma)
        d_map, _ = assemble_discrete_divergence(mesh, spec)
        D = d_map.to_csr()
        sq = sample_momentum(mesh, q_field.value)
        dq_sampled = sample_source(mesh, lambda x: spec.d_of_field(q_field.value(x), q_field.dvalue(x)))
        lhs = (D @ sq.values.ravel()).reshape(mesh.num_vertices, spec.n, spec.n)
        diff = lhs - dq_sampled.values
        d_errors.append(float(np.linalg.norm(diff, axis=(1, 2)).max()))

        if gqr_fields is not None:
            Gf, qf, Rf = gqr_fields
            G = sample_state(mesh, Gf.value)
            G = DiscreteState(mesh, G.values, psd=True)
            q = sample_momentum(mesh, qf.value)
            R = sample_source(mesh, Rf.value)
            dqf = sample_source(mesh, lambda x: spec.d_of_field(qf.value(x), qf.dvalue(x)))
            e_sig = (D @ q.values.ravel()).reshape(R.values.shape) - dqf.values
            R_shift = DiscreteSource(mesh, R.values + e_sig)
            jd = action.j_sigma(mesh, G, q, R_shift, (1.0, 1.0))
            jc = _continuous_action(mesh, Gf, qf, Rf)
            gaps.append(abs(jd - jc))
    out = [RateReport("derivation", sigmas, d_errors)]
    if gqr_fields is not None:
        out.append(RateReport("action-gap", sigmas, gaps))
    return out


def _continuous_action(mesh, Gf, qf, Rf, npts=48):
    """Reference action integral on the mesh's bounding box (tensor Gauss)."""
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    x1, w1 = np.polynomial.legendre.leggauss(npts if mesh.dim == 1 else 24)
    axes = [(0.5 * (hi[i] - lo[i]) * (x1 + 1) + lo[i], 0.5 * (hi[i] - lo[i]) * w1) for i in range(mesh.dim)]
    total = 0.0
    if mesh.dim == 1:
        for x, w in zip(*axes[0]):
            total += w * _pointwise_action(Gf, qf, Rf, np.array([x]))
    elif mesh.dim == 2:
        for x, wx in zip(*axes[0]):
            for y, wy in zip(*axes[1]):
                total += wx * wy * _pointwise_action(Gf, qf, Rf, np.array([x, y]))
    else:
        raise Unsupported("continuous action quadrature implemented for d <= 2")
    return total


def _pointwise_action(Gf, qf, Rf, x):
    G = np.atleast_2d(Gf.value(x))
    q = np.atleast_2d(qf.value(x))
    R = np.atleast_2d(Rf.value(x))
    Ginv = np.linalg.inv(G)
    return 0.5 * float(np.sum(q * (Ginv @ q)) + np.sum(R * (Ginv @ R)))


class SmoothField:
    """Test field carrying analytic value and gradient closures."""

    def __init__(self, value, dvalue):
        self.value = value
        self.dvalue = dvalue


def make_test_phi(spec, lengths):
    """Smooth symmetric test field for the adjoint consistency check."""
    L = np.asarray(lengths, dtype=np.float64)
    n, d = spec.n, spec.d

    def value(x):
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(i, n):
                v = math.cos((i + 1) * math.pi * x[0] / L[0])
                if d > 1:
                    v *= math.sin((j + 1) * math.pi * x[min(1, d - 1)] / L[min(1, d - 1)] + 0.3)
                v += 0.25 * float(np.sum(x**2)) / float(np.sum(L**2))
                out[i, j] = out[j, i] = v
        return out

    def dvalue(x):
        out = np.zeros((n, n, d))
        for i in range(n):
            for j in range(i, n):
                c0 = math.cos((i + 1) * math.pi * x[0] / L[0])
                s0 = math.sin((i + 1) * math.pi * x[0] / L[0])
                if d == 1:
                    out[i, j, 0] = -(i + 1) * math.pi / L[0] * s0 + 0.5 * x[0] / float(np.sum(L**2))
                else:
                    s1 = math.sin((j + 1) * math.pi * x[1] / L[1] + 0.3)
                    c1 = math.cos((j + 1) * math.pi * x[1] / L[1] + 0.3)
                    out[i, j, 0] = -(i + 1) * math.pi / L[0] * s0 * s1 + 0.5 * x[0] / float(np.sum(L**2))
                    out[i, j, 1] = (j + 1) * math.pi / L[1] * c0 * c1 + 0.5 * x[1] / float(np.sum(L**2))
                out[j, i] = out[i, j]
        return out

    return SmoothField(value, dvalue)


def make_test_momentum(spec, lengths):
    """Smooth momentum field satisfying the weak no-flux boundary symbol.

    Divergence: normal component vanishes on each box face; symmetric
    divergence: the whole vector field vanishes on the boundary.
    """
    L = np.asarray(lengths, dtype=np.float64)
    d = spec.d

    def bump(x):
        return np.prod(np.sin(np.pi * np.asarray(x) / L))

    def dbump(x, axis):
        out = 1.0
        for i in range(d):
            t = math.pi * x[i] / L[i]
            out *= (math.pi / L[i]) * math.cos(t) if i == axis else math.sin(t)
        return out

    if spec.tag == ContinuousOperatorSpec.DIVERGENCE:
        # component j depends on all coords, vanishes on faces x_j in {0, L_j}
        def value(x):
            return np.array([[math.sin(math.pi * x[j] / L[j]) * (1.0 + 0.3 * math.cos(2 * math.pi * x[0] / L[0])) for j in range(d)]])

        def dvalue(x):
            out = np.zeros((1, d, d))
            base = 1.0 + 0.3 * math.cos(2 * math.pi * x[0] / L[0])
            for j in range(d):
                s = math.sin(math.pi * x[j] / L[j])
                out[0, j, j] += math.pi / L[j] * math.cos(math.pi * x[j] / L[j]) * base
                out[0, j, 0] += -s * 0.3 * 2 * math.pi / L[0] * math.sin(2 * math.pi * x[0] / L[0])
            return out

    else:

        def value(x):
            b = bump(x)
            return np.array([[b * (1.0 + 0.2 * (i + 1) * x[0] / L[0])] for i in range(d)])

        def dvalue(x):
            out = np.zeros((d, 1, d))
            b = bump(x)
            for i in range(d):
                coef = 1.0 + 0.2 * (i + 1) * x[0] / L[0]
                for a in range(d):
                    out[i, 0, a] = dbump(x, a) * coef
                out[i, 0, 0] += b * 0.2 * (i + 1) / L[0]
            return out

    return SmoothField(value, dvalue)


def make_test_gqr(spec, lengths):
    """Uniformly positive smooth (G, q, R) triple for the action gap check."""
    L = np.asarray(lengths, dtype=np.float64)
    n, d = spec.n, spec.d

    def Gval(x):
        base = 2.0 + math.sin(math.pi * x[0] / L[0])
        out = base * np.eye(n)
        if n > 1:
            out[0, 1] = out[1, 0] = 0.3 * math.cos(math.pi * x[0] / L[0])
        return out

    def Rval(x):
        out = np.full((n, n), 0.1)
        out += 0.5 * math.cos(math.pi * x[0] / L[0]) * np.eye(n)
        return out

    q = make_test_momentum(spec, lengths)
    return (
        SmoothField(Gval, None),
        q,
        SmoothField(Rval, None),
    )
