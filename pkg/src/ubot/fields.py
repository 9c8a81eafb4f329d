"""Vertex- and element-indexed matrix fields with their weighted norms.

Three field kinds: states (symmetric per vertex, the PSD cone members),
momenta (n x k per element), sources (full n x n per vertex).  The inner
product weights are the patch volumes |T_v| for vertex fields and the element
volumes |K| for element fields; the discrete L1 norm and its max-type dual
follow the same weighting.
"""

import json

import numpy as np

from . import tensor
from .errors import InvalidMatrix, NotPsd, ShapeError


class WeightPair:
    """Weight matrices (lambda1, lambda2): PSD k x k and PD n x n."""

    def __init__(self, lam1, lam2):
        lam1 = np.atleast_2d(np.asarray(lam1, dtype=np.float64))
        lam2 = np.atleast_2d(np.asarray(lam2, dtype=np.float64))
        w1, _ = tensor._kernels.eigh_batch(0.5 * (lam1 + lam1.T))
        w2, _ = tensor._kernels.eigh_batch(0.5 * (lam2 + lam2.T))
        if w1[0] < -1e-12 * max(1.0, abs(w1[-1])):
            raise NotPsd("lambda1 must be positive semidefinite")
        if w2[0] < 1e-10:
            raise NotPsd("lambda2 eigenvalues must be >= 1e-10")
        self.lam1 = lam1
        self.lam2 = lam2
        self.lam1_pinv = tensor.pinv_sym_batch(lam1[None])[0]
        self.lam2_inv = np.linalg.inv(lam2)

    @classmethod
    def isotropic(cls, lam1, lam2, n, k):
        return cls(lam1 * np.eye(k), lam2 * np.eye(n))

    def isotropic_values(self):
        """(lam1, lam2) scalars when both weights are multiples of I, else None."""
        out = []
        for m in (self.lam1, self.lam2):
            c = m[0, 0]
            if not np.allclose(m, c * np.eye(m.shape[0]), rtol=0.0, atol=1e-14 * max(1.0, abs(c))):
                return None
            out.append(float(c))
        return tuple(out)


def _check_values(values, site_count, what):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3 or values.shape[0] != site_count:
        raise ShapeError(f"{what}: expected ({site_count}, n, k) values, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise InvalidMatrix(f"{what}: non-finite entries")
    return values


class DiscreteState:
    """Per-vertex symmetric matrices; element of X_sigma (or the PSD cone)."""

    kind = "state"

    def __init__(self, mesh, values, psd=False):
        values = _check_values(values, mesh.num_vertices, "state")
        if values.shape[1] != values.shape[2]:
            raise ShapeError("state values must be square")
        if not np.allclose(values, np.transpose(values, (0, 2, 1)), atol=1e-12):
            raise ShapeError("state values must be symmetric")
        values = 0.5 * (values + np.transpose(values, (0, 2, 1)))
        self.mesh = mesh
        self.psd_repairs = 0
        if psd:
            values, self.psd_repairs = tensor.psd_clamp_batch(values)
        self.values = values
        self.psd_flag = bool(psd)

    @property
    def n(self):
        return self.values.shape[1]

    def site_weights(self):
        return self.mesh.patch_volumes

    def value_at(self, v):
        return tensor.SymMatrix.from_array(self.values[v])

    def copy(self):
        return DiscreteState(self.mesh, self.values.copy(), psd=False)


class DiscreteMomentum:
    """Per-element n x k matrices; element of Y_sigma."""

    kind = "momentum"

    def __init__(self, mesh, values):
        self.values = _check_values(values, mesh.num_simplices, "momentum")
        self.mesh = mesh

    @property
    def n(self):
        return self.values.shape[1]

    @property
    def k(self):
        return self.values.shape[2]

    def site_weights(self):
        return self.mesh.element_volumes

    def value_at(self, k):
        return tensor.RectMatrix(self.values[k])


class DiscreteSource:
    """Per-vertex full n x n matrices; element of the ambient space."""

    kind = "source"

    def __init__(self, mesh, values):
        values = _check_values(values, mesh.num_vertices, "source")
        if values.shape[1] != values.shape[2]:
            raise ShapeError("source values must be square")
        self.values = values
        self.mesh = mesh

    @property
    def n(self):
        return self.values.shape[1]

    def site_weights(self):
        return self.mesh.patch_volumes

    def value_at(self, v):
        return tensor.RectMatrix(self.values[v])


def norm_l1(field):
    """Weighted sum of Frobenius norms: the discrete L1 norm."""
    fro = np.linalg.norm(field.values, axis=(1, 2))
    return float(np.dot(field.site_weights(), fro))


def norm_dual(field):
    """Max of Frobenius norms over sites: the dual of norm_l1."""
    if field.values.size == 0:
        return 0.0
    return float(np.linalg.norm(field.values, axis=(1, 2)).max())


def inner(a, b):
    """Weighted Frobenius pairing of two fields on the same sites."""
    if a.mesh is not b.mesh and (
        a.mesh.num_vertices != b.mesh.num_vertices or a.mesh.num_simplices != b.mesh.num_simplices
    ):
        raise ShapeError("fields live on different meshes")
    if a.values.shape != b.values.shape:
        raise ShapeError(f"shape mismatch: {a.values.shape} vs {b.values.shape}")
    if isinstance(a, DiscreteMomentum) != isinstance(b, DiscreteMomentum):
        raise ShapeError("cannot pair vertex and element fields")
    return float(np.einsum("s,sij,sij->", a.site_weights(), a.values, b.values))


def project_sym(R):
    """Orthogonal projection onto symmetric vertex fields (pointwise)."""
    sym = 0.5 * (R.values + np.transpose(R.values, (0, 2, 1)))
    return DiscreteState(R.mesh, sym)


class StaggeredPath:
    """Time-staggered triple: N+1 states, N momenta, N sources on one mesh."""

    def __init__(self, mesh, states, momenta, sources):
        states = np.asarray(states, dtype=np.float64)
        momenta = np.asarray(momenta, dtype=np.float64)
        sources = np.asarray(sources, dtype=np.float64)
        N = momenta.shape[0]
        if N < 1:
            raise ShapeError("need at least one time step")
        if states.shape[0] != N + 1 or sources.shape[0] != N:
            raise ShapeError(
                f"staggered counts: states {states.shape[0]} != N+1={N + 1} "
                f"or sources {sources.shape[0]} != N={N}"
            )
        if states.shape[1] != mesh.num_vertices or sources.shape[1] != mesh.num_vertices:
            raise ShapeError("vertex field size mismatch")
        if momenta.shape[1] != mesh.num_simplices:
            raise ShapeError("element field size mismatch")
        self.mesh = mesh
        self.states = states
        self.momenta = momenta
        self.sources = sources
        self.N = N

    @property
    def tau(self):
        return 1.0 / self.N

    def state_times(self):
        return np.arange(self.N + 1) * self.tau

    def midpoint_times(self):
        return (np.arange(self.N) + 0.5) * self.tau

    def state(self, i):
        return DiscreteState(self.mesh, self.states[i])

    def momentum(self, i):
        return DiscreteMomentum(self.mesh, self.momenta[i])

    def source(self, i):
        return DiscreteSource(self.mesh, self.sources[i])


# ---------------------------------------------------------------------------
# field JSON format


def field_to_json(field):
    n = field.values.shape[1]
    k = field.values.shape[2]
    return json.dumps(
        {
            "kind": field.kind,
            "n": n,
            "k": k,
            "values": [v.ravel().tolist() for v in field.values],
        }
    )


def field_from_json(mesh, text):
    doc = json.loads(text)
    kind = doc.get("kind")
    n, k = int(doc["n"]), int(doc["k"])
    values = np.array([np.reshape(row, (n, k)) for row in doc["values"]])
    if kind == "state":
        return DiscreteState(mesh, values)
    if kind == "momentum":
        return DiscreteMomentum(mesh, values)
    if kind == "source":
        return DiscreteSource(mesh, values)
    raise ShapeError(f"unknown field kind {kind!r}")
