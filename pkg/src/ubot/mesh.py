"""Conforming simplicial triangulations of boxes and intervals.

Structured generators (1d intervals, 2d triangulated grids, 3d Kuhn splits),
uniform red refinement, and the geometric quantities the transport scheme
needs: element volumes |K|, vertex patch volumes |T_v| = (1/(d+1)) sum |K|,
and the constant gradients of the nodal hat basis per element.
"""

import math

import numpy as np

from .errors import ShapeError, Unsupported


class Mesh:
    """Immutable simplicial mesh with precomputed geometry."""

    def __init__(self, dim, vertices, simplices):
        vertices = np.asarray(vertices, dtype=np.float64)
        simplices = np.asarray(simplices, dtype=np.int64)
        if dim not in (1, 2, 3):
            raise Unsupported(f"dim must be 1, 2 or 3, got {dim}")
        if vertices.ndim != 2 or vertices.shape[1] != dim:
            raise ShapeError(f"vertices must be (V, {dim}), got {vertices.shape}")
        if simplices.ndim != 2 or simplices.shape[1] != dim + 1:
            raise ShapeError(f"simplices must be (T, {dim + 1}), got {simplices.shape}")
        self.dim = dim
        self.vertices = vertices
        self.simplices = np.sort(simplices, axis=1)  # deterministic assembly order
        self.num_vertices = vertices.shape[0]
        self.num_simplices = simplices.shape[0]
        self._compute_geometry()

    def _compute_geometry(self):
        d = self.dim
        X = self.vertices[self.simplices]  # (T, d+1, d)
        edges = X[:, 1:, :] - X[:, :1, :]  # (T, d, d)
        det = np.linalg.det(edges)
        self.element_volumes = np.abs(det) / math.factorial(d)
        if np.any(self.element_volumes <= 0.0):
            k = int(np.argmin(self.element_volumes))
            raise ShapeError(f"simplex {k} has non-positive volume")
        # hat-function gradients: solve A U = I with A = [1 | x_j] rows
        A = np.concatenate([np.ones((self.num_simplices, d + 1, 1)), X], axis=2)
        U = np.linalg.solve(A, np.broadcast_to(np.eye(d + 1), A.shape).copy())
        self.nodal_gradients = np.transpose(U[:, 1:, :], (0, 2, 1))  # (T, d+1, d)
        self.patch_volumes = np.zeros(self.num_vertices)
        np.add.at(
            self.patch_volumes,
            self.simplices.ravel(),
            np.repeat(self.element_volumes / (d + 1), d + 1),
        )
        self.boundary_vertices = self._find_boundary_vertices()
        diffs = X[:, :, None, :] - X[:, None, :, :]
        self.element_diameters = np.sqrt((diffs**2).sum(-1)).max(axis=(1, 2))

    def _faces(self):
        d = self.dim
        faces = {}
        for k, simp in enumerate(self.simplices):
            for drop in range(d + 1):
                face = tuple(v for i, v in enumerate(simp) if i != drop)
                faces.setdefault(face, []).append(k)
        return faces

    def _find_boundary_vertices(self):
        bnd = set()
        for face, ks in self._faces().items():
            if len(ks) == 1:
                bnd.update(face)
        return np.array(sorted(bnd), dtype=np.int64)

    def validate_conforming(self):
        """Every (d-1)-face is shared by at most two simplices."""
        for face, ks in self._faces().items():
            if len(ks) > 2:
                raise ShapeError(f"face {face} shared by {len(ks)} simplices")
        return True

    def total_volume(self):
        return float(self.element_volumes.sum())

    def size(self):
        d = self.dim
        sigma = float(self.element_diameters.max())
        ratio = float((self.element_diameters**d / self.element_volumes).max())
        return MeshSize(sigma=sigma, shape_ratio=ratio)

    def interior_vertices(self):
        mask = np.ones(self.num_vertices, dtype=bool)
        mask[self.boundary_vertices] = False
        return np.nonzero(mask)[0]

    def barycenters(self):
        return self.vertices[self.simplices].mean(axis=1)

    def find_simplex(self, point, tol=1e-12):
        """Index and barycentric coordinates of a containing simplex."""
        point = np.asarray(point, dtype=np.float64)
        X = self.vertices[self.simplices]
        A = np.concatenate([np.ones((self.num_simplices, self.dim + 1, 1)), X], axis=2)
        rhs = np.concatenate([[1.0], point])
        rhs = np.broadcast_to(rhs[:, None], (self.num_simplices, self.dim + 1, 1))
        lam = np.linalg.solve(np.transpose(A, (0, 2, 1)), rhs)[:, :, 0]
        ok = np.all(lam >= -tol, axis=1)
        idx = np.nonzero(ok)[0]
        if idx.size == 0:
            raise ShapeError(f"point {point.tolist()} outside the mesh")
        k = int(idx[0])
        return k, np.clip(lam[k], 0.0, None)


class MeshSize:
    __slots__ = ("sigma", "shape_ratio")

    def __init__(self, sigma, shape_ratio):
        self.sigma = sigma
        self.shape_ratio = shape_ratio

    def __repr__(self):
        return f"MeshSize(sigma={self.sigma:.6g}, shape_ratio={self.shape_ratio:.6g})"


_KUHN_PERMS = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]


def generate_box_mesh(dim, lengths, cells_per_axis):
    """Structured triangulation of a box with the origin at a corner.

    2d grid cells split into 2 triangles along a fixed diagonal, 3d cells
    into 6 tetrahedra (Kuhn split); both conforming.
    """
    if dim not in (1, 2, 3):
        raise Unsupported(f"dim must be 1, 2 or 3, got {dim}")
    lengths = np.asarray(lengths, dtype=np.float64).reshape(-1)
    cells = np.asarray(cells_per_axis, dtype=np.int64).reshape(-1)
    if lengths.size != dim or cells.size != dim:
        raise ShapeError("lengths and cells_per_axis must have `dim` entries")
    if np.any(lengths <= 0) or np.any(cells < 1):
        raise Unsupported("lengths must be positive and cells >= 1")

    axes = [np.linspace(0.0, lengths[i], cells[i] + 1) for i in range(dim)]
    grids = np.meshgrid(*axes, indexing="ij")
    vertices = np.stack([g.ravel() for g in grids], axis=1)
    shape = cells + 1

    def vid(idx):
        out = idx[0]
        for i in range(1, dim):
            out = out * shape[i] + idx[i]
        return out

    simplices = []
    if dim == 1:
        for i in range(cells[0]):
            simplices.append((i, i + 1))
    elif dim == 2:
        for i in range(cells[0]):
            for j in range(cells[1]):
                v00 = vid((i, j))
                v10 = vid((i + 1, j))
                v01 = vid((i, j + 1))
                v11 = vid((i + 1, j + 1))
                simplices.append((v00, v10, v11))
                simplices.append((v00, v11, v01))
    else:
        for i in range(cells[0]):
            for j in range(cells[1]):
                for k in range(cells[2]):
                    base = np.array([i, j, k])
                    for perm in _KUHN_PERMS:
                        tet = [vid(base)]
                        cur = base.copy()
                        for axis in perm:
                            cur = cur.copy()
                            cur[axis] += 1
                            tet.append(vid(cur))
                        simplices.append(tuple(tet))
    return Mesh(dim, vertices, np.asarray(simplices))


def _octahedron_cycle(diag, others, adjacent):
    start = min(others)
    cycle = [start]
    rest = set(others) - {start}
    while rest:
        nbrs = sorted(v for v in rest if adjacent(cycle[-1], v))
        cycle.append(nbrs[0])
        rest.remove(nbrs[0])
    return cycle


def refine_uniform(mesh):
    """Red refinement: each element split via edge midpoints.

    Conformity and total volume are preserved; diameters halve for the
    structured generators (1d/2d exactly, 3d for Kuhn-type elements via the
    shortest-diagonal octahedron split).
    """
    d = mesh.dim
    verts = [mesh.vertices]
    midpoint = {}
    next_id = mesh.num_vertices

    def mid(a, b):
        nonlocal next_id
        key = (min(a, b), max(a, b))
        if key not in midpoint:
            midpoint[key] = next_id
            verts.append(0.5 * (mesh.vertices[key[0]] + mesh.vertices[key[1]])[None, :])
            next_id += 1
        return midpoint[key]

    new_simplices = []
    for simp in mesh.simplices:
        if d == 1:
            a, b = simp
            m = mid(a, b)
            new_simplices += [(a, m), (m, b)]
        elif d == 2:
            a, b, c = simp
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_simplices += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        else:
            a, b, c, e = simp
            m = {}
            for i, j in ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)):
                m[(i, j)] = mid(simp[i], simp[j])
            new_simplices += [
                (simp[0], m[(0, 1)], m[(0, 2)], m[(0, 3)]),
                (simp[1], m[(0, 1)], m[(1, 2)], m[(1, 3)]),
                (simp[2], m[(0, 2)], m[(1, 2)], m[(2, 3)]),
                (simp[3], m[(0, 3)], m[(1, 3)], m[(2, 3)]),
            ]
            # octahedron: pick the shortest of the three diagonals
            keys = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
            diags = [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))]
            coords = {k: 0.5 * (mesh.vertices[simp[k[0]]] + mesh.vertices[simp[k[1]]]) for k in keys}
            lengths2 = [float(np.sum((coords[p] - coords[q]) ** 2)) for p, q in diags]
            p, q = diags[int(np.argmin(lengths2))]

            def adjacent(u, v):
                return len(set(u) & set(v)) > 0

            cycle = _octahedron_cycle((p, q), [k for k in keys if k not in (p, q)], adjacent)
            for i in range(4):
                r, s = cycle[i], cycle[(i + 1) % 4]
                new_simplices.append((m[p], m[q], m[r], m[s]))
    return Mesh(d, np.concatenate(verts, axis=0), np.asarray(new_simplices))


def nodal_basis_integral(mesh, v):
    """|T_v|, the integral of the hat function at vertex v."""
    if not 0 <= v < mesh.num_vertices:
        raise IndexError(f"vertex {v} out of range [0, {mesh.num_vertices})")
    return float(mesh.patch_volumes[v])


def write_mesh(mesh, path):
    """Text format: `dim V T`, V coordinate lines, T index lines."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.dim} {mesh.num_vertices} {mesh.num_simplices}\n")
        for x in mesh.vertices:
            fh.write(" ".join(f"{c:.17g}" for c in x) + "\n")
        for s in mesh.simplices:
            fh.write(" ".join(str(int(i)) for i in s) + "\n")


def read_mesh(path):
    with open(path) as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.append(line.split())
    dim, nv, nt = (int(t) for t in tokens[0])
    if len(tokens) != 1 + nv + nt:
        raise ShapeError(f"expected {1 + nv + nt} data lines, found {len(tokens)}")
    vertices = np.array([[float(c) for c in row] for row in tokens[1 : 1 + nv]])
    simplices = np.array([[int(c) for c in row] for row in tokens[1 + nv :]])
    return Mesh(dim, vertices, simplices)
