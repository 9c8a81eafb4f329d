"""Closed-form and small-instance oracles for the scalar transport metric:
Dirac-to-Dirac costs and geodesics, the static semi-coupling value, Hellinger
upper bounds, and the epsilon-regularization of measures on boxes.
"""

import math

import numpy as np

from .errors import InvalidEpsilon, InvalidMass, ShapeError, Unsupported
from . import tensor

TWO_ATOM_CASE_TOL = 1e-12


def cos_trunc(z, b=math.pi / 2):
    """cos(min(|z|, b)): the truncated cosine of the static formulation."""
    return math.cos(min(abs(z), b))


class AtomicMeasure:
    """Finite list of (position, mass) atoms; masses nonnegative or PSD."""

    def __init__(self, atoms):
        checked = []
        for x, m in atoms:
            x = np.atleast_1d(np.asarray(x, dtype=np.float64))
            m_arr = np.asarray(m, dtype=np.float64)
            if m_arr.ndim == 0:
                if m_arr < 0:
                    raise InvalidMass(f"negative mass {float(m_arr)}")
                checked.append((x, float(m_arr)))
            else:
                w, _ = tensor._kernels.eigh_batch(0.5 * (m_arr + m_arr.T))
                if w[0] < -1e-12 * max(1.0, np.abs(w).max()):
                    raise InvalidMass("matrix mass must be PSD")
                checked.append((x, m_arr))
        self.atoms = checked

    def total_mass(self):
        return sum(np.trace(np.atleast_2d(m)) if np.ndim(m) else m for _, m in self.atoms)

    def scalar_arrays(self):
        if any(np.ndim(m) for _, m in self.atoms):
            raise Unsupported("scalar masses required")
        if not self.atoms:
            return np.zeros((0, 1)), np.zeros(0)
        xs = np.array([x for x, _ in self.atoms])
        ms = np.array([m for _, m in self.atoms])
        return xs, ms

    def to_json_dict(self):
        return {
            "atoms": [
                {"x": x.tolist(), "m": (m if np.ndim(m) == 0 else np.asarray(m).ravel().tolist())}
                for x, m in self.atoms
            ]
        }

    @classmethod
    def from_json_dict(cls, doc):
        atoms = []
        for a in doc["atoms"]:
            m = a["m"]
            if isinstance(m, list):
                n = int(round(math.sqrt(len(m))))
                m = np.reshape(m, (n, n))
            atoms.append((a["x"], m))
        return cls(atoms)


def _dist(x, y):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    return float(np.linalg.norm(x - y))


def wfr_dirac_cost(x, m0, y, m1):
    """Squared distance between two Dirac atoms:
    2 (m0 + m1 - 2 sqrt(m0 m1) cos_{pi/2}(|x - y| / 2))."""
    if m0 < 0 or m1 < 0:
        raise InvalidMass(f"masses must be nonnegative, got {m0}, {m1}")
    return 2.0 * (m0 + m1 - 2.0 * math.sqrt(m0 * m1) * cos_trunc(_dist(x, y) / 2.0))


class GeodesicSample:
    """State of the Dirac geodesic at one interpolation time."""

    def __init__(self, s, mass, position=None, atom_pair=None, non_unique=False):
        self.s = s
        self.mass = mass
        self.position = position
        self.atom_pair = atom_pair  # [(x, mass0), (y, mass1)] for the two-atom family
        self.non_unique = non_unique


def _adaptive_simpson(f, a, b, tol=1e-10, depth=48):
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)

    def rec(a, b, fa, fm, fb, whole, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6 * (fa + 4 * flm + fm)
        right = (b - m) / 6 * (fm + 4 * frm + fb)
        if depth <= 0 or abs(left + right - whole) <= 15 * tol:
            return left + right + (left + right - whole) / 15
        return rec(a, m, fa, flm, fm, left, depth - 1) + rec(
            m, b, fm, frm, fb, right, depth - 1
        )

    whole = (b - a) / 6 * (fa + 4 * fm + fb)
    return rec(a, b, fa, fm, fb, whole, depth)


def wfr_dirac_geodesic(x, m0, y, m1, s):
    """Geodesic between m0*delta_x and m1*delta_y sampled at s in [0, 1].

    |x-y| < pi: single traveling atom with quadratic mass; > pi: two
    decaying/growing atoms; = pi: reported non-unique, both families given.
    """
    if m0 < 0 or m1 < 0:
        raise InvalidMass("masses must be nonnegative")
    if not 0.0 <= s <= 1.0:
        raise ShapeError(f"s must be in [0, 1], got {s}")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    dist = _dist(x, y)

    def mass_one_atom(t):
        return (
            (1 - t) ** 2 * m0
            + t**2 * m1
            + 2 * t * (1 - t) * math.sqrt(m0 * m1) * math.cos(dist / 2.0)
        )

    def two_atom(t):
        return GeodesicSample(
            t,
            (1 - t) ** 2 * m0 + t**2 * m1,
            atom_pair=[(x, (1 - t) ** 2 * m0), (y, t**2 * m1)],
        )

    if abs(dist - math.pi) <= TWO_ATOM_CASE_TOL and m0 > 0 and m1 > 0:
        one = _one_atom_sample(x, m0, y, m1, s, dist, mass_one_atom)
        pair = two_atom(s)
        one.non_unique = True
        one.atom_pair = pair.atom_pair
        return one
    if dist > math.pi:
        return two_atom(s)
    return _one_atom_sample(x, m0, y, m1, s, dist, mass_one_atom)


def _one_atom_sample(x, m0, y, m1, s, dist, mass):
    if m0 == 0.0 and m1 == 0.0:
        return GeodesicSample(s, 0.0, position=x.copy())
    if m0 == 0.0:  # pure reaction limits: the atom never moves
        return GeodesicSample(s, mass(s), position=y.copy())
    if m1 == 0.0 or dist == 0.0:
        return GeodesicSample(s, mass(s), position=x.copy())
    inv_int = _adaptive_simpson(lambda t: 1.0 / mass(t), 0.0, 1.0)
    H = 1.0 / inv_int
    partial = _adaptive_simpson(lambda t: 1.0 / mass(t), 0.0, s) if s > 0 else 0.0
    arc = dist * H * partial
    direction = (y - x) / dist
    return GeodesicSample(s, mass(s), position=x + arc * direction)


def _simplex_scale_project(M, targets, axis):
    """Euclidean projection of rows/cols of M >= 0 onto the mass simplices."""
    M = np.moveaxis(M, axis, 0)
    out = np.empty_like(M)
    for i in range(M.shape[0]):
        out[i] = _project_simplex(M[i].ravel(), targets[i]).reshape(M[i].shape)
    return np.moveaxis(out, 0, axis)


def _project_simplex(v, mass):
    if mass <= 0:
        return np.zeros_like(v)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - mass
    idx = np.arange(1, v.size + 1)
    cond = u - css / idx > 0
    rho = idx[cond][-1]
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def wfr_static_value(rho0, rho1, seed=0, tol=1e-9, max_alternations=2000):
    """Static semi-coupling value between two scalar atomic measures.

    2 (total masses) - 4 sup over semi-couplings of sum c_ij sqrt(g0 g1).
    The sup is a concave maximization solved by alternating closed-form
    row/column updates from multiple starts, with a projected-gradient
    polish; stall detection at `tol` on the objective.
    """
    xs0, m0 = rho0.scalar_arrays()
    xs1, m1 = rho1.scalar_arrays()
    M0, M1 = float(m0.sum()), float(m1.sum())
    bound = 2.0 * (M0 + M1)
    if len(m0) == 0 or len(m1) == 0 or M0 == 0.0 or M1 == 0.0:
        return bound
    C = np.array([[cos_trunc(_dist(a, b) / 2.0) for b in xs1] for a in xs0])
    C2 = C * C

    def objective(g0, g1):
        return float(np.sum(C * np.sqrt(g0 * g1)))

    def alternate(g1, stall):
        best = -np.inf
        g0 = None
        for _ in range(max_alternations):
            den = C2 @ np.ones_like(m1) if g1 is None else (C2 * g1).sum(axis=1)
            g0 = np.where(
                den[:, None] > 0, m0[:, None] * C2 * g1 / np.where(den[:, None] > 0, den[:, None], 1.0), m0[:, None] / len(m1)
            )
            den1 = (C2 * g0).sum(axis=0)
            g1 = np.where(
                den1[None, :] > 0, m1[None, :] * C2 * g0 / np.where(den1[None, :] > 0, den1[None, :], 1.0), m1[None, :] / len(m0)
            )
            val = objective(g0, g1)
            if val <= best + stall * max(1.0, abs(val)):
                return val, g0, g1
            best = val
        return best, g0, g1

    rng = np.random.default_rng(seed)
    best_val, best_pair = -np.inf, None
    starts = [np.tile(m1 / len(m0), (len(m0), 1))]
    for _ in range(4):
        raw = rng.random((len(m0), len(m1))) + 1e-3
        starts.append(raw * (m1 / raw.sum(axis=0))[None, :])
    for g1 in starts:
        val, g0, g1 = alternate(g1, tol)
        if val > best_val:
            best_val, best_pair = val, (g0, g1)

    # polish: continue the alternation from the winner with a tight stall
    # threshold, then projected-gradient steps on both plans jointly
    best_val, g0, g1 = alternate(best_pair[1], 1e-14)
    step = 0.25 * max(M0, M1)
    for _ in range(60):
        with np.errstate(divide="ignore", invalid="ignore"):
            d0 = np.where(g0 > 0, 0.5 * C * np.sqrt(np.where(g0 > 0, g1 / np.where(g0 > 0, g0, 1.0), 0.0)), C * 1.0)
            d1 = np.where(g1 > 0, 0.5 * C * np.sqrt(np.where(g1 > 0, g0 / np.where(g1 > 0, g1, 1.0), 0.0)), C * 1.0)
        c0 = _simplex_scale_project(g0 + step * d0, m0, 0)
        c1 = _simplex_scale_project(g1 + step * d1, m1, 1)
        val = objective(c0, c1)
        if val > best_val + tol:
            best_val, g0, g1 = val, c0, c1
        else:
            step *= 0.5
            if step < 1e-12:
                break
    value = bound - 4.0 * best_val
    return float(min(max(value, 0.0), bound))


def hellinger_upper_bound(G0, G1, lam2=1.0):
    """2 ||lam2^{-1}||_F^2 * integral of ||sqrt(G1) - sqrt(G0)||_F^2.

    Any feasible transport objective for these endpoints sits below this.
    Accepts two discrete states on one mesh (integral = patch-volume sum).
    """
    if G0.values.shape != G1.values.shape:
        raise ShapeError("endpoint shapes differ")
    n = G0.values.shape[1]
    lam2 = np.asarray(lam2, dtype=np.float64)
    lam2_inv = np.linalg.inv(lam2 if lam2.ndim == 2 else lam2 * np.eye(n))
    s0 = tensor.sqrt_psd_batch(G0.values, clamp_rel=1e-10)
    s1 = tensor.sqrt_psd_batch(G1.values, clamp_rel=1e-10)
    diff2 = np.sum((s1 - s0) ** 2, axis=(1, 2))
    lam_fac = float(np.sum(lam2_inv**2))
    return 2.0 * lam_fac * float(np.dot(G0.mesh.patch_volumes, diff2))


# ---------------------------------------------------------------------------
# epsilon-regularization on a box domain


_MOLLIFIER_NORM = {}


def _bump_profile(r2):
    """exp(1/(r^2 - 1)) on r^2 < 1, zero outside (radial bump)."""
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(1.0 / (r2[inside] - 1.0))
    return out


def _mollifier_constant(d, panels=64, order=10):
    if d in _MOLLIFIER_NORM:
        return _MOLLIFIER_NORM[d]
    g, gw = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    r = np.concatenate([0.5 * (b - a) * (g + 1) + a for a, b in zip(edges[:-1], edges[1:])])
    w = np.concatenate([0.5 * (b - a) * gw for a, b in zip(edges[:-1], edges[1:])])
    vals = _bump_profile(r * r)
    if d == 1:
        total = 2.0 * np.dot(w, vals)
    elif d == 2:
        total = 2.0 * math.pi * np.dot(w, vals * r)
    else:
        total = 4.0 * math.pi * np.dot(w, vals * r * r)
    _MOLLIFIER_NORM[d] = total
    return total


def mollifier(d, x, eps):
    """theta_d^eps(x): normalized radial bump scaled to support radius eps."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    r2 = np.sum((x / eps) ** 2, axis=1)
    return _bump_profile(r2) / (_mollifier_constant(d) * eps**d)


class Box:
    """Axis-aligned box; the star-shape gauge and its Lipschitz constant."""

    def __init__(self, lengths):
        self.lengths = np.asarray(lengths, dtype=np.float64).reshape(-1)
        if np.any(self.lengths <= 0):
            raise ShapeError("box lengths must be positive")
        self.dim = self.lengths.size
        self.center = 0.5 * self.lengths
        self.half = 0.5 * self.lengths
        self.gauge_lipschitz = float(1.0 / self.half.min())

    def gauge(self, x):
        return float(np.max(np.abs(np.asarray(x) - self.center) / self.half))

    def distance(self, x):
        excess = np.maximum(np.abs(np.asarray(x) - self.center) - self.half, 0.0)
        return float(np.linalg.norm(excess))

    def contains(self, x, tol=0.0):
        return self.gauge(x) <= 1.0 + tol


class RegularizedDensity:
    """Smooth density (1-eps) * compressed mollification + eps * floor term."""

    def __init__(self, rho, eps, box):
        if not 0.0 < eps <= 0.5:
            raise InvalidEpsilon(f"eps must lie in (0, 0.5], got {eps}")
        self.eps = eps
        self.box = box
        self.rho = rho
        self.scale = 1.0 + box.gauge_lipschitz * eps
        d = box.dim
        # floor profile: product bump supported on the 1-neighborhood,
        # scaled so it is >= 1 on the 1/2-neighborhood
        widths = box.half + 0.95
        edge = np.prod(_bump_profile(((box.half + 0.5) / widths) ** 2))
        self._floor_amp = 1.0 / edge

        if hasattr(rho, "atoms"):
            self._atom_xs = np.array([np.atleast_1d(x) for x, _ in rho.atoms])
            self._atom_ms = np.array([float(m) for _, m in rho.atoms])
            self._density = None
            self.target_mass = float(self._atom_ms.sum())
        else:
            # zero extension outside the box is part of the construction
            def extended(x):
                return rho(x) if box.contains(x) else 0.0

            self._density = extended
            self.target_mass = self._box_integral(lambda z: np.array([rho(x) for x in z]))

    def _floor(self, x):
        widths = self.box.half + 0.95
        u2 = ((np.atleast_2d(x) - self.box.center) / widths) ** 2
        vals = np.prod(_bump_profile(u2), axis=1) if self.box.dim > 1 else _bump_profile(u2[:, 0])
        return self._floor_amp * vals

    def _mollified_rho(self, w):
        """(theta_eps * rho)(w) for a batch of points w."""
        w = np.atleast_2d(w)
        if self._density is None:
            out = np.zeros(w.shape[0])
            for x, m in zip(self._atom_xs, self._atom_ms):
                out += m * mollifier(self.box.dim, w - x[None, :], self.eps)
            return out
        breaks = (0.0, float(self.box.lengths[0])) if self.box.dim == 1 else ()
        return self._convolve(
            lambda z: np.array([self._density(x) for x in z]), w, breakpoints=breaks
        )

    def _mollified_floor(self, w):
        return self._convolve(self._floor, w)

    def _convolve(self, fun, w, breakpoints=()):
        d = self.box.dim
        g, gw = np.polynomial.legendre.leggauss(24 if d == 1 else 12)
        out = np.zeros(np.atleast_2d(w).shape[0])
        if d == 1:
            # integrate kernel(u) * fun(w - u) per point, splitting at the
            # points where w - u crosses a discontinuity of fun and into
            # composite panels across the kernel's steep shoulders
            W = np.atleast_2d(w)[:, 0]
            base = np.linspace(-self.eps, self.eps, 7)
            for j, wj in enumerate(W):
                knots = sorted({*base, *(wj - b for b in breakpoints if abs(wj - b) < self.eps)})
                acc = 0.0
                for a, b in zip(knots[:-1], knots[1:]):
                    u = 0.5 * (b - a) * (g + 1) + a
                    ker = mollifier(d, u[:, None], self.eps)
                    vals = np.array([float(fun(np.array([[wj - ui]]))) for ui in u])
                    acc += 0.5 * (b - a) * float(np.dot(gw, ker * vals))
                out[j] = acc
            return out
        else:
            for gx, wx in zip(g, gw):
                for gy, wy in zip(g, gw):
                    u = self.eps * np.array([gx, gy])
                    ker = mollifier(d, u[None, :], self.eps)[0]
                    out += ker * wx * wy * self.eps**2 * fun(np.atleast_2d(w) - u)
        return out

    def main_term(self, z):
        """(1-eps)-weighted compressed mollification, evaluated at z."""
        z = np.atleast_2d(z)
        w = self.box.center + self.scale * (z - self.box.center)
        return self.scale**self.box.dim * self._mollified_rho(w)

    def floor_term(self, z):
        z = np.atleast_2d(z)
        w = self.box.center + self.scale * (z - self.box.center)
        vals = self.scale**self.box.dim * self._mollified_floor(w)
        inside = np.array([self.box.distance(x) <= self.eps for x in w])
        return vals * inside

    def __call__(self, z):
        z = np.atleast_2d(z)
        return (1.0 - self.eps) * self.main_term(z) + self.eps * self.floor_term(z)

    def _box_integral(self, fun, panels_per_eps=12, order=12):
        d = self.box.dim
        g, gw = np.polynomial.legendre.leggauss(order)
        panels = max(8, int(panels_per_eps / self.eps))
        axes = []
        for i in range(d):
            edges = np.linspace(0.0, self.box.lengths[i], panels + 1)
            pts = []
            wts = []
            for a, b in zip(edges[:-1], edges[1:]):
                pts.append(0.5 * (b - a) * (g + 1) + a)
                wts.append(0.5 * (b - a) * gw)
            axes.append((np.concatenate(pts), np.concatenate(wts)))
        if d == 1:
            return float(np.dot(axes[0][1], fun(axes[0][0][:, None])))
        if d == 2:
            X, Y = np.meshgrid(axes[0][0], axes[1][0], indexing="ij")
            W = np.outer(axes[0][1], axes[1][1])
            pts = np.stack([X.ravel(), Y.ravel()], axis=1)
            return float(np.dot(W.ravel(), fun(pts)))
        raise Unsupported("regularization quadrature implemented for d <= 2")

    def diagnostics(self):
        main = self._box_integral(self.main_term)
        floor = self._box_integral(self.floor_term)
        return {
            "main_mass": main,
            "floor_mass": floor,
            "total_mass": (1 - self.eps) * main + self.eps * floor,
            "target_mass": self.target_mass,
            "mass_defect": abs(main - self.target_mass),
        }


def epsilon_regularize(rho, eps, box):
    """Regularized density on the box; see RegularizedDensity."""
    if not isinstance(box, Box):
        box = Box(box)
    return RegularizedDensity(rho, eps, box)


def tv_distance_densities(f, g, box, panels=256, order=6):
    """integral over the box of |f - g| (composite Gauss)."""
    if not isinstance(box, Box):
        box = Box(box)
    if box.dim != 1:
        raise Unsupported("tv helper implemented for d = 1")
    gpts, gwts = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, box.lengths[0], panels + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        x = 0.5 * (b - a) * (gpts + 1) + a
        w = 0.5 * (b - a) * gwts
        fx = np.asarray(f(x[:, None])).ravel()
        gx = np.asarray(g(x[:, None])).ravel()
        total += float(np.dot(w, np.abs(fx - gx)))
    return total
