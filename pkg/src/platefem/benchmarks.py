"""The two benchmark problems: loads, goal weights and reference values.

``example_1`` is a smooth polynomial solution on the unit square with the
goal integral over a diagonal strip; ``example_2`` is the singular corner
solution on the L-shaped domain with the goal integral over a disk at the
re-entrant corner.

The stored reference values correspond to the *unnormalized* goal integral
``int_w u dx``; the goal weights therefore default to density ``chi_w`` and a
``normalized()`` variant (density ``chi_w / |w|``) is available.

The polynomial load of example 1 is computed by exact coefficient calculus;
the singular load of example 2 by degree-4 truncated Taylor (jet) arithmetic
evaluated pointwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from math import comb

import numpy as np
from numpy.polynomial.polynomial import polyval2d

from .mesh import build_mesh
from .fespace import triangle_rule
from .assembly import QuadratureLoad

__all__ = [
    "BivariatePolynomial",
    "Jet4",
    "jet_variables",
    "jet_atan2",
    "GoalWeight",
    "StripWeight",
    "DiskWeight",
    "bilaplacian_poly",
    "singular_u_and_f",
    "singular_value",
    "reference_goal",
    "Problem",
    "get_problem",
    "unit_square_mesh",
    "unit_square_grid",
    "lshape_mesh",
    "ALPHA",
    "OMEGA_ANGLE",
]

ALPHA = 0.5444837367
OMEGA_ANGLE = 1.5 * math.pi

_REFERENCE_GOALS = {
    "example_1": 0.06044290015,
    "example_2": 0.018334438,
}


def reference_goal(problem_id):
    """Stored reference value of the goal integral for a benchmark id."""
    try:
        return _REFERENCE_GOALS[problem_id]
    except KeyError:
        raise ValueError(f"unknown problem id {problem_id!r}") from None


# --------------------------------------------------------------------------
# exact bivariate polynomial calculus
# --------------------------------------------------------------------------

class BivariatePolynomial:
    """Dense coefficient grid c[i, j] of x^i y^j with exact differentiation."""

    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=float)

    @property
    def degree(self):
        return self.coeffs.shape[0] - 1 + self.coeffs.shape[1] - 1

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        return polyval2d(pts[:, 0], pts[:, 1], self.coeffs)

    def dx(self):
        c = self.coeffs
        if c.shape[0] == 1:
            return BivariatePolynomial(np.zeros((1, c.shape[1])))
        return BivariatePolynomial(c[1:] * np.arange(1, c.shape[0])[:, None])

    def dy(self):
        c = self.coeffs
        if c.shape[1] == 1:
            return BivariatePolynomial(np.zeros((c.shape[0], 1)))
        return BivariatePolynomial(c[:, 1:] * np.arange(1, c.shape[1])[None, :])

    def grad(self, pts):
        return np.stack([self.dx()(pts), self.dy()(pts)], axis=1)

    def hess(self, pts):
        dxx = self.dx().dx()(pts)
        dxy = self.dx().dy()(pts)
        dyy = self.dy().dy()(pts)
        H = np.empty((len(np.atleast_2d(pts)), 2, 2))
        H[:, 0, 0] = dxx
        H[:, 0, 1] = H[:, 1, 0] = dxy
        H[:, 1, 1] = dyy
        return H


def bilaplacian_poly(u):
    """Exact coefficient computation of u_xxxx + 2 u_xxyy + u_yyyy."""
    if u.degree > 40:
        raise ValueError("polynomial degree above the supported cap")
    uxx = u.dx().dx()
    uyy = u.dy().dy()
    parts = [uxx.dx().dx(), uxx.dy().dy(), uxx.dy().dy(), uyy.dy().dy()]
    nx = max(p.coeffs.shape[0] for p in parts)
    ny = max(p.coeffs.shape[1] for p in parts)
    out = np.zeros((nx, ny))
    for p in parts:
        cx, cy = p.coeffs.shape
        out[:cx, :cy] += p.coeffs
    return BivariatePolynomial(out)


def _peak_polynomial():
    """u = 1e12 x^10 (1-x)^10 y^10 (1-y)^10 from its integer coefficient seeds."""
    c1 = np.zeros(21)
    for j in range(11):
        c1[10 + j] = comb(10, j) * (-1) ** j
    return BivariatePolynomial(1e12 * np.outer(c1, c1))


def _p10_deriv(k, t):
    """k-th derivative of t^10 (1-t)^10, evaluated in factored form.

    The Leibniz sum of products of powers is free of the catastrophic
    cancellation that the expanded coefficient grid suffers near t = 0, 1.
    """
    # cached integer powers t^(10-k..10), (1-t)^(10-k..10)
    s = 1.0 - t
    tp = {10 - k: t ** (10 - k)}
    sp = {10 - k: s ** (10 - k)}
    for e in range(10 - k + 1, 11):
        tp[e] = tp[e - 1] * t
        sp[e] = sp[e - 1] * s
    out = np.zeros_like(t)
    for j in range(k + 1):
        fa = math.perm(10, j)
        fb = math.perm(10, k - j) * (-1.0) ** (k - j)
        out += (comb(k, j) * fa * fb) * tp[10 - j] * sp[10 - (k - j)]
    return out


def _peak_value(pts):
    """Factored evaluation: exactly zero (with zero gradient) on the boundary."""
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0], pts[:, 1]
    return 1e12 * (x * (1.0 - x)) ** 10 * (y * (1.0 - y)) ** 10


def _peak_grad(pts):
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0], pts[:, 1]
    return 1e12 * np.stack([
        _p10_deriv(1, x) * _p10_deriv(0, y),
        _p10_deriv(0, x) * _p10_deriv(1, y),
    ], axis=1)


def _peak_hess(pts):
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0], pts[:, 1]
    H = np.empty((len(pts), 2, 2))
    H[:, 0, 0] = _p10_deriv(2, x) * _p10_deriv(0, y)
    H[:, 0, 1] = H[:, 1, 0] = _p10_deriv(1, x) * _p10_deriv(1, y)
    H[:, 1, 1] = _p10_deriv(0, x) * _p10_deriv(2, y)
    return 1e12 * H


def _peak_load(pts):
    """Bilaplacian of the peak solution in factored form."""
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0], pts[:, 1]
    return 1e12 * (_p10_deriv(4, x) * _p10_deriv(0, y)
                   + 2.0 * _p10_deriv(2, x) * _p10_deriv(2, y)
                   + _p10_deriv(0, x) * _p10_deriv(4, y))


# --------------------------------------------------------------------------
# degree-4 jets
# --------------------------------------------------------------------------

_JET_TERMS = frozenset((i, j) for i in range(5) for j in range(5) if i + j <= 4)


class Jet4:
    """Truncated bivariate Taylor expansion of total degree four.

    Coefficients are stored as (n, 5, 5) batches over expansion points;
    ``c[:, i, j]`` multiplies ``(x - x0)^i (y - y0)^j``.  Each jet tracks the
    set of structurally nonzero slots so that products only touch the terms
    that can contribute.
    """

    __slots__ = ("c", "slots")

    def __init__(self, c, slots=_JET_TERMS):
        self.c = c
        self.slots = frozenset(slots)

    @classmethod
    def constant(cls, values, n=None):
        values = np.asarray(values, dtype=float)
        if values.ndim == 0:
            values = np.full(n, float(values))
        c = np.zeros((len(values), 5, 5))
        c[:, 0, 0] = values
        return cls(c, {(0, 0)})

    @property
    def value(self):
        return self.c[:, 0, 0]

    @staticmethod
    def _per_point(other):
        """Lift a scalar or per-point array to broadcast over coefficients."""
        other = np.asarray(other, dtype=float)
        return other[..., None, None] if other.ndim == 1 else other

    def __add__(self, other):
        if isinstance(other, Jet4):
            return Jet4(self.c + other.c, self.slots | other.slots)
        out = self.c.copy()
        out[:, 0, 0] += other
        return Jet4(out, self.slots | {(0, 0)})

    __radd__ = __add__

    def __neg__(self):
        return Jet4(-self.c, self.slots)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet4) else -np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet4):
            return Jet4(self.c * self._per_point(other), self.slots)
        out = np.zeros_like(self.c)
        slots = set()
        for i, j in self.slots:
            a = self.c[:, i, j]
            for k, l in other.slots:
                if i + k + j + l > 4:
                    continue
                out[:, i + k, j + l] += a * other.c[:, k, l]
                slots.add((i + k, j + l))
        return Jet4(out, slots)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet4):
            return self * other.power(-1.0)
        return Jet4(self.c / self._per_point(other), self.slots)

    def _hat(self):
        """Deviation from the constant term."""
        out = self.c.copy()
        out[:, 0, 0] = 0.0
        return Jet4(out, self.slots - {(0, 0)})

    def hat_powers(self):
        """Powers 1..4 of the deviation, shared by series compositions."""
        h1 = self._hat()
        h2 = h1 * h1
        h3 = h2 * h1
        h4 = h2 * h2
        return (h1, h2, h3, h4)

    @staticmethod
    def combine(series, powers):
        """sum_k series[k] * hat^k with precomputed powers (series[0] constant)."""
        res = powers[0] * series[1]
        for k in (2, 3, 4):
            res = res + powers[k - 1] * series[k]
        return res + series[0]

    def compose(self, series, powers=None):
        """Composition sum_k series[k] * (self - value)^k, k = 0..4."""
        if powers is None:
            powers = self.hat_powers()
        return self.combine(series, powers)

    def power(self, p, powers=None):
        """Real power; requires a positive constant term unless p is a nonnegative integer."""
        u0 = self.value
        if float(p) == int(p) and p >= 0:
            k = int(p)
            res = Jet4.constant(np.ones_like(u0))
            for _ in range(k):
                res = res * self
            return res
        if np.any(u0 <= 0.0):
            raise ValueError("fractional power of a jet with non-positive value")
        coeffs = [u0 ** p]
        binom = np.ones_like(u0)
        for k in range(1, 5):
            binom = binom * (p - (k - 1)) / k
            coeffs.append(binom * u0 ** (p - k))
        return self.compose(coeffs, powers)

    def sqrt(self):
        return self.power(0.5)

    def sin(self, powers=None):
        s, c = np.sin(self.value), np.cos(self.value)
        return self.compose([s, c, -s / 2.0, -c / 6.0, s / 24.0], powers)

    def cos(self, powers=None):
        s, c = np.sin(self.value), np.cos(self.value)
        return self.compose([c, -s, -c / 2.0, s / 6.0, c / 24.0], powers)

    def partials(self):
        """Mixed partial derivatives d^(i+j)/dx^i dy^j from the Taylor coefficients."""
        fact = np.array([1.0, 1.0, 2.0, 6.0, 24.0])
        return self.c * fact[:, None] * fact[None, :]


def jet_variables(x, y):
    """Coordinate jets (X, Y) expanded at the points (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    X = np.zeros((len(x), 5, 5))
    X[:, 0, 0] = x
    X[:, 1, 0] = 1.0
    Y = np.zeros((len(y), 5, 5))
    Y[:, 0, 0] = y
    Y[:, 0, 1] = 1.0
    return Jet4(X, {(0, 0), (1, 0)}), Jet4(Y, {(0, 0), (0, 1)})


def jet_atan2(yj, xj):
    """Polar angle jet; the constant term is the principal atan2 value."""
    x0, y0 = xj.value, yj.value
    theta0 = np.arctan2(y0, x0)
    r0sq = x0**2 + y0**2
    a = xj * (x0 / r0sq) + yj * (y0 / r0sq)   # value 1 along the ray
    b = yj * (x0 / r0sq) - xj * (y0 / r0sq)   # value 0 along the ray
    s = b / a
    # arctan series around zero; s^5 and beyond truncate away
    res = s - (s * s * s) * (1.0 / 3.0)
    res.c[:, 0, 0] += theta0
    res.slots = res.slots | {(0, 0)}
    return res


# --------------------------------------------------------------------------
# singular corner solution (example 2)
# --------------------------------------------------------------------------

def _g_parameters(alpha, omega):
    am1, ap1 = alpha - 1.0, alpha + 1.0
    A = math.sin(am1 * omega) / am1 - math.sin(ap1 * omega) / ap1
    B = math.cos(am1 * omega) - math.cos(ap1 * omega)
    return am1, ap1, A, B


def _remap_angle(theta):
    """Map the principal angle onto [0, 3*pi/2) measured from the positive x-axis."""
    return np.where(theta < 0.0, theta + 2.0 * math.pi, theta)


def singular_value(pts, alpha=ALPHA, omega=OMEGA_ANGLE):
    """Exact solution values of the corner benchmark at interior points."""
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0], pts[:, 1]
    r = np.hypot(x, y)
    if np.any(r == 0.0):
        raise ValueError("evaluation at the corner singularity")
    theta = _remap_angle(np.arctan2(y, x))
    am1, ap1, A, B = _g_parameters(alpha, omega)
    g = (A * (np.cos(am1 * theta) - np.cos(ap1 * theta))
         - (np.sin(am1 * theta) / am1 - np.sin(ap1 * theta) / ap1) * B)
    return (1.0 - x**2) ** 2 * (1.0 - y**2) ** 2 * r ** (1.0 + alpha) * g


def _singular_jet(pts, alpha, omega, cutoff=True):
    pts = np.atleast_2d(pts)
    if np.any(np.hypot(pts[:, 0], pts[:, 1]) == 0.0):
        raise ValueError("evaluation at the corner singularity")
    X, Y = jet_variables(pts[:, 0], pts[:, 1])
    rsq = X * X + Y * Y
    theta = jet_atan2(Y, X)
    theta.c[:, 0, 0] = _remap_angle(theta.c[:, 0, 0])
    am1, ap1, A, B = _g_parameters(alpha, omega)
    # the four trigonometric series share the powers of the angle deviation
    pw = theta.hat_powers()
    g = ((theta * am1).cos(powers=_scaled_powers(pw, am1))
         - (theta * ap1).cos(powers=_scaled_powers(pw, ap1))) * A \
        - ((theta * am1).sin(powers=_scaled_powers(pw, am1)) * (1.0 / am1)
           - (theta * ap1).sin(powers=_scaled_powers(pw, ap1)) * (1.0 / ap1)) * B
    u = rsq.power(0.5 * (1.0 + alpha)) * g
    if cutoff:
        one = Jet4.constant(np.ones(len(pts)))
        u = (one - X * X).power(2) * (one - Y * Y).power(2) * u
    return u


def _scaled_powers(powers, k):
    """Hat powers of (k * jet) from those of the jet itself."""
    return tuple(p * k ** (m + 1) for m, p in enumerate(powers))


def jet_bilaplacian(jet):
    """u_xxxx + 2 u_xxyy + u_yyyy read from a degree-4 jet."""
    p = jet.partials()
    return p[:, 4, 0] + 2.0 * p[:, 2, 2] + p[:, 0, 4]


def singular_u_and_f(pts, alpha=ALPHA, omega=OMEGA_ANGLE):
    """Values (u, f = bilaplacian of u) of the corner benchmark, pointwise jets."""
    u = singular_value(pts, alpha, omega)
    f = jet_bilaplacian(_singular_jet(pts, alpha, omega, cutoff=True))
    return u, f


# --------------------------------------------------------------------------
# goal weights with exact region integration
# --------------------------------------------------------------------------

class GoalWeight:
    """Characteristic-function goal density ``scale * chi_w``.

    The default scale 1 matches the stored reference values; the mean-value
    convention is available through :meth:`normalized`.
    """

    measure: float
    scale: float

    def normalized(self):
        return replace(self, scale=1.0 / self.measure)

    def density(self, pts):
        pts = np.atleast_2d(pts)
        return self.scale * self.chi(pts)

    def integrate(self, coords, fn, degree=6):
        """Integral of density * fn over one triangle; fn maps (n,2) -> (n, ...)."""
        coords = np.asarray(coords, dtype=float)
        side = self.classify(coords)
        if side < 0:
            probe = np.asarray(fn(coords.mean(axis=0, keepdims=True)))
            return np.zeros(probe.shape[1:])
        if side > 0:
            rule = triangle_rule(degree)
            pts = rule.bary @ coords
            d1, d2 = coords[1] - coords[0], coords[2] - coords[0]
            w = rule.weights * abs(d1[0] * d2[1] - d1[1] * d2[0])
            return self.scale * np.einsum("n,n...->...", w, np.asarray(fn(pts)))
        return self.scale * self._clipped_integral(coords, fn, degree)

    def element_basis_integrals(self, mesh, space, degree=6):
        """Batched per-element integrals of density * P2 basis, (nt, 6).

        Fully inside elements use a plain rule, fully outside ones are zero;
        only elements straddling the region boundary take the clipped path.
        """
        from .fespace import p2_shape

        cls = self.classify_batch(mesh)
        out = np.zeros((mesh.num_triangles, 6))
        inside = np.flatnonzero(cls == 1)
        if len(inside):
            rule = triangle_rule(degree)
            phi_int = rule.weights @ p2_shape(rule.bary)  # (6,)
            out[inside] = self.scale * (2.0 * mesh.areas[inside])[:, None] * phi_int
        for t in np.flatnonzero(cls == 0):
            coords = mesh.tri_coords(t)
            Binv = np.linalg.inv(np.stack([coords[1] - coords[0], coords[2] - coords[0]], axis=1))

            def basis(pts, origin=coords[0], Binv=Binv):
                lam12 = (np.atleast_2d(pts) - origin) @ Binv.T
                bary = np.column_stack([1.0 - lam12.sum(axis=1), lam12])
                return p2_shape(bary)

            out[t] = self.integrate(coords, basis, degree=degree)
        return out


@dataclass(frozen=True)
class StripWeight(GoalWeight):
    """Diagonal strip lo <= x + y <= hi; clipped exactly by half-plane cuts."""

    lo: float = 0.75
    hi: float = 1.25
    measure: float = 7.0 / 16.0
    scale: float = 1.0

    def chi(self, pts):
        s = pts[:, 0] + pts[:, 1]
        return ((s >= self.lo) & (s <= self.hi)).astype(float)

    def classify(self, coords):
        s = coords[:, 0] + coords[:, 1]
        if np.all(s >= self.lo) and np.all(s <= self.hi):
            return 1
        if np.all(s <= self.lo) or np.all(s >= self.hi):
            return -1
        return 0

    def classify_batch(self, mesh):
        s = mesh.vertices[mesh.triangles].sum(axis=2)  # (nt, 3)
        inside = (s >= self.lo).all(axis=1) & (s <= self.hi).all(axis=1)
        outside = (s <= self.lo).all(axis=1) | (s >= self.hi).all(axis=1)
        return np.where(inside, 1, np.where(outside, -1, 0))

    def _clipped_integral(self, coords, fn, degree):
        poly = list(coords)
        for nrm, off in (((1.0, 1.0), self.lo), ((-1.0, -1.0), -self.hi)):
            poly = _clip_halfplane(poly, np.asarray(nrm), off)
            if len(poly) < 3:
                probe = np.asarray(fn(coords.mean(axis=0, keepdims=True)))
                return np.zeros(probe.shape[1:])
        rule = triangle_rule(degree)
        total = None
        for k in range(1, len(poly) - 1):
            tri = np.array([poly[0], poly[k], poly[k + 1]])
            pts = rule.bary @ tri
            d1, d2 = tri[1] - tri[0], tri[2] - tri[0]
            w = rule.weights * abs(d1[0] * d2[1] - d1[1] * d2[0])
            part = np.einsum("n,n...->...", w, np.asarray(fn(pts)))
            total = part if total is None else total + part
        return total


def _clip_halfplane(poly, nrm, off):
    """Sutherland-Hodgman clip of a convex polygon against nrm . x >= off."""
    out = []
    m = len(poly)
    for i in range(m):
        p, q = poly[i], poly[(i + 1) % m]
        dp, dq = nrm @ p - off, nrm @ q - off
        if dp >= 0.0:
            out.append(p)
            if dq < 0.0:
                out.append(p + (q - p) * (dp / (dp - dq)))
        elif dq >= 0.0:
            out.append(p + (q - p) * (dp / (dp - dq)))
    return out


@dataclass(frozen=True)
class DiskWeight(GoalWeight):
    """Disk of given radius centered at the origin (intersected with the mesh)."""

    radius: float = 0.25
    measure: float = 0.75 * math.pi * 0.25**2
    scale: float = 1.0

    def chi(self, pts):
        return (np.hypot(pts[:, 0], pts[:, 1]) <= self.radius).astype(float)

    def classify(self, coords):
        r = np.hypot(coords[:, 0], coords[:, 1])
        if np.all(r <= self.radius):
            return 1
        if _dist_origin_triangle(coords) >= self.radius:
            return -1
        return 0

    def classify_batch(self, mesh):
        coords = mesh.vertices[mesh.triangles]
        r = np.hypot(coords[..., 0], coords[..., 1])
        inside = (r <= self.radius).all(axis=1)
        outside = _dist_origin_triangles(coords) >= self.radius
        return np.where(inside, 1, np.where(outside, -1, 0))

    def _clipped_integral(self, coords, fn, degree):
        total = None
        for k in range(3):
            part = _disk_sector_integral(coords[k], coords[(k + 1) % 3],
                                         self.radius, fn, degree)
            if part is None:
                continue
            total = part if total is None else total + part
        if total is None:
            probe = np.asarray(fn(coords.mean(axis=0, keepdims=True)))
            return np.zeros(probe.shape[1:])
        return total


def _dist_origin_triangle(coords):
    """Exact distance from the origin to a (closed) triangle."""
    return float(_dist_origin_triangles(np.asarray(coords, dtype=float)[None])[0])


def _dist_origin_triangles(coords):
    """Exact origin-to-triangle distances for an (n, 3, 2) batch."""
    d1 = coords[:, 1] - coords[:, 0]
    d2 = coords[:, 2] - coords[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    l1 = (-coords[:, 0, 0] * d2[:, 1] + coords[:, 0, 1] * d2[:, 0]) / det
    l2 = (coords[:, 0, 0] * d1[:, 1] - coords[:, 0, 1] * d1[:, 0]) / det
    inside = (l1 >= 0) & (l2 >= 0) & (l1 + l2 <= 1)
    best = np.full(len(coords), np.inf)
    for k in range(3):
        p, q = coords[:, k], coords[:, (k + 1) % 3]
        d = q - p
        t = np.clip(-np.einsum("nd,nd->n", p, d) / np.einsum("nd,nd->n", d, d), 0.0, 1.0)
        best = np.minimum(best, np.linalg.norm(p + t[:, None] * d, axis=1))
    return np.where(inside, 0.0, best)


def _wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return math.atan2(math.sin(a), math.cos(a))


def _disk_sector_integral(p, q, radius, fn, degree, n_theta=16, max_panel=0.4):
    """Signed integral of chi_{r<=R} fn over the origin-apex wedge of segment pq.

    The wedge is integrated in polar coordinates; the angular interval is
    split exactly where the segment's line crosses the circle, so every panel
    has a smooth integrand.  Returns ``None`` for degenerate wedges.
    """
    cr = p[0] * q[1] - p[1] * q[0]
    dt = math.atan2(cr, float(p @ q))
    if abs(dt) < 1e-14:
        return None
    theta0 = math.atan2(p[1], p[0])
    d = q - p
    L = math.hypot(d[0], d[1])
    m = np.array([d[1], -d[0]]) / L
    c = float(m @ p)
    if c < 0:
        m, c = -m, -c
    if c < 1e-14:
        return None  # segment line passes through the apex
    phi = math.atan2(m[1], m[0])

    cuts = {0.0, 1.0}
    if c < radius:
        da = math.acos(c / radius)
        for theta_star in (phi - da, phi + da):
            t = _wrap_angle(theta_star - theta0) / dt
            if 1e-12 < t < 1.0 - 1e-12:
                cuts.add(t)
    cuts = sorted(cuts)

    xg, wg = np.polynomial.legendre.leggauss(n_theta)
    nr = degree // 2 + 2
    xr, wr = np.polynomial.legendre.leggauss(nr)
    sr = 0.5 * (xr + 1.0)
    wr = 0.5 * wr

    total = None
    for t0, t1 in zip(cuts[:-1], cuts[1:]):
        span = abs(dt) * (t1 - t0)
        npan = max(1, math.ceil(span / max_panel))
        for pan in range(npan):
            a0 = t0 + (t1 - t0) * pan / npan
            a1 = t0 + (t1 - t0) * (pan + 1) / npan
            theta = theta0 + dt * (0.5 * (a0 + a1) + 0.5 * (a1 - a0) * xg)
            wth = 0.5 * abs(dt) * (a1 - a0) * wg
            rho = c / np.cos(theta - phi)
            cap = np.minimum(rho, radius)
            # tensor points: (n_theta, nr)
            r = cap[:, None] * sr[None, :]
            pts = np.stack([r * np.cos(theta)[:, None], r * np.sin(theta)[:, None]], axis=-1)
            w2 = wth[:, None] * wr[None, :] * cap[:, None] ** 2 * sr[None, :]
            vals = np.asarray(fn(pts.reshape(-1, 2)))
            part = np.einsum("n,n...->...", w2.ravel(), vals)
            total = part if total is None else total + part
    return math.copysign(1.0, dt) * total


# --------------------------------------------------------------------------
# benchmark problems
# --------------------------------------------------------------------------

@dataclass
class ExactSolution:
    value: callable
    grad: callable = None
    hess: callable = None


@dataclass
class Problem:
    name: str
    initial_mesh: object
    load: QuadratureLoad
    weight: GoalWeight
    q_ref: float
    exact: ExactSolution = None
    load_degree: int = 12


def unit_square_mesh():
    return build_mesh([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
                      [(0, 1, 2), (0, 2, 3)])


def unit_square_grid(n):
    """n-by-n grid of cells, each split by the (lower-left, upper-right) diagonal."""
    xs = np.linspace(0.0, 1.0, n + 1)
    verts = np.array([(x, y) for y in xs for x in xs])
    tris = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return build_mesh(verts, tris)


def lshape_mesh():
    """Fan of six triangles around the re-entrant corner of (-1,1)^2 minus a quadrant."""
    vertices = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0),
                (-1.0, 1.0), (-1.0, 0.0), (-1.0, -1.0), (0.0, -1.0)]
    triangles = [(0, 1, 2), (0, 2, 3), (0, 3, 4), (0, 4, 5), (0, 5, 6), (0, 6, 7)]
    return build_mesh(vertices, triangles)


def get_problem(problem_id):
    if problem_id == "example_1":
        def subdiv(coords):
            c = np.asarray(coords, dtype=float)
            single = c.ndim == 2
            c = c.reshape(-1, 3, 2)
            d = np.max([np.linalg.norm(c[:, 1] - c[:, 0], axis=1),
                        np.linalg.norm(c[:, 2] - c[:, 1], axis=1),
                        np.linalg.norm(c[:, 0] - c[:, 2], axis=1)], axis=0)
            lv = (d > 0.125).astype(int)
            return int(lv[0]) if single else lv

        # the sharply peaked solution needs an initial mesh that resolves it;
        # a 10x10 grid reproduces the reference goal accuracy after five
        # uniform refinements
        return Problem(
            name="example_1",
            initial_mesh=unit_square_grid(10),
            load=QuadratureLoad(_peak_load, degree=12, subdivisions=subdiv),
            weight=StripWeight(),
            q_ref=reference_goal("example_1"),
            exact=ExactSolution(value=_peak_value, grad=_peak_grad, hess=_peak_hess),
        )
    if problem_id == "example_2":
        def f(pts):
            return jet_bilaplacian(_singular_jet(pts, ALPHA, OMEGA_ANGLE))

        def subdiv(coords):
            c = np.asarray(coords, dtype=float)
            single = c.ndim == 2
            c = c.reshape(-1, 3, 2)
            touches = (np.hypot(c[..., 0], c[..., 1]) < 1e-12).any(axis=1)
            lv = touches.astype(int)
            return int(lv[0]) if single else lv

        return Problem(
            name="example_2",
            initial_mesh=lshape_mesh(),
            load=QuadratureLoad(f, degree=12, subdivisions=subdiv),
            weight=DiskWeight(),
            q_ref=reference_goal("example_2"),
            exact=ExactSolution(value=singular_value),
        )
    raise ValueError(f"unknown problem id {problem_id!r}")
