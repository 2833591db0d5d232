"""Closed-form fields of the limiting diffusion.

Every analytic quantity lives here: the complex nodal coordinate, the
principal drift root and its real/imaginary parts (alpha, beta), the
complex velocity field, the gradients of the log-amplitude and phase of
the limiting wave function, the drift itself, the drift jump set in the
y = 0 plane, and the cylindrical Keplerian elliptic coordinates.

All evaluators are vectorised: points are arrays of shape (..., 3) and
results broadcast over the leading axes.  Scalar convenience falls out of
passing a single (3,) point.

Conventions fixed here (and exercised by the test suite):

* the drift root w = sqrt(1 - 4/nu) uses the principal square root
  (branch cut on the negative real axis, Re >= 0), so alpha = Re w >= 0
  and beta = Im w;
* writing the wave function as exp(R + iS), the complex velocity is
  Z = eps^2 * grad(S - i R), hence grad R = -Im Z / eps^2 and
  grad S = Re Z / eps^2;
* the drift is b = Re Z - Im Z = eps^2 * grad(R + S).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .params import (BranchPointWarning, ConvergenceError, PhysParams,
                     SingularPointError)

#: Points closer to the origin than this multiple of the semimajor axis
#: are treated as singular (the drift blows up at |x| = 0).
ORIGIN_TOL = 1e-12

#: Clamp negative radicands above this threshold to zero; anything more
#: negative indicates a genuine formula error, not floating-point dust.
RADICAL_GUARD = -1e-13


def _as_points(pt):
    pt = np.asarray(pt, dtype=float)
    if pt.shape[-1] != 3:
        raise ValueError(f"points must have shape (..., 3), got {pt.shape}")
    return pt


def _radius(pt):
    return np.sqrt(np.sum(pt * pt, axis=-1))


def _check_origin(p: PhysParams, r):
    if np.any(r <= ORIGIN_TOL * p.a):
        raise SingularPointError("field evaluation at the origin")


def nodal_coordinate(p: PhysParams, pt):
    """Complex coordinate locating a point relative to the nodal set.

    Returns (mu/lam^2) * (|x| - x/e - i y sqrt(1-e^2)/e).  The drift jump
    set corresponds to real values in (0, 4); the attracting ellipse is
    the curve traced by 2 - cos(v)(1+e^2)/e - i sin(v)(1-e^2)/e.
    """
    pt = _as_points(pt)
    r = _radius(pt)
    _check_origin(p, r)
    e = p.ecc
    return (p.mu / p.lam ** 2) * (
        r - pt[..., 0] / e - 1j * pt[..., 1] * np.sqrt(1 - e * e) / e)


def drift_root(p: PhysParams, pt, warn_branch=True):
    """Principal square root w = sqrt(1 - 4/nu) of the nodal coordinate.

    alpha = Re w >= 0 and beta = Im w are the two scalars that assemble
    the drift.  Warns when |1 - 4/nu| is within 1e-12 of the branch point.
    """
    nu = nodal_coordinate(p, pt)
    if np.any(nu == 0):
        raise SingularPointError("nodal coordinate vanished (focal ray)")
    arg = 1 - 4 / nu
    if warn_branch and np.any(np.abs(arg) < 1e-12):
        warnings.warn("evaluation at the branch point of the drift root",
                      BranchPointWarning, stacklevel=2)
    return np.sqrt(arg)


def alpha_beta(p: PhysParams, pt):
    """The pair (alpha, beta) from the explicit Cartesian radicals.

    This is the closed-form route; it agrees with the real/imaginary
    parts of :func:`drift_root` to rounding (a property test pins that).
    Raises on the degenerate focal ray where e|x| = x and y = 0.
    """
    pt = _as_points(pt)
    x, y = pt[..., 0], pt[..., 1]
    r = _radius(pt)
    _check_origin(p, r)
    e = p.ecc
    c = 4 * p.lam ** 2 * e / p.mu
    A = e * r - x
    B2 = (1 - e * e) * y * y
    D = A * A + B2
    if np.any(D <= 0):
        raise SingularPointError(
            "degenerate denominator on the focal ray (e|x| = x, y = 0)")
    t1 = 0.5 * np.sqrt(((A - c) ** 2 + B2) / D)
    t2 = 0.5 * ((A - c / 2) ** 2 + B2 - c * c / 4) / D
    rad = t1 + t2
    bad = rad < RADICAL_GUARD
    if np.any(bad):
        raise ArithmeticError(
            f"alpha radicand fell below the guard: min {np.min(rad)}")
    alpha = np.sqrt(np.maximum(rad, 0.0))
    # beta = Im w follows from 2 * Re w * Im w = Im(1 - 4/nu)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.where(alpha > 0,
                        -c / 2 * np.sqrt(1 - e * e) * y / (D * np.where(alpha > 0, alpha, 1.0)),
                        0.0)
    return alpha, beta


def complex_velocity(p: PhysParams, pt):
    """Limiting complex velocity field Z, shape (..., 3) complex.

    Z = (i mu / 2 lam)(1 + w) x/|x|
        + (mu / 2 lam e)(1 - w) (i, -sqrt(1-e^2), 0),
    with w the principal drift root.  Satisfies the energy identity
    Z.Z/2 - mu/|x| = -mu^2/(2 lam^2) everywhere it is defined.
    """
    pt = _as_points(pt)
    r = _radius(pt)
    _check_origin(p, r)
    w = drift_root(p, pt)
    e = p.ecc
    unit = pt / r[..., None]
    fixed = np.array([1j, -np.sqrt(1 - e * e), 0.0])
    out = (1j * p.mu / (2 * p.lam)) * (1 + w)[..., None] * unit \
        + (p.mu / (2 * p.lam * e)) * (1 - w)[..., None] * fixed
    return out


def wave_gradients(p: PhysParams, pt):
    """Gradients of the log-amplitude R and phase S of the limiting state.

    Returns (grad_R, grad_S), each shape (..., 3), for the eps stored in
    ``p``.  Built from (alpha, beta) with the prefactor -mu/(2 e lam eps^2);
    the two vectors are orthogonal and reconstruct the complex velocity
    through Z = eps^2 (grad_S - i grad_R).
    """
    pt = _as_points(pt)
    r = _radius(pt)
    _check_origin(p, r)
    alpha, beta = alpha_beta(p, pt)
    e = p.ecc
    sq = np.sqrt(1 - e * e)
    pre = -p.mu / (2 * e * p.lam * p.eps ** 2)
    unit = pt / r[..., None]
    grad_r = pre * ((1 + alpha)[..., None] * e * unit
                    + np.stack([1 - alpha, beta * sq,
                                np.zeros_like(alpha)], axis=-1))
    grad_s = pre * (beta[..., None] * e * unit
                    + np.stack([-beta, (1 - alpha) * sq,
                                np.zeros_like(alpha)], axis=-1))
    return grad_r, grad_s


def drift(p: PhysParams, pt):
    """Drift b of the limiting diffusion, shape (..., 3).

    Componentwise, with w = alpha + i beta,
        b_x = (mu/2lam) ((alpha+beta-1)/e - (alpha+beta+1) x/|x|)
        b_y = (mu/2lam) ((alpha-beta-1) sqrt(1-e^2)/e - (alpha+beta+1) y/|x|)
        b_z = -(mu/2lam) (alpha+beta+1) z/|x|
    and equals Re Z - Im Z.  On the attracting ellipse the drift is
    tangent with the Kepler speed (mu/lam) sqrt((1+e cos v)/(1-e cos v)).
    """
    pt = _as_points(pt)
    r = _radius(pt)
    _check_origin(p, r)
    alpha, beta = alpha_beta(p, pt)
    e = p.ecc
    sq = np.sqrt(1 - e * e)
    k = p.mu / (2 * p.lam)
    s = (alpha + beta + 1) / r
    bx = k * ((alpha + beta - 1) / e - s * pt[..., 0])
    by = k * ((alpha - beta - 1) * sq / e - s * pt[..., 1])
    bz = -k * s * pt[..., 2]
    return np.stack([bx, by, bz], axis=-1)


def _drift_unchecked(p: PhysParams, x, y, z):
    """Fast componentwise drift for the simulator; no validity checks."""
    e = p.ecc
    sq = np.sqrt(1 - e * e)
    r = np.sqrt(x * x + y * y + z * z)
    nu = (p.mu / p.lam ** 2) * (r - x / e - 1j * y * sq / e)
    w = np.sqrt(1 - 4 / nu)
    alpha, beta = w.real, w.imag
    k = p.mu / (2 * p.lam)
    s = (alpha + beta + 1) / r
    return (k * ((alpha + beta - 1) / e - s * x),
            k * ((alpha - beta - 1) * sq / e - s * y),
            -k * s * z)


@dataclass
class FieldSample:
    """All local field quantities at one point."""

    nu: complex
    alpha: float
    beta: float
    z_vec: np.ndarray   # complex (3,)
    grad_r: np.ndarray  # (3,)
    grad_s: np.ndarray  # (3,)
    drift: np.ndarray   # (3,)

    @classmethod
    def at(cls, p: PhysParams, pt) -> "FieldSample":
        pt = _as_points(pt)
        alpha, beta = alpha_beta(p, pt)
        grad_r, grad_s = wave_gradients(p, pt)
        return cls(nu=complex(nodal_coordinate(p, pt)),
                   alpha=float(alpha), beta=float(beta),
                   z_vec=complex_velocity(p, pt),
                   grad_r=grad_r, grad_s=grad_s,
                   drift=drift(p, pt))

    def as_dict(self) -> dict:
        return {
            "nu": [self.nu.real, self.nu.imag],
            "alpha": self.alpha,
            "beta": self.beta,
            "z": [[zc.real, zc.imag] for zc in np.atleast_1d(self.z_vec)],
            "grad_r": list(map(float, self.grad_r)),
            "grad_s": list(map(float, self.grad_s)),
            "drift": list(map(float, self.drift)),
        }


# ---------------------------------------------------------------------------
# the drift jump set (the y = 0 region where the drift root is imaginary)
# ---------------------------------------------------------------------------

def jump_interval(p: PhysParams, z):
    """x-interval of the drift jump set in the y = 0 plane at height z.

    The set is { (x, 0, z) : left(z) < x < right(z) } with
        left(z)  = e (sqrt(16 a^2 e^2 + z^2 (1-e^2)) - 4a) / (1-e^2)
        right(z) = e |z| / sqrt(1-e^2).
    The interval is nonempty for every z; its width tends to
    4 a e / (1-e^2) as |z| grows.
    """
    z = np.asarray(z, dtype=float)
    e, a = p.ecc, p.a
    left = e * (np.sqrt(16 * a * a * e * e + z * z * (1 - e * e)) - 4 * a) \
        / (1 - e * e)
    right = e * np.abs(z) / np.sqrt(1 - e * e)
    return left, right


def in_jump_set(p: PhysParams, x, z, pad=0.0):
    """Whether (x, 0, z) lies in the (closed, optionally padded) jump set."""
    left, right = jump_interval(p, z)
    return (np.asarray(x) >= left - pad) & (np.asarray(x) <= right + pad)


def near_jump_set(p: PhysParams, pts, tol):
    """Fast conservative proximity test against the jump set.

    True whenever a point is within tol of the set (and possibly for a
    thin shell slightly beyond, since the planar interval is inflated by
    the worst-case boundary slope).  Suited to carving exclusion tubes
    out of large samples without computing exact distances.
    """
    pts = _as_points(pts)
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    pad = 2.0 * tol / np.sqrt(1 - p.ecc ** 2)
    return (np.abs(y) <= tol) & in_jump_set(p, x, z, pad=pad)


def _plane_boundary_distance(p: PhysParams, x, z, n_coarse=4001):
    """Planar distance from (x, z) to the jump-set boundary curves."""
    x = float(x)
    z = float(z)
    span = max(4 * p.a, 2 * abs(z) + 4 * p.a)
    zs = np.linspace(z - span, z + span, n_coarse)
    left, right = jump_interval(p, zs)
    d2 = np.minimum((x - left) ** 2 + (z - zs) ** 2,
                    (x - right) ** 2 + (z - zs) ** 2)
    k = int(np.argmin(d2))
    # golden-section polish on each curve around the coarse minimum
    best = np.sqrt(d2[k])
    for curve in (lambda t: jump_interval(p, t)[0],
                  lambda t: jump_interval(p, t)[1]):
        lo = zs[max(k - 2, 0)]
        hi = zs[min(k + 2, n_coarse - 1)]
        invphi = (np.sqrt(5.0) - 1) / 2
        c = hi - invphi * (hi - lo)
        d = lo + invphi * (hi - lo)
        for _ in range(90):
            fc = (x - curve(c)) ** 2 + (z - c) ** 2
            fd = (x - curve(d)) ** 2 + (z - d) ** 2
            if fc < fd:
                hi = d
            else:
                lo = c
            c = hi - invphi * (hi - lo)
            d = lo + invphi * (hi - lo)
        t = 0.5 * (lo + hi)
        best = min(best, np.hypot(x - curve(t), z - t))
    return best


def jump_distance(p: PhysParams, pt):
    """Euclidean distance from a point to (the closure of) the jump set.

    Zero inside the set.  Used by the simulator's diagnostics and by the
    identity suite to carve exclusion tubes around the discontinuity.
    """
    pt = _as_points(pt)
    if pt.ndim == 1:
        x, y, z = pt
        if in_jump_set(p, x, z):
            return abs(y)
        return float(np.hypot(_plane_boundary_distance(p, x, z), y))
    return jump_distance_many(p, pt)


def jump_distance_many(p: PhysParams, pts, n_mesh=2048):
    """Vectorised jump-set distance via a boundary polyline.

    Accuracy is set by the polyline resolution (plenty for diagnostics;
    use :func:`jump_distance` for scalar high-accuracy queries).
    Points are processed in chunks to bound the distance-matrix memory.
    """
    pts = _as_points(pts)
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    inside = in_jump_set(p, x, z)
    zmax = max(2.0 * float(np.max(np.abs(z), initial=0.0)), 8 * p.a)
    zs = np.linspace(-zmax, zmax, n_mesh)
    left, right = jump_interval(p, zs)
    bx = np.concatenate([left, right])
    bz = np.concatenate([zs, zs])
    xf = x.ravel()
    zf = z.ravel()
    plane2 = np.empty(xf.shape)
    step = max(1, 2 ** 22 // (2 * n_mesh))
    for k in range(0, xf.size, step):
        sl = slice(k, k + step)
        d2 = (xf[sl, None] - bx) ** 2 + (zf[sl, None] - bz) ** 2
        plane2[sl] = np.min(d2, axis=-1)
    plane = np.sqrt(plane2).reshape(x.shape)
    plane = np.where(inside, 0.0, plane)
    return np.sqrt(plane * plane + y * y)


# ---------------------------------------------------------------------------
# cylindrical Keplerian elliptic coordinates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EllipticCoords:
    """Cylindrical Keplerian elliptic coordinates (u, v, z).

    u in (-e, 1] labels a family of nested ellipses with one focus at the
    origin (u = ecc is the attracting ellipse, u = 1 the jump segment,
    u -> -e the ellipse at infinity); v in [0, 2 pi) is the eccentric
    angle on the attracting ellipse; z passes through.
    """

    u: float
    v: float
    z: float = 0.0


def from_elliptic(p: PhysParams, coords):
    """Map (u, v, z) to Cartesian coordinates.

    x = 2 a e (cos v - u)/(e + u),  y = 2 a e sqrt(1-u^2) sin v/(e + u).
    Accepts an :class:`EllipticCoords` or a (u, v, z) triple of scalars or
    arrays.
    """
    if isinstance(coords, EllipticCoords):
        u, v, z = coords.u, coords.v, coords.z
    else:
        u, v, z = coords
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    z = np.asarray(z, dtype=float)
    e, a = p.ecc, p.a
    if np.any(u <= -e) or np.any(u > 1):
        raise SingularPointError(f"u out of range (-e, 1]")
    s = 2 * a * e / (e + u)
    x = s * (np.cos(v) - u)
    y = s * np.sqrt(np.maximum(1 - u * u, 0.0)) * np.sin(v)
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


def _second_focus_x(p: PhysParams, u):
    """x-coordinate of the second focus of the u-ellipse: -4 a e u/(e+u)."""
    return -4 * p.a * p.ecc * u / (p.ecc + u)


def _u_bisect(p, x, y, tol=1e-13, max_iter=200):
    """Solve the defocal identity |x| + |x - F(u)| = 2 s(u) for u.

    s(u) = 2 a e/(e+u) is the semimajor axis of the u-ellipse and F(u)
    its second focus.  G(u) = r + r'(u) - 2 s(u) increases from -inf at
    u -> -e to >= 0 at u = 1, so bisection is safe.
    """
    e, a = p.ecc, p.a
    r = np.hypot(x, y)
    lo = np.full_like(r, -e * (1 - 1e-14), dtype=float)
    hi = np.ones_like(r)

    def G(u):
        s = 2 * a * e / (e + u)
        return r + np.hypot(x + 2 * s * u, y) - 2 * s

    # expected accuracy ~ (1 + e) 2^-n_iter; 60 sweeps clear 1e-13 easily
    n_iter = max(60, int(np.ceil(np.log2((1 + e) / tol))))
    if n_iter > max_iter:
        n_iter = max_iter
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        neg = G(mid) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    u = 0.5 * (lo + hi)
    if np.any(hi - lo > 10 * tol * (1 + e)):
        raise ConvergenceError("coordinate inversion bisection stalled")
    return u


def to_elliptic(p: PhysParams, pt, tol=1e-13):
    """Invert the coordinate map at a Cartesian point.

    Solves for u by safeguarded bisection on the defocal identity, then
    recovers v from the two coordinate equations.  Round-trips with
    :func:`from_elliptic` to 1e-10 away from the degeneracies
    ((x, y) = 0 and the u = 1 segment).
    """
    pt = _as_points(pt)
    scalar = pt.ndim == 1
    x, y, z = pt[..., 0], pt[..., 1], pt[..., 2]
    if np.any(np.hypot(x, y) <= 0):
        raise SingularPointError("coordinate inversion at the planar origin")
    u = _u_bisect(p, x, y, tol=tol)
    e, a = p.ecc, p.a
    s = 2 * a * e / (e + u)
    cv = x / s + u
    one_m_u2 = np.maximum(1 - u * u, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        sv = np.where(one_m_u2 > 1e-28, y / (s * np.sqrt(np.where(
            one_m_u2 > 1e-28, one_m_u2, 1.0))), 0.0)
    v = np.mod(np.arctan2(sv, cv), 2 * np.pi)
    if scalar:
        return EllipticCoords(float(u), float(v), float(z))
    return u, v, np.asarray(z, dtype=float)


def ellipse_point(p: PhysParams, v):
    """Point of the attracting ellipse at eccentric angle v (z = 0).

    x(v) = (a (cos v - e), a sqrt(1-e^2) sin v, 0); the radius is
    a (1 - e cos v).
    """
    v = np.asarray(v, dtype=float)
    e, a = p.ecc, p.a
    return np.stack(np.broadcast_arrays(
        a * (np.cos(v) - e), a * np.sqrt(1 - e * e) * np.sin(v),
        np.zeros_like(v)), axis=-1)


def ellipse_tangent(p: PhysParams, v):
    """Unit tangent of the attracting ellipse at eccentric angle v."""
    v = np.asarray(v, dtype=float)
    e, a = p.ecc, p.a
    t = np.stack(np.broadcast_arrays(
        -a * np.sin(v), a * np.sqrt(1 - e * e) * np.cos(v),
        np.zeros_like(v)), axis=-1)
    return t / np.linalg.norm(t, axis=-1, keepdims=True)


def kepler_speed(p: PhysParams, v):
    """Deterministic orbit speed on the ellipse (vis-viva form)."""
    v = np.asarray(v, dtype=float)
    e = p.ecc
    return (p.mu / p.lam) * np.sqrt((1 + e * np.cos(v)) / (1 - e * np.cos(v)))
