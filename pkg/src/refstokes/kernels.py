"""Closed-form Stokes kernels.

Free-space fundamental solution (Stokeslet) with the standard positive
normalization,

    O_ij(x) = (1/8pi) (delta_ij/|x| + x_i x_j/|x|^3),
    q_j(x)  = (1/4pi) x_j/|x|^3,

so that -lap O_ij + d_i q_j = 0 away from the origin. With this sign the
stresslet far field of a unit sphere driven by a strain A is the physical
disturbance -(5/2) a^3 (x.Ax) x/|x|^5 and the strain-to-stresslet map of the
sphere is +(20 pi/3) a^3 I.

All strain/stresslet coefficients are 5-vectors in the `sym3` basis. The
"moment" of a particle is its mobility applied to the ambient strain; it has
units of length^3 because particle mobilities carry the a^3 scaling.

Functions broadcast over leading axes of the evaluation points.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate

from .errors import KernelDomainError
from .sym3 import BASIS, apply_mobility, embed, project_sym_tracefree

__all__ = [
    "oseen",
    "oseen_gradient",
    "oseen_pressure",
    "stresslet_field",
    "stresslet_strain",
    "stresslet_field_from_moment",
    "stresslet_strain_from_moment",
    "sphere_disturbance",
    "sphere_pressure",
    "sphere_velocity_gradient",
    "sphere_traction",
    "sphere_remainder",
    "sphere_mobility",
    "mobility_from_boundary_integral",
    "mean_value_reconstruct",
]

_C8 = 1.0 / (8.0 * np.pi)
_C4 = 1.0 / (4.0 * np.pi)


def _radii(x, minimum=0.0, what="kernel"):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise ValueError(f"expected trailing axis of length 3, got shape {x.shape}")
    r2 = np.einsum("...i,...i->...", x, x)
    if np.any(r2 <= minimum * minimum):
        raise KernelDomainError(
            f"{what} evaluated at |x| <= {minimum} (minimum distance violated)")
    return x, np.sqrt(r2)


def oseen(x):
    """Oseen tensor O(x), shape (...,3,3). Velocity response to a point force."""
    x, r = _radii(x, 0.0, "oseen")
    I = np.eye(3)
    return _C8 * (I / r[..., None, None]
                  + x[..., :, None] * x[..., None, :] / r[..., None, None] ** 3)


def oseen_pressure(x):
    """Pressure vector q(x) = x/(4 pi |x|^3) paired with the Oseen tensor."""
    x, r = _radii(x, 0.0, "oseen_pressure")
    return _C4 * x / r[..., None] ** 3


def oseen_gradient(x):
    """Gradient d_k O_ij(x), shape (...,3,3,3) indexed [i,j,k]."""
    x, r = _radii(x, 0.0, "oseen_gradient")
    I = np.eye(3)
    r3 = r[..., None, None, None] ** 3
    r5 = r[..., None, None, None] ** 5
    xi = x[..., :, None, None]
    xj = x[..., None, :, None]
    xk = x[..., None, None, :]
    return _C8 * ((-I[:, :, None] * xk + I[:, None, :] * xj + I[None, :, :] * xi) / r3
                  - 3.0 * xi * xj * xk / r5)


def stresslet_field_from_moment(moment, x):
    """Velocity of a point stresslet with coefficient `moment` (5-vector).

    For symmetric trace-free M = embed(moment) the contraction of M with the
    Oseen gradient collapses to -(3/8pi) (x.Mx) x / |x|^5.
    `moment` broadcasts against the leading axes of x.
    """
    x, r = _radii(x, 0.0, "stresslet_field")
    M = embed(moment)
    s = np.einsum("...i,...ij,...j->...", x, M, x)
    return -(3.0 * _C8) * (s / r ** 5)[..., None] * x


def stresslet_strain_from_moment(moment, x):
    """Symmetric trace-free gradient of the stresslet velocity, as coefficients.

    Closed form of P_sym(grad K)[moment](x); homogeneous of degree -3.
    """
    x, r = _radii(x, 0.0, "stresslet_strain")
    M = embed(moment)
    b = np.einsum("...ij,...j->...i", M, x)
    s = np.einsum("...i,...i->...", x, b)
    r5 = r ** 5
    r7 = r5 * r * r
    # <E_a, D(K)> = -(3/8pi) [ 2 <E_a, x (x) b>/r^5 - 5 s <E_a, x (x) x>/r^7 ];
    # the delta term drops because the basis is trace-free.
    t1 = np.einsum("aij,...i,...j->...a", BASIS, x, b)
    t2 = np.einsum("aij,...i,...j->...a", BASIS, x, x)
    return -(3.0 * _C8) * (2.0 * t1 / r5[..., None] - 5.0 * (s / r7)[..., None] * t2)


def stresslet_field(mobility, strain, x):
    """Far-field stresslet velocity of a particle with the given mobility."""
    return stresslet_field_from_moment(apply_mobility(mobility, strain), x)


def stresslet_strain(mobility, strain, x):
    """Strain coefficients induced at x by a particle with the given mobility."""
    return stresslet_strain_from_moment(apply_mobility(mobility, strain), x)


def _sphere_terms(strain, a, x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    A = embed(np.asarray(strain, dtype=float))
    r2 = np.einsum("...i,...i->...", x, x)
    b = np.einsum("ij,...j->...i", A, x)
    s = np.einsum("...i,...i->...", x, b)
    return x, A, r2, b, s


def sphere_disturbance(strain, a, x):
    """Exterior disturbance velocity of a rigid sphere held in a strain flow.

    u(x) = -(5/2) a^3 (x.Ax) x/|x|^5 - a^5 [Ax/|x|^5 - (5/2)(x.Ax) x/|x|^7].
    On |x| = a this equals -Ax (the two quintic terms cancel the strain).
    Force- and torque-free; defined for |x| >= a.
    """
    xb, A, r2, b, s = _sphere_terms(strain, a, x)
    if np.any(r2 < a * a * (1.0 - 1e-12)):
        raise KernelDomainError("sphere_disturbance evaluated inside the sphere")
    r = np.sqrt(r2)
    r5 = r ** 5
    r7 = r5 * r2
    u = (-2.5 * a ** 3 * (s / r5))[..., None] * xb \
        - a ** 5 * (b / r5[..., None] - 2.5 * (s / r7)[..., None] * xb)
    return u.reshape(np.shape(x))


def sphere_pressure(strain, a, x):
    """Pressure of the sphere disturbance solution: p = -5 a^3 (x.Ax)/|x|^5."""
    xb, A, r2, b, s = _sphere_terms(strain, a, x)
    if np.any(r2 < a * a * (1.0 - 1e-12)):
        raise KernelDomainError("sphere_pressure evaluated inside the sphere")
    return (-5.0 * a ** 3 * s / np.sqrt(r2) ** 5).reshape(np.shape(x)[:-1])


def sphere_velocity_gradient(strain, a, x):
    """Analytic gradient du_i/dx_j of `sphere_disturbance`, shape (...,3,3)."""
    xb, A, r2, b, s = _sphere_terms(strain, a, x)
    if np.any(r2 < a * a * (1.0 - 1e-12)):
        raise KernelDomainError("sphere_velocity_gradient evaluated inside the sphere")
    r = np.sqrt(r2)
    r5 = (r ** 5)[..., None, None]
    r7 = (r ** 7)[..., None, None]
    r9 = (r ** 9)[..., None, None]
    I = np.eye(3)
    xi_bj = xb[..., :, None] * b[..., None, :]
    bi_xj = b[..., :, None] * xb[..., None, :]
    xi_xj = xb[..., :, None] * xb[..., None, :]
    sI = s[..., None, None] * I
    g = -2.5 * a ** 3 * ((2.0 * xi_bj + sI) / r5 - 5.0 * s[..., None, None] * xi_xj / r7)
    g += -a ** 5 * (A / r5 - 5.0 * bi_xj / r7)
    g += 2.5 * a ** 5 * ((2.0 * xi_bj + sI) / r7 - 7.0 * s[..., None, None] * xi_xj / r9)
    return g.reshape(np.shape(x) + (3,))


def sphere_traction(strain, a, x):
    """Traction Sigma.n of the disturbance solution, n the outward unit normal."""
    x = np.asarray(x, dtype=float)
    grad = sphere_velocity_gradient(strain, a, x)
    p = sphere_pressure(strain, a, x)
    sigma = grad + np.swapaxes(grad, -1, -2) - p[..., None, None] * np.eye(3)
    r = np.sqrt(np.einsum("...i,...i->...", x, x))
    return np.einsum("...ij,...j->...i", sigma, x / r[..., None])


def sphere_remainder(strain, a, x):
    """Sphere far-field remainder: disturbance minus the point stresslet.

    H(x) = -a^5 [Ax/|x|^5 - (5/2)(x.Ax) x/|x|^7]; exactly degree 5 in a,
    decays like |x|^{-3}. Defined for |x| > 4a.
    """
    xb, A, r2, b, s = _sphere_terms(strain, a, x)
    if np.any(r2 <= (4.0 * a) ** 2):
        raise KernelDomainError("sphere_remainder requires |x| > 4a")
    r = np.sqrt(r2)
    r5 = r ** 5
    r7 = r5 * r2
    u = -a ** 5 * (b / r5[..., None] - 2.5 * (s / r7)[..., None] * xb)
    return u.reshape(np.shape(x))


def sphere_mobility(a):
    """Strain-to-stresslet map of a rigid sphere of radius a: (20 pi/3) a^3 I."""
    return (20.0 * np.pi / 3.0) * a ** 3 * np.eye(5)


def _surface_quadrature(a, order):
    """Product Gauss-Legendre (cos theta) x trapezoid (phi) grid on the sphere."""
    nodes, wts = np.polynomial.legendre.leggauss(order)
    nphi = 2 * order
    phi = 2.0 * np.pi * np.arange(nphi) / nphi
    ct = np.repeat(nodes, nphi)
    st = np.sqrt(1.0 - ct ** 2)
    ph = np.tile(phi, order)
    xhat = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1)
    w = np.repeat(wts, nphi) * (2.0 * np.pi / nphi) * a ** 2
    return xhat, w


def mobility_from_boundary_integral(a, quadrature_order=6):
    """Strain-to-stresslet map of a sphere, from its boundary traction moments.

    For each basis strain, evaluates the analytic disturbance solution's
    traction and velocity on a spherical quadrature grid and assembles the
    projected first moment

        P_sym[ integral( -(Sigma n) (x) y + 2 U (x) n ) dsigma ]

    with the normal pointing into the particle. Converges to (20 pi/3) a^3 I;
    the integrand is a low-degree spherical polynomial, so any order >= 2 is
    already exact to rounding.
    """
    if not isinstance(quadrature_order, (int, np.integer)) or quadrature_order < 2:
        raise ValueError("quadrature_order must be an integer >= 2")
    xhat, w = _surface_quadrature(a, quadrature_order)
    y = a * xhat
    M = np.zeros((5, 5))
    for j in range(5):
        e = np.zeros(5)
        e[j] = 1.0
        traction = sphere_traction(e, a, y)          # with outward normal
        u = sphere_disturbance(e, a, y)
        # n points into the particle: -(Sigma n)(x)y + 2U(x)n = (Sigma nhat)(x)y - 2U(x)nhat
        integrand = traction[:, :, None] * y[:, None, :] - 2.0 * u[:, :, None] * xhat[:, None, :]
        M[:, j] = project_sym_tracefree(np.einsum("p,pij->ij", w, integrand))
    return M


def mean_value_reconstruct(ball_avg_u, r, f_radial_avgs):
    """Recover a center value from a ball average and radial source averages.

    For lap u = f, the value at the ball center is

        u(x) = avg_{B(x,r)} u + (1/3) int_0^r (rho^4/r^3 - rho) avg_{B(x,rho)} f drho.

    `f_radial_avgs(rho)` must return the average of f over B(x, rho). The
    radial integral is evaluated by adaptive quadrature to 1e-10 absolute.
    """
    if r <= 0:
        raise ValueError("radius must be positive")

    def integrand(rho):
        v = (rho ** 4 / r ** 3 - rho) * f_radial_avgs(rho)
        if not np.isfinite(v):
            raise ValueError(f"non-finite integrand at rho={rho}")
        return v

    correction, _ = integrate.quad(integrand, 0.0, r, epsabs=1e-10, limit=200)
    return float(ball_avg_u) + correction / 3.0
