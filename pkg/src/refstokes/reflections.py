"""Method of reflections for the strain coefficients of a particle cloud.

Starting from the ambient strain on every particle, each sweep replaces the
per-particle strain level with the strain induced at its center by all other
particles' stresslets,

    level'_l = sum_{m != l} D(K)[ mobility_m . level_m ](x_l - x_m),

and accumulates the levels into running totals. The accumulated totals are
the Neumann series of the linear fixed-point problem (I - T) total = ambient,
which `dense_fixed_point` solves directly as an independent oracle.

All pair sums are evaluated in chunks with numpy's pairwise reduction, so
repeated runs on identical input are bit-identical.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .cloud import ParticleCloud, validate
from .errors import GateError, KernelDomainError
from .kernels import sphere_mobility
from .sym3 import embed

__all__ = [
    "EPS0_GATE_DEFAULT",
    "ReflectionState",
    "StressletSolution",
    "init_reflections",
    "reflect_step",
    "run_reflections",
    "dense_fixed_point",
    "evaluate_velocity",
    "contraction_diagnostic",
    "solution_to_json",
    "solution_from_json",
    "save_solution",
    "load_solution",
    "convergence_table_to_csv",
    "velocity_to_csv",
]

EPS0_GATE_DEFAULT = 1e-2   # admissible a^3/d^3 for the iterative solver
_C38 = 3.0 / (8.0 * np.pi)
_IS2 = 1.0 / np.sqrt(2.0)
_IS6 = 1.0 / np.sqrt(6.0)


def _outer_coeffs(u, v):
    """Coefficients <E_a, u (x) v> in the fixed basis, written out component
    by component (the basis matrices have at most three nonzero entries, so
    this is much cheaper than the generic contraction on large pair sets).
    Must stay in sync with sym3.BASIS; pinned by a test."""
    ux, uy, uz = u[..., 0], u[..., 1], u[..., 2]
    vx, vy, vz = v[..., 0], v[..., 1], v[..., 2]
    return np.stack([
        (ux * vx - uy * vy) * _IS2,
        (ux * vx + uy * vy - 2.0 * uz * vz) * _IS6,
        (ux * vy + uy * vx) * _IS2,
        (ux * vz + uz * vx) * _IS2,
        (uy * vz + uz * vy) * _IS2,
    ], axis=-1)


@dataclass
class ReflectionState:
    cloud: ParticleCloud
    A_current: np.ndarray          # (N, 5) current strain level
    A_total: np.ndarray            # (N, 5) accumulated levels
    n: int                         # number of sweeps performed
    norm_history: list = field(default_factory=list)  # l2 norm of each level


@dataclass
class StressletSolution:
    cloud: ParticleCloud
    A_hat: np.ndarray              # (N, 5) converged per-particle strains
    iterations: int
    converged: bool
    residual: float                # l2 norm of the last (smallest) level
    norm_history: list


def _level_norm(levels, q=2.0):
    mags = np.sqrt(np.einsum("la,la->l", levels, levels))
    if q == np.inf:
        return float(np.max(mags, initial=0.0))
    return float(np.sum(mags ** q) ** (1.0 / q)) if len(mags) else 0.0


def _chunk_size(n):
    return max(1, int(2_000_000 // max(n, 1)))


def _pair_strain_sum(centers, moments):
    """For each l: sum over m != l of D(K)[moments_m](x_l - x_m), shape (N,5)."""
    n = len(centers)
    out = np.zeros((n, 5))
    if n <= 1:
        return out
    Mmat = embed(moments)                         # (N,3,3)
    chunk = _chunk_size(n)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        z = centers[start:stop, None, :] - centers[None, :, :]   # (B,N,3)
        r2 = np.einsum("bmi,bmi->bm", z, z)
        r2[np.arange(start, stop) - start, np.arange(start, stop)] = np.inf
        b = np.einsum("mij,bmj->bmi", Mmat, z)
        s = np.einsum("bmi,bmi->bm", z, b)
        r5 = r2 * r2 * np.sqrt(r2)
        r7 = r5 * r2
        t1 = _outer_coeffs(z, b)
        t2 = _outer_coeffs(z, z)
        contrib = -_C38 * (2.0 * t1 / r5[..., None] - 5.0 * (s / r7)[..., None] * t2)
        out[start:stop] = np.sum(contrib, axis=1)
    return out


def init_reflections(cloud, A):
    """Initial state: every particle carries the ambient strain."""
    A = np.asarray(A, dtype=float).reshape(5)
    cur = np.tile(A, (cloud.n, 1))
    return ReflectionState(cloud=cloud, A_current=cur.copy(), A_total=cur.copy(),
                           n=0, norm_history=[_level_norm(cur)])


def reflect_step(state):
    """One sweep: new level from the previous one, totals accumulated."""
    moments = np.einsum("lab,lb->la", state.cloud.mobilities, state.A_current)
    new = _pair_strain_sum(state.cloud.centers, moments)
    return ReflectionState(
        cloud=state.cloud,
        A_current=new,
        A_total=state.A_total + new,
        n=state.n + 1,
        norm_history=state.norm_history + [_level_norm(new)],
    )


def _check_gate(cloud, gate, force):
    stats = validate(cloud)
    if not force and stats.phi_local > gate:
        raise GateError(
            f"a^3/d^3 = {stats.phi_local:.3g} above the convergence gate {gate:.3g}; "
            "pass force=True to override")
    return stats


def run_reflections(cloud, A, tol=1e-10, max_iter=100, fixed_n=None,
                    gate=EPS0_GATE_DEFAULT, force=False):
    """Iterate reflection sweeps and sum the levels.

    In tolerance mode the iteration stops once the l2 norm of the current
    level drops below tol * |A|; failure to converge within max_iter returns
    a non-converged result (no exception), history attached. With fixed_n
    the totals include exactly the strain levels 0..fixed_n-1 (the velocity
    approximation of order fixed_n).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    _check_gate(cloud, gate, force)
    A = np.asarray(A, dtype=float).reshape(5)
    ref = np.linalg.norm(A)
    state = init_reflections(cloud, A)
    if fixed_n is not None:
        if fixed_n < 1:
            raise ValueError("fixed_n must be >= 1")
        for _ in range(fixed_n - 1):
            state = reflect_step(state)
        converged = state.norm_history[-1] <= tol * ref if state.n > 0 else False
        return StressletSolution(cloud=cloud, A_hat=state.A_total,
                                 iterations=state.n, converged=converged,
                                 residual=state.norm_history[-1],
                                 norm_history=list(state.norm_history))
    for _ in range(max_iter):
        state = reflect_step(state)
        if state.norm_history[-1] <= tol * ref:
            return StressletSolution(cloud=cloud, A_hat=state.A_total,
                                     iterations=state.n, converged=True,
                                     residual=state.norm_history[-1],
                                     norm_history=list(state.norm_history))
    return StressletSolution(cloud=cloud, A_hat=state.A_total,
                             iterations=state.n, converged=False,
                             residual=state.norm_history[-1],
                             norm_history=list(state.norm_history))


def pair_interaction_matrix(cloud):
    """Dense (5N, 5N) matrix of one reflection sweep (zero diagonal blocks)."""
    n = cloud.n
    centers = cloud.centers
    G = np.zeros((n, n, 5, 5))
    for beta in range(5):
        e = np.zeros(5)
        e[beta] = 1.0
        Mmat = embed(e)
        z = centers[:, None, :] - centers[None, :, :]
        r2 = np.einsum("lmi,lmi->lm", z, z)
        r2[np.arange(n), np.arange(n)] = np.inf
        b = np.einsum("ij,lmj->lmi", Mmat, z)
        s = np.einsum("lmi,lmi->lm", z, b)
        r5 = r2 * r2 * np.sqrt(r2)
        r7 = r5 * r2
        t1 = _outer_coeffs(z, b)
        t2 = _outer_coeffs(z, z)
        G[:, :, :, beta] = -_C38 * (2.0 * t1 / r5[..., None]
                                    - 5.0 * (s / r7)[..., None] * t2)
    T = np.einsum("lmab,mbc->lamc", G, cloud.mobilities)
    return T.reshape(5 * n, 5 * n)


def dense_fixed_point(cloud, A):
    """Direct solve of (I - T) total = ambient; oracle for `run_reflections`.

    T is the dense matrix of one reflection sweep. Guarded to 5N <= 5000
    unknowns. Raises on a singular system (outside the contraction regime).
    """
    n = cloud.n
    if 5 * n > 5000:
        raise ValueError(f"dense solve guarded to 5N <= 5000 (got N = {n})")
    A = np.asarray(A, dtype=float).reshape(5)
    if n == 0:
        return StressletSolution(cloud=cloud, A_hat=np.zeros((0, 5)), iterations=0,
                                 converged=True, residual=0.0, norm_history=[0.0])
    T = pair_interaction_matrix(cloud)
    rhs = np.tile(A, n)
    try:
        x = linalg.solve(np.eye(5 * n) - T, rhs)
    except linalg.LinAlgError as exc:
        raise linalg.LinAlgError(
            f"(I - T) singular; configuration outside the contraction regime: {exc}")
    A_hat = x.reshape(n, 5)
    residual = float(np.linalg.norm((np.eye(5 * n) - T) @ x - rhs))
    return StressletSolution(cloud=cloud, A_hat=A_hat, iterations=0,
                             converged=True, residual=residual,
                             norm_history=[_level_norm(A_hat)])


def _sphere_disturbance_many(strains, a, z):
    """Disturbance of N spheres with per-sphere strains at offsets z (P,N,3)."""
    Amat = embed(strains)                             # (N,3,3)
    r2 = np.einsum("pmi,pmi->pm", z, z)
    b = np.einsum("mij,pmj->pmi", Amat, z)
    s = np.einsum("pmi,pmi->pm", z, b)
    r5 = r2 * r2 * np.sqrt(r2)
    r7 = r5 * r2
    u = (-2.5 * a ** 3 * (s / r5))[..., None] * z \
        - a ** 5 * (b / r5[..., None] - 2.5 * (s / r7)[..., None] * z)
    return np.sum(u, axis=1)


def _stresslet_field_many(moments, z):
    Mmat = embed(moments)
    r2 = np.einsum("pmi,pmi->pm", z, z)
    s = np.einsum("pmi,mij,pmj->pm", z, Mmat, z)
    r5 = r2 * r2 * np.sqrt(r2)
    return np.sum((-_C38 * s / r5)[..., None] * z, axis=1)


def evaluate_velocity(solution, A, points, mode="far_field"):
    """Approximate velocity A x plus per-particle disturbances at the points.

    far_field sums the pure point-stresslet fields of the accumulated
    moments; sphere_full uses the full sphere disturbance solution (all
    particles must carry the closed-form sphere mobility). Points inside a
    particle raise KernelDomainError naming it.
    """
    if mode not in ("far_field", "sphere_full"):
        raise ValueError(f"unknown mode {mode!r}")
    cloud = solution.cloud
    points = np.atleast_2d(np.asarray(points, dtype=float))
    A = np.asarray(A, dtype=float).reshape(5)
    u = points @ embed(A).T
    if cloud.n == 0:
        return u
    if mode == "sphere_full" and not np.allclose(
            cloud.mobilities, sphere_mobility(cloud.a), rtol=1e-10, atol=0.0):
        raise ValueError("sphere_full mode requires all particles spherical")
    chunk = _chunk_size(cloud.n)
    for start in range(0, len(points), chunk):
        stop = min(start + chunk, len(points))
        z = points[start:stop, None, :] - cloud.centers[None, :, :]
        r2 = np.einsum("pmi,pmi->pm", z, z)
        if np.any(r2 < cloud.a ** 2 * (1.0 - 1e-12)):
            p, m = np.unravel_index(int(np.argmin(r2)), r2.shape)
            raise KernelDomainError(
                f"evaluation point {start + p} inside particle {m}")
        if mode == "sphere_full":
            u[start:stop] += _sphere_disturbance_many(solution.A_hat, cloud.a, z)
        else:
            moments = np.einsum("mab,mb->ma", cloud.mobilities, solution.A_hat)
            u[start:stop] += _stresslet_field_many(moments, z)
    return u


def contraction_diagnostic(cloud, A, q=2.0, n_levels=5,
                           gate=EPS0_GATE_DEFAULT, force=False):
    """Per-sweep lq-norm ratios of consecutive strain levels.

    Returns n_levels ratios ||level_{k+1}||_q / ||level_k||_q; a vanishing
    level reports 0. These track the geometric contraction of the sweeps.
    """
    if n_levels < 2:
        raise ValueError("need at least 2 levels for a ratio")
    if q <= 1.0:
        raise ValueError("q must be > 1")
    _check_gate(cloud, gate, force)
    state = init_reflections(cloud, np.asarray(A, dtype=float).reshape(5))
    norms = [_level_norm(state.A_current, q)]
    for _ in range(n_levels):
        state = reflect_step(state)
        norms.append(_level_norm(state.A_current, q))
    return [0.0 if norms[k] == 0.0 else norms[k + 1] / norms[k]
            for k in range(n_levels)]


def solution_to_json(solution):
    return {
        "a_hat": [[float(v) for v in row] for row in solution.A_hat],
        "iterations": int(solution.iterations),
        "converged": bool(solution.converged),
        "residual": float(solution.residual),
        "norm_history": [float(v) for v in solution.norm_history],
    }


def solution_from_json(doc, cloud):
    return StressletSolution(
        cloud=cloud,
        A_hat=np.asarray(doc["a_hat"], dtype=float).reshape(-1, 5),
        iterations=int(doc["iterations"]),
        converged=bool(doc["converged"]),
        residual=float(doc["residual"]),
        norm_history=[float(v) for v in doc["norm_history"]],
    )


def save_solution(solution, path):
    with open(path, "w") as fh:
        json.dump(solution_to_json(solution), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_solution(path, cloud):
    with open(path) as fh:
        return solution_from_json(json.load(fh), cloud)


def convergence_table_to_csv(norm_history, path):
    """CSV of level norms and consecutive ratios, one row per sweep."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "level_norm", "ratio"])
        for k, v in enumerate(norm_history):
            ratio = "" if k == 0 else repr(
                0.0 if norm_history[k - 1] == 0.0 else v / norm_history[k - 1])
            writer.writerow([k, repr(float(v)), ratio])


def velocity_to_csv(points, velocities, path):
    points = np.atleast_2d(points)
    velocities = np.atleast_2d(velocities)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z", "ux", "uy", "uz"])
        for p, v in zip(points, velocities):
            writer.writerow([repr(float(c)) for c in (*p, *v)])
