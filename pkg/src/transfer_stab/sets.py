"""Quadratic matrix sets ``{Z : Z^T A Z + Z^T B + B^T Z + C <= 0}``.

Throughout, ``Z = [A_sys B_sys]^T`` has shape ``(n+m, n)``, so a set over
systems is a ``Qmi`` with ``p = n + m`` and ``q = n``.
"""

from dataclasses import dataclass

import numpy as np

from .data import LinearSystem
from .linalg import as_matrix, as_sym, is_psd, max_eig, min_eig, psd_sqrt, sym_eig, sym_inv, symmetrize


class SingularSetError(ValueError):
    """The quadratic coefficient is singular where a compact set is required."""


@dataclass(frozen=True)
class Qmi:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = as_sym(self.A, "A", tol=1e-9)
        C = as_sym(self.C, "C", tol=1e-9)
        B = as_matrix(self.B, "B")
        if B.shape != (A.shape[0], C.shape[0]):
            raise ValueError(f"B must have shape {(A.shape[0], C.shape[0])}, got {B.shape}")
        for name, M in (("A", A), ("B", B), ("C", C)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def p(self):
        return self.A.shape[0]

    @property
    def q(self):
        return self.C.shape[0]

    def bordered(self):
        """The ``(q+p)``-square matrix ``[[C, B^T], [B, A]]``."""
        return np.block([[self.C, self.B.T], [self.B, self.A]])

    def evaluate(self, Z):
        Z = np.asarray(Z, dtype=float)
        if Z.shape != (self.p, self.q):
            raise ValueError(f"Z must have shape {(self.p, self.q)}, got {Z.shape}")
        ZtB = Z.T @ self.B
        return symmetrize(Z.T @ self.A @ Z + ZtB + ZtB.T + self.C)

    def evaluate_many(self, Zs):
        """Vectorized evaluation over a stack of shape (S, p, q)."""
        Zs = np.asarray(Zs, dtype=float)
        ZtB = np.einsum("spq,pr->sqr", Zs, self.B)
        F = np.einsum("spq,pr,srt->sqt", Zs, self.A, Zs) + ZtB + ZtB.transpose(0, 2, 1) + self.C
        return 0.5 * (F + F.transpose(0, 2, 1))

    def max_eig_many(self, Zs):
        return np.linalg.eigvalsh(self.evaluate_many(Zs))[:, -1]

    def scaled(self, lam):
        if lam <= 0:
            raise ValueError("scale must be positive")
        return Qmi(lam * self.A, lam * self.B, lam * self.C)

    def normalized(self):
        """(unit-norm copy, scale) with ``copy = self.scaled(1/scale)``."""
        s = float(np.linalg.norm(self.bordered(), 2))
        if s == 0.0:
            return self, 1.0
        return self.scaled(1.0 / s), s

    def to_dict(self):
        return {"p": self.p, "q": self.q, "A": self.A.tolist(), "B": self.B.tolist(), "C": self.C.tolist()}

    @classmethod
    def from_dict(cls, d):
        q = cls(d["A"], d["B"], d["C"])
        if (q.p, q.q) != (d.get("p", q.p), d.get("q", q.q)):
            raise ValueError("declared dimensions do not match coefficient arrays")
        return q

    @classmethod
    def from_bordered(cls, M, q):
        M = as_sym(M, "bordered matrix", tol=1e-9)
        return cls(M[q:, q:], M[q:, :q], M[:q, :q])


@dataclass(frozen=True)
class CenteredQmi:
    """``(Z - center)^T Ashape (Z - center) <= Q``."""

    center: np.ndarray
    Q: np.ndarray
    Ashape: np.ndarray
    scale: float = None  # magnitude of the terms Q was computed from

    def Qroot(self, tol=1e-9):
        return psd_sqrt(self.Q, tol, self.scale)

    def to_qmi(self):
        A = self.Ashape
        B = -A @ self.center
        C = self.center.T @ A @ self.center - self.Q
        return Qmi(A, B, symmetrize(C))


def evaluate(q, Z):
    return q.evaluate(Z)


def qmi_from_data(data, bound):
    """Set of all (A, B) consistent with the data under ``D D^T <= bound``."""
    if bound.bound.shape != (data.n, data.n):
        raise ValueError("disturbance bound dimension does not match the state dimension")
    W = data.W0
    X1 = data.X1
    return Qmi(W @ W.T, -W @ X1.T, -bound.bound + X1 @ X1.T)


def contains_z(q, Z, tol=1e-9):
    return is_psd(-q.evaluate(Z), tol)


def contains(q, sys, tol=1e-9):
    return contains_z(q, sys.as_z(), tol)


def is_compact(q, tol=1e-10):
    """``A > 0`` and ``C - B^T A^-1 B <= 0``, both up to ``tol`` (relative)."""
    lam = np.linalg.eigvalsh(q.A)
    scale = max(float(np.max(np.abs(q.bordered()))), 1e-300)
    if lam[0] <= tol * max(lam[-1], 1e-300):
        return False
    Ainv = sym_inv(q.A, tol=0.0)
    return max_eig(q.C - q.B.T @ Ainv @ q.B) <= tol * scale


def ball(center_z, radius):
    """Spectral-norm ball ``|Z - center| <= radius`` as a Qmi."""
    Zc = as_matrix(center_z, "center")
    if radius <= 0:
        raise ValueError("radius must be positive")
    q = Zc.shape[1]
    return Qmi(np.eye(Zc.shape[0]), -Zc, symmetrize(Zc.T @ Zc) - radius**2 * np.eye(q))


def epsilon_ball(center, eps):
    Zc = center.as_z() if isinstance(center, LinearSystem) else center
    return ball(Zc, eps)


def recenter(q, tol=1e-10):
    lam = np.linalg.eigvalsh(q.A)
    if lam[0] <= tol * max(abs(lam[-1]), 1e-300):
        raise SingularSetError(
            f"quadratic coefficient is singular (min eigenvalue {lam[0]:.3g}); set is not compact"
        )
    Ainv = sym_inv(q.A, tol=0.0)
    Zc = -Ainv @ q.B
    BAB = symmetrize(q.B.T @ Ainv @ q.B)
    scale = max(float(np.linalg.norm(BAB, 2)), float(np.linalg.norm(q.C, 2)))
    return CenteredQmi(Zc, _snap(symmetrize(BAB - q.C), scale), q.A, scale)


def _snap(Q, scale, rel=1e-12):
    """Zero the eigenvalues of ``Q`` that are cancellation noise at ``scale``."""
    lam, V = np.linalg.eigh(Q)
    small = np.abs(lam) <= rel * scale
    if not small.any():
        return Q
    lam[small] = 0.0
    return symmetrize((V * lam) @ V.T)


def outer_radius(centered, eps):
    """``|Lambda^-1/2| |Q^1/2| + eps``: covers every point within ``eps`` of the set."""
    _, lam = sym_eig(centered.Ashape)
    return float(lam[0] ** -0.5 * np.linalg.norm(centered.Qroot(), 2) + eps)


def outer_ball(q, eps):
    c = recenter(q)
    return ball(c.center, outer_radius(c, eps))


def lyapunov_qmi(P, K, beta):
    """QMI whose value at ``[A B]^T`` is ``(A+BK) P (A+BK)^T - P + beta I``."""
    P = as_sym(P, "P", tol=1e-9)
    K = as_matrix(K, "K")
    if min_eig(P) <= 0:
        raise ValueError("P must be positive definite")
    if beta <= 0:
        raise ValueError("beta must be positive")
    n = P.shape[0]
    if K.shape[1] != n:
        raise ValueError(f"K must have {n} columns")
    L = np.vstack([np.eye(n), K])
    A = symmetrize(L @ P @ L.T)
    return Qmi(A, np.zeros((L.shape[0], n)), -P + beta * np.eye(n))


def spectral_ball_draws(center, radius, count, rng, boundary_bias=False):
    """``center + radius*u*G/|G|`` with G standard normal, u uniform on [0, 1].

    Covers the interior and boundary of the spectral-norm ball but is not
    volume-uniform. With ``boundary_bias`` u is the max of two uniforms.
    """
    center = np.asarray(center, dtype=float)
    G = rng.standard_normal((count,) + center.shape)
    norms = np.linalg.norm(G, ord=2, axis=(1, 2))
    u = rng.uniform(size=count)
    if boundary_bias:
        u = np.maximum(u, rng.uniform(size=count))
    return center + (radius * u / norms)[:, None, None] * G


def sample_members(centered, count, rng):
    """Points of a compact set: ``center + A^-1/2 S Q^1/2`` with ``|S| <= 1``."""
    U, lam = sym_eig(centered.Ashape)
    Ainv_root = U.T @ (lam[:, None] ** -0.5 * U)
    Qroot = centered.Qroot()
    S = spectral_ball_draws(np.zeros(centered.center.shape), 1.0, count, rng)
    return centered.center + np.einsum("ab,sbc,cd->sad", Ainv_root, S, Qroot)


@dataclass(frozen=True)
class _AffineParam:
    """``Z = center + Vr Lr^-1/2 S Q^1/2 + V0 M`` covers a set with PSD ``A``."""

    center: np.ndarray
    range_map: np.ndarray
    null_basis: np.ndarray
    Qroot: np.ndarray


def _affine_param(q, tol=1e-10):
    lam, V = np.linalg.eigh(q.A)
    top = max(float(lam[-1]), 0.0)
    if lam[0] < -tol * max(top, 1.0):
        return None
    keep = lam > tol * max(top, 1e-300)
    Vr, lr, V0 = V[:, keep], lam[keep], V[:, ~keep]
    Apinv = (Vr / lr) @ Vr.T
    Zc = -Apinv @ q.B
    # B must lie in the range of A for the completed-square form to hold
    if np.linalg.norm(q.A @ Zc + q.B) > 1e-8 * (1.0 + np.linalg.norm(q.B)):
        return None
    BAB = symmetrize(q.B.T @ Apinv @ q.B)
    scale = max(float(np.linalg.norm(BAB, 2)), float(np.linalg.norm(q.C, 2)))
    try:
        Qroot = psd_sqrt(BAB - q.C, tol=1e-9, scale=scale)
    except ValueError:
        return None
    return _AffineParam(Zc, Vr / np.sqrt(lr), V0, Qroot)


def intersection_proposals(q_set, q_ball, ball_center, ball_radius, count, rng):
    """Candidate points for ``q_set`` intersected with a ball.

    Half of the draws come from the spectral ball; the other half are
    exact members of ``q_set`` (when it has a PSD quadratic term) whose
    free directions are steered to the ball center and perturbed within
    the ball radius. Callers must still test membership of both sets.
    """
    n_ball = count - count // 2
    draws = [spectral_ball_draws(ball_center, ball_radius, n_ball, rng)]
    n_set = count // 2
    param = _affine_param(q_set) if n_set else None
    if param is not None:
        r = param.range_map.shape[1]
        Zp = np.repeat(param.center[None], n_set, axis=0)
        if r:
            S = spectral_ball_draws(np.zeros((r, q_set.q)), 1.0, n_set, rng)
            Zp = Zp + np.einsum("ab,sbc,cd->sad", param.range_map, S, param.Qroot)
        if param.null_basis.shape[1]:
            V0 = param.null_basis
            M = np.einsum("ba,sbc->sac", V0, ball_center - Zp)
            M = spectral_ball_draws(np.zeros(M.shape[1:]), ball_radius, n_set, rng) + M
            Zp = Zp + np.einsum("ab,sbc->sac", V0, M)
        draws.append(Zp)
    else:
        draws.append(spectral_ball_draws(ball_center, ball_radius, n_set, rng))
    return np.concatenate(draws, axis=0)


def ball_center_radius(q_ball):
    """Center and radius of a ball Qmi (``A = I``)."""
    if not np.allclose(q_ball.A, np.eye(q_ball.p), atol=1e-12):
        raise ValueError("not a ball: quadratic coefficient is not the identity")
    Zc = -q_ball.B
    r2 = min_eig(Zc.T @ Zc - q_ball.C)
    return Zc.copy(), float(np.sqrt(max(r2, 0.0)))


def boundary_polylines(q, window, npts=400):
    """Boundary curves of a scalar-system set (p=2, q=1) within a window.

    Returns a list of (npts, 2) arrays of ``(a, b)`` points. Compact sets give
    one closed ellipse (or a single point for a singleton); a rank-one
    quadratic term gives the two edge lines of a strip clipped to
    ``window = (amin, amax, bmin, bmax)``.
    """
    if (q.p, q.q) != (2, 1):
        raise ValueError("boundary polylines are only defined for scalar systems")
    param = _affine_param(q)
    if param is None:
        return []
    theta = np.linspace(0.0, 2.0 * np.pi, npts)
    zc = param.center[:, 0]
    qr = float(param.Qroot[0, 0])
    if param.null_basis.shape[1] == 0:
        circle = np.stack([np.cos(theta), np.sin(theta)])
        pts = zc[:, None] + param.range_map @ circle * qr
        return [pts.T]
    if param.null_basis.shape[1] == 2:
        return []
    w = param.range_map[:, 0]
    v = param.null_basis[:, 0]
    amin, amax, bmin, bmax = window
    mid = np.array([(amin + amax) / 2, (bmin + bmax) / 2])
    half = np.hypot(amax - amin, bmax - bmin)
    s = np.linspace(-half, half, npts)
    lines = []
    for sign in (-1.0, 1.0):
        base = zc + sign * qr * w
        base = base + v * (v @ (mid - base))
        pts = base[None, :] + s[:, None] * v[None, :]
        inside = (pts[:, 0] >= amin) & (pts[:, 0] <= amax) & (pts[:, 1] >= bmin) & (pts[:, 1] <= bmax)
        if np.any(inside):
            lines.append(pts[inside])
    return lines


def inflated_boundary(centered, eps, npts=400):
    """Boundary of all points within ``eps`` of a compact scalar-system set.

    Each ellipse boundary point is pushed out by ``eps`` along its outward
    normal, which traces the boundary of the Minkowski sum with a disk.
    """
    if centered.center.shape != (2, 1):
        raise ValueError("only defined for scalar systems")
    U, lam = sym_eig(centered.Ashape)
    Ainv_root = U.T @ (lam[:, None] ** -0.5 * U)
    qr = float(centered.Qroot()[0, 0])
    theta = np.linspace(0.0, 2.0 * np.pi, npts)
    circle = np.stack([np.cos(theta), np.sin(theta)])
    offsets = Ainv_root @ circle * qr
    normals = centered.Ashape @ offsets
    norms = np.linalg.norm(normals, axis=0)
    norms[norms == 0] = 1.0
    if qr == 0.0:
        normals = circle
        norms = np.ones(npts)
    pts = centered.center + offsets + eps * normals / norms
    return pts.T
