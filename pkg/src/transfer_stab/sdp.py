"""Small dense SDP solver for problems in LMI form.

    maximize    c @ x
    subject to  F0[j] + sum_i x[i] * Fi[j]  >= 0   (PSD, every block j)
                lower <= x <= upper

The method is a primal barrier path-following scheme on the log-det barrier
(Newton steps, fraction-to-boundary cap, Armijo backtracking). A phase-I
problem with an auxiliary variable ``t`` (blocks shifted by ``t*I``) finds a
strictly feasible start or certifies infeasibility through the barrier
duality-gap bound ``t* <= t + m/s``. A large Euclidean ball ``|x| <= radius``
is always added so that every Newton system stays nonsingular.
"""

import enum
import io
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .linalg import symmetrize


class Status(str, enum.Enum):
    FEASIBLE = "Feasible"
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    NUMERICAL_FAILURE = "NumericalFailure"
    ITER_LIMIT = "IterLimit"

    @property
    def ok(self):
        return self in (Status.FEASIBLE, Status.OPTIMAL)


@dataclass(frozen=True)
class LmiBlock:
    """One PSD constraint ``F0 + sum_i x_i F[i] >= 0``; ``F`` has shape (k, d, d)."""

    F0: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        F0 = symmetrize(np.asarray(self.F0, dtype=float))
        F = np.asarray(self.F, dtype=float)
        if F.ndim != 3 or F.shape[1:] != F0.shape:
            raise ValueError(f"coefficient stack shape {F.shape} does not match F0 {F0.shape}")
        F = 0.5 * (F + F.transpose(0, 2, 1))
        if not (np.all(np.isfinite(F0)) and np.all(np.isfinite(F))):
            raise ValueError("block data must be finite")
        object.__setattr__(self, "F0", F0)
        object.__setattr__(self, "F", F)

    @property
    def dim(self):
        return self.F0.shape[0]

    def value(self, x):
        return self.F0 + np.tensordot(x, self.F, axes=1)


@dataclass(frozen=True)
class SdpProblem:
    c: np.ndarray
    blocks: tuple
    lower: np.ndarray = None
    upper: np.ndarray = None
    names: tuple = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        k = c.size
        blocks = tuple(self.blocks)
        for j, b in enumerate(blocks):
            if b.F.shape[0] != k:
                raise ValueError(f"block {j} has {b.F.shape[0]} coefficients, expected {k}")
        lower = np.full(k, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        upper = np.full(k, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if lower.shape != (k,) or upper.shape != (k,):
            raise ValueError("bounds must have one entry per variable")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def nvars(self):
        return self.c.size

    def block_values(self, x):
        return [b.value(x) for b in self.blocks]


@dataclass(frozen=True)
class SdpSolution:
    status: Status
    x: np.ndarray
    min_block_eig: tuple
    objective_value: float
    iterations: int
    phase1_value: float = math.nan
    message: str = ""


def residuals(p, x):
    """Minimum eigenvalue of every block at ``x``, recomputed from scratch."""
    x = np.asarray(x, dtype=float)
    if x.shape != (p.nvars,):
        raise ValueError(f"x must have {p.nvars} entries")
    return [float(np.linalg.eigvalsh(symmetrize(v))[0]) for v in p.block_values(x)]


def bound_residual(p, x):
    """Smallest slack of the variable bounds (``inf`` when there are none)."""
    x = np.asarray(x, dtype=float)
    slack = np.concatenate([x - p.lower, p.upper - x])
    slack = slack[np.isfinite(slack)]
    return float(slack.min()) if slack.size else math.inf


class _NumericalFailure(Exception):
    pass


class _Barrier:
    """Log barrier over PSD blocks, linear slacks ``h + G z`` and a ball.

    The ball ``radius**2 - |z[:nball]|**2 > 0`` only involves the first
    ``nball`` coordinates (the phase-I ``t`` is excluded).
    """

    def __init__(self, F0s, Fs, G, h, radius, nball):
        self.F0s = F0s
        self.Fs = Fs
        self.G = G
        self.h = h
        self.radius2 = radius * radius
        self.nball = nball
        self.m = sum(F0.shape[0] for F0 in F0s) + h.size + 1

    def _chols(self, z):
        out = []
        for F0, F in zip(self.F0s, self.Fs):
            S = F0 + np.tensordot(z, F, axes=1)
            try:
                out.append(np.linalg.cholesky(symmetrize(S)))
            except np.linalg.LinAlgError:
                return None
        return out

    def value(self, z):
        chols = self._chols(z)
        if chols is None:
            return math.inf
        lin = self.h + self.G @ z
        ball = self.radius2 - z[: self.nball] @ z[: self.nball]
        if np.any(lin <= 0) or ball <= 0:
            return math.inf
        val = -2.0 * sum(np.sum(np.log(np.diag(L))) for L in chols)
        val -= np.sum(np.log(lin))
        val -= math.log(ball)
        return val

    def derivatives(self, z):
        k = z.size
        grad = np.zeros(k)
        hess = np.zeros((k, k))
        linvs = []
        chols = self._chols(z)
        if chols is None:
            raise _NumericalFailure("iterate left the PSD cone")
        for L, F in zip(chols, self.Fs):
            Linv = scipy.linalg.solve_triangular(L, np.eye(L.shape[0]), lower=True)
            M = np.einsum("ab,kbc,dc->kad", Linv, F, Linv)
            Mf = M.reshape(k, -1)
            grad -= np.trace(M, axis1=1, axis2=2)
            hess += Mf @ Mf.T
            linvs.append(Linv)
        lin = self.h + self.G @ z
        if np.any(lin <= 0):
            raise _NumericalFailure("iterate violates a bound")
        inv = 1.0 / lin
        grad -= self.G.T @ inv
        hess += (self.G * inv[:, None] ** 2).T @ self.G
        zb = z[: self.nball]
        ball = self.radius2 - zb @ zb
        grad[: self.nball] += 2.0 * zb / ball
        hess[: self.nball, : self.nball] += 2.0 * np.eye(self.nball) / ball + 4.0 * np.outer(zb, zb) / ball**2
        return grad, hess, linvs

    def max_step(self, z, dz, linvs):
        amax = math.inf
        for Linv, F in zip(linvs, self.Fs):
            dF = np.tensordot(dz, F, axes=1)
            lam = np.linalg.eigvalsh(symmetrize(Linv @ dF @ Linv.T))[0]
            if lam < 0:
                amax = min(amax, -1.0 / lam)
        lin = self.h + self.G @ z
        dlin = self.G @ dz
        neg = dlin < 0
        if np.any(neg):
            amax = min(amax, float(np.min(-lin[neg] / dlin[neg])))
        zb, db = z[: self.nball], dz[: self.nball]
        a = db @ db
        if a > 0:
            b = 2.0 * zb @ db
            c = zb @ zb - self.radius2
            amax = min(amax, (-b + math.sqrt(b * b - 4 * a * c)) / (2 * a))
        return amax


def _newton_solve(hess, rhs):
    try:
        cho = scipy.linalg.cho_factor(hess, lower=True)
        return scipy.linalg.cho_solve(cho, rhs)
    except (np.linalg.LinAlgError, ValueError):
        pass
    ridge = 1e-12 * max(np.trace(hess) / hess.shape[0], 1e-300)
    try:
        cho = scipy.linalg.cho_factor(hess + ridge * np.eye(hess.shape[0]), lower=True)
        return scipy.linalg.cho_solve(cho, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise _NumericalFailure("singular Newton system") from exc


class _Path:
    """Barrier path-following for ``minimize c@z`` with an iteration budget."""

    def __init__(self, barrier, c, max_iter, step_frac):
        self.barrier = barrier
        self.c = c
        self.max_iter = max_iter
        self.step_frac = step_frac
        self.iterations = 0

    def center(self, z, s, stop=None, newton_tol=1e-9):
        """Newton-center ``s*c@z + phi(z)``; returns (z, centered)."""
        while True:
            if stop is not None and stop(z):
                return z, True
            if self.iterations >= self.max_iter:
                return z, False
            grad_phi, hess, linvs = self.barrier.derivatives(z)
            grad = s * self.c + grad_phi
            dz = _newton_solve(hess, -grad)
            dec2 = -grad @ dz
            if not np.isfinite(dec2):
                raise _NumericalFailure("non-finite Newton decrement")
            if dec2 <= 2.0 * newton_tol:
                return z, True
            self.iterations += 1
            amax = self.barrier.max_step(z, dz, linvs)
            a = min(1.0, self.step_frac * amax)
            f0 = s * (self.c @ z) + self.barrier.value(z)
            slope = grad @ dz
            while True:
                znew = z + a * dz
                f1 = s * (self.c @ znew) + self.barrier.value(znew)
                if f1 <= f0 + 0.25 * a * slope:
                    break
                a *= 0.5
                if a < 1e-14:
                    # no progress possible at this precision: treat as centered
                    return z, True
            z = znew
            if f0 - f1 <= 1e-13 * (1.0 + abs(f0)):
                # stalled at working precision
                return z, True


def _start_point(p):
    x = np.zeros(p.nvars)
    lo, hi = p.lower, p.upper
    both = np.isfinite(lo) & np.isfinite(hi)
    # start near the lower end of wide boxes rather than in their middle
    x[both] = lo[both] + np.minimum(1.0, 0.5 * (hi[both] - lo[both]))
    only_lo = np.isfinite(lo) & ~np.isfinite(hi)
    x[only_lo] = np.maximum(0.0, lo[only_lo] + 1.0)
    only_hi = ~np.isfinite(lo) & np.isfinite(hi)
    x[only_hi] = np.minimum(0.0, hi[only_hi] - 1.0)
    return x


def _linear_bounds(p):
    rows, h = [], []
    for i in range(p.nvars):
        if np.isfinite(p.lower[i]):
            r = np.zeros(p.nvars)
            r[i] = 1.0
            rows.append(r)
            h.append(-p.lower[i])
        if np.isfinite(p.upper[i]):
            r = np.zeros(p.nvars)
            r[i] = -1.0
            rows.append(r)
            h.append(p.upper[i])
    G = np.array(rows).reshape(len(rows), p.nvars)
    return G, np.array(h, dtype=float)


def solve(p, feas_tol=1e-8, max_iter=200, step_frac=0.99, gap_tol=1e-9, radius=1e7, growth=20.0):
    """Solve ``p``; see ``Status`` for the possible outcomes.

    ``max_iter`` caps the total number of Newton steps over both phases.
    A pure feasibility problem (``c == 0``) stops after phase I, which is run
    until the smallest block eigenvalue reaches ``10*feas_tol``.
    """
    k = p.nvars
    G, h = _linear_bounds(p)
    x0 = _start_point(p)
    if x0 @ x0 >= radius**2:
        raise ValueError("bounds push the start point outside the solver ball")

    # phase I on z = (x, t)
    F0s = [b.F0 for b in p.blocks]
    Fs = [np.concatenate([b.F, -np.eye(b.dim)[None]], axis=0) for b in p.blocks]
    G1 = np.hstack([G, -np.ones((G.shape[0], 1))])
    slack0 = [np.linalg.eigvalsh(b.value(x0))[0] for b in p.blocks]
    if h.size:
        slack0.extend(h + G @ x0)
    if not slack0:
        return _finish(p, x0, Status.FEASIBLE, 0, math.inf, "no constraints")
    margin = 10.0 * feas_tol
    if min(slack0) >= margin:
        return _phase2(p, x0, G, h, radius, max_iter, step_frac, gap_tol, growth, 0, min(slack0))
    t0 = min(slack0) - 1.0
    # cap t so a single Newton step cannot throw x towards the ball boundary
    t_cap = max(abs(t0), 1.0)
    G1 = np.vstack([G1, np.append(np.zeros(k), -1.0)])
    h1 = np.append(h, t_cap)
    barrier1 = _Barrier(F0s, Fs, G1, h1, radius, k)
    c1 = np.zeros(k + 1)
    c1[-1] = -1.0
    path1 = _Path(barrier1, c1, max_iter, step_frac)
    z = np.append(x0, t0)
    s = 1.0
    status = None
    try:
        while True:
            z, centered = path1.center(z, s, stop=lambda zz: zz[-1] >= margin)
            t = z[-1]
            if t >= margin:
                break
            if not centered:
                status = Status.ITER_LIMIT
                break
            upper = t + barrier1.m / s
            if upper < -feas_tol:
                status = Status.INFEASIBLE
                break
            if barrier1.m / s < 0.1 * feas_tol:
                # converged: optimum of t is within [t, t + m/s]
                status = Status.FEASIBLE if t > feas_tol else Status.ITER_LIMIT
                break
            s *= growth
    except _NumericalFailure as exc:
        return _finish(p, z[:k], Status.NUMERICAL_FAILURE, path1.iterations, z[-1], str(exc))

    x, t1 = z[:k], float(z[-1])
    if status is not None and not (status is Status.FEASIBLE):
        msg = {
            Status.INFEASIBLE: "phase I certified max t < -feas_tol",
            Status.ITER_LIMIT: "phase I inconclusive",
        }[status]
        return _finish(p, x, status, path1.iterations, t1, msg)

    return _phase2(p, x, G, h, radius, max_iter, step_frac, gap_tol, growth, path1.iterations, t1)


def _phase2(p, x, G, h, radius, max_iter, step_frac, gap_tol, growth, used, t1):
    if not np.any(p.c):
        return _finish(p, x, Status.FEASIBLE, used, t1, "feasible point found")
    barrier2 = _Barrier([b.F0 for b in p.blocks], [b.F for b in p.blocks], G, h, radius, p.nvars)
    if not np.isfinite(barrier2.value(x)):
        return _finish(p, x, Status.NUMERICAL_FAILURE, used, t1, "phase I point not interior")
    path2 = _Path(barrier2, -p.c, max_iter - used, step_frac)
    s = barrier2.m / max(abs(p.c @ x), 1.0)
    try:
        while True:
            x, centered = path2.center(x, s)
            iters = used + path2.iterations
            if not centered:
                return _finish(p, x, Status.FEASIBLE, iters, t1, "iteration limit in phase II")
            if barrier2.m / s <= gap_tol * max(1.0, abs(p.c @ x)):
                return _finish(p, x, Status.OPTIMAL, iters, t1, "duality gap below tolerance")
            s *= growth
    except _NumericalFailure as exc:
        # the last accepted iterate is still strictly feasible
        iters = used + path2.iterations
        if np.isfinite(barrier2.value(x)):
            return _finish(p, x, Status.FEASIBLE, iters, t1, f"stopped early: {exc}")
        return _finish(p, x, Status.NUMERICAL_FAILURE, iters, t1, str(exc))


def _finish(p, x, status, iterations, t1, message):
    x = np.array(x, dtype=float)
    return SdpSolution(
        status=status,
        x=x,
        min_block_eig=tuple(residuals(p, x)),
        objective_value=float(p.c @ x),
        iterations=int(iterations),
        phase1_value=float(t1),
        message=message,
    )


def _fmt(v):
    return "%.17g" % v


def dump_problem(p, fh=None):
    """Plain-text dump; returns the text when ``fh`` is None.

    Layout: ``nvars k`` / ``nblocks J`` / ``objective`` + one line of c /
    ``bounds`` + k lines "lower upper" / then per block ``block j dim d``
    followed by F0, F1..Fk as ``d`` dense rows each, 17 significant digits.
    """
    out = io.StringIO() if fh is None else fh
    out.write(f"nvars {p.nvars}\n")
    out.write(f"nblocks {len(p.blocks)}\n")
    out.write("objective\n")
    out.write(" ".join(_fmt(v) for v in p.c) + "\n")
    out.write("bounds\n")
    for lo, hi in zip(p.lower, p.upper):
        out.write(f"{_fmt(lo)} {_fmt(hi)}\n")
    for j, b in enumerate(p.blocks):
        out.write(f"block {j} dim {b.dim}\n")
        for M in [b.F0, *b.F]:
            for row in M:
                out.write(" ".join(_fmt(v) for v in row) + "\n")
    if fh is None:
        return out.getvalue()
    return None


def load_problem(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    it = iter(lines)

    def expect(word):
        parts = next(it).split()
        if parts[0] != word:
            raise ValueError(f"expected '{word}', got '{parts[0]}'")
        return parts[1:]

    k = int(expect("nvars")[0])
    nb = int(expect("nblocks")[0])
    expect("objective")
    c = np.array([float(v) for v in next(it).split()]) if k else np.zeros(0)
    expect("bounds")
    bnds = np.array([[float(v) for v in next(it).split()] for _ in range(k)]).reshape(k, 2)
    blocks = []
    for _ in range(nb):
        rest = expect("block")
        d = int(rest[2])
        mats = np.array(
            [[float(v) for v in next(it).split()] for _ in range(d * (k + 1))]
        ).reshape(k + 1, d, d)
        blocks.append(LmiBlock(mats[0], mats[1:]))
    return SdpProblem(c, tuple(blocks), bnds[:, 0], bnds[:, 1])
