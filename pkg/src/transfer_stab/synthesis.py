"""State-feedback synthesis from a target-data set and a ball around the source.

Decision variables, in this order (stable across versions):

    vech(P)   n(n+1)/2 entries, upper triangle read row by row
    Y         m*n entries, row-major
    beta, tau_T, tau_S

The big block has dimension 3n+m and row partition (n, n, m, n):

    [[P - beta I, 0,  0,  0],
     [0,         -P, -Y^T, 0],
     [0,         -Y,  0,   Y],
     [0,          0,  Y^T, P]]  + tau_T pad(A_QT) + tau_S pad(A_Qb)  >= 0

where ``A_Q = [[C, B^T], [B, A]]`` is a set's bordered matrix, padded with n
zero rows/columns at the bottom right. Its Schur complement with respect to
the trailing P is ``tau_T A_QT + tau_S A_Qb - A_Qc >= 0`` with ``A_Qc`` the
bordered matrix of ``lyapunov_qmi(P, Y P^-1, beta)``.

Both bordered matrices are scaled to unit spectral norm inside the LMI; the
reported multipliers are converted back to the caller's units.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import sdp
from .linalg import max_eig, min_eig, sym_inv
from .sets import ball_center_radius, intersection_proposals, lyapunov_qmi

P_MIN = 1e-6
P_MAX = 1.0
BETA_MIN = 1e-6
TAU_MAX = 1e8
KAPPA = 1e-3
LMI_TOL = 1e-7
SCHUR_TOL = 1e-6
OBJECTIVES = ("beta", "beta-trace", "feasibility")


class SynthesisError(Exception):
    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class InfeasibleError(SynthesisError):
    """The LMI was certified infeasible."""


class InconclusiveError(SynthesisError):
    """The solver gave up without a verdict."""


class NumericalFailureError(SynthesisError):
    pass


@dataclass(frozen=True)
class SynthesisOptions:
    objective: str = "beta"
    p_min: float = P_MIN
    p_max: float = P_MAX
    beta_min: float = BETA_MIN
    tau_max: float = TAU_MAX
    kappa: float = KAPPA
    feas_tol: float = 1e-8
    max_iter: int = 200

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if not 0 < self.p_min < self.p_max:
            raise ValueError("need 0 < p_min < p_max")
        if self.beta_min <= 0 or self.tau_max <= 0:
            raise ValueError("beta_min and tau_max must be positive")


@dataclass(frozen=True)
class Layout:
    n: int
    m: int

    @property
    def n_p(self):
        return self.n * (self.n + 1) // 2

    @property
    def nvars(self):
        return self.n_p + self.m * self.n + 3

    @property
    def i_beta(self):
        return self.n_p + self.m * self.n

    @property
    def i_tau_t(self):
        return self.i_beta + 1

    @property
    def i_tau_s(self):
        return self.i_beta + 2

    def p_basis(self):
        """Symmetric basis matrices E_k with P = sum_k vech(P)_k E_k."""
        n = self.n
        E = np.zeros((self.n_p, n, n))
        k = 0
        for i in range(n):
            for j in range(i, n):
                E[k, i, j] = E[k, j, i] = 1.0
                k += 1
        return E

    def y_basis(self):
        E = np.zeros((self.m * self.n, self.m, self.n))
        for k in range(self.m * self.n):
            E[k].flat[k] = 1.0
        return E

    def pack(self, P, Y, beta, tau_t, tau_s):
        iu = np.triu_indices(self.n)
        return np.concatenate([np.asarray(P)[iu], np.ravel(Y), [beta, tau_t, tau_s]])

    def unpack(self, x):
        x = np.asarray(x, dtype=float)
        P = np.einsum("k,kij->ij", x[: self.n_p], self.p_basis())
        Y = x[self.n_p : self.i_beta].reshape(self.m, self.n)
        return P, Y, float(x[self.i_beta]), float(x[self.i_tau_t]), float(x[self.i_tau_s])


@dataclass(frozen=True)
class SynthesisResult:
    P: np.ndarray
    Y: np.ndarray
    beta: float
    tau_T: float
    tau_S: float
    K: np.ndarray
    lmi_min_eig: float
    schur_min_eig: float
    tau_at_bound: bool
    solution: sdp.SdpSolution = field(repr=False)

    def to_dict(self):
        return {
            "K": self.K.tolist(),
            "P": self.P.tolist(),
            "beta": self.beta,
            "tau_T": self.tau_T,
            "tau_S": self.tau_S,
            "lmi_min_eig": self.lmi_min_eig,
            "schur_min_eig": self.schur_min_eig,
            "tau_at_bound": self.tau_at_bound,
            "solver_status": self.solution.status.value,
            "solver_iterations": self.solution.iterations,
        }


def _dims(qmi_T, qmi_ball):
    if (qmi_T.p, qmi_T.q) != (qmi_ball.p, qmi_ball.q):
        raise ValueError(
            f"set dimensions differ: target {(qmi_T.p, qmi_T.q)}, ball {(qmi_ball.p, qmi_ball.q)}"
        )
    n = qmi_T.q
    m = qmi_T.p - n
    if m < 1:
        raise ValueError("sets must be over Z = [A B]^T with at least one input")
    return n, m


def _scale(M):
    s = float(np.linalg.norm(M, 2))
    return s if s > 0 else 1.0


def build_lmi(qmi_T, qmi_ball, opts=None):
    """Assemble the synthesis SDP; returns (problem, layout, (scale_T, scale_S))."""
    opts = opts or SynthesisOptions()
    n, m = _dims(qmi_T, qmi_ball)
    lay = Layout(n, m)
    d = 3 * n + m
    k = lay.nvars
    F = np.zeros((k, d, d))
    o1, o2, o3 = n, 2 * n, 2 * n + m  # row offsets of the -P, Y and trailing P blocks
    for idx, E in enumerate(lay.p_basis()):
        F[idx, :n, :n] = E
        F[idx, o1:o2, o1:o2] = -E
        F[idx, o3:, o3:] = E
    for j, E in enumerate(lay.y_basis()):
        idx = lay.n_p + j
        F[idx, o2:o3, o1:o2] = -E
        F[idx, o1:o2, o2:o3] = -E.T
        F[idx, o2:o3, o3:] = E
        F[idx, o3:, o2:o3] = E.T
    F[lay.i_beta, :n, :n] = -np.eye(n)
    AQT = qmi_T.bordered()
    AQS = qmi_ball.bordered()
    sT, sS = _scale(AQT), _scale(AQS)
    F[lay.i_tau_t, : 2 * n + m, : 2 * n + m] = AQT / sT
    F[lay.i_tau_s, : 2 * n + m, : 2 * n + m] = AQS / sS
    big = sdp.LmiBlock(np.zeros((d, d)), F)

    Fp = np.zeros((k, n, n))
    Fp[: lay.n_p] = lay.p_basis()
    p_lo = sdp.LmiBlock(-opts.p_min * np.eye(n), Fp)
    p_hi = sdp.LmiBlock(opts.p_max * np.eye(n), -Fp)

    lower = np.full(k, -np.inf)
    upper = np.full(k, np.inf)
    lower[lay.i_beta] = opts.beta_min
    lower[lay.i_tau_t] = lower[lay.i_tau_s] = 0.0
    upper[lay.i_tau_t] = upper[lay.i_tau_s] = opts.tau_max

    c = np.zeros(k)
    if opts.objective in ("beta", "beta-trace"):
        c[lay.i_beta] = 1.0
    if opts.objective == "beta-trace":
        for idx, E in enumerate(lay.p_basis()):
            c[idx] -= opts.kappa * np.trace(E)
    names = tuple(f"P{i}{j}" for i in range(n) for j in range(i, n))
    names += tuple(f"Y{i}{j}" for i in range(m) for j in range(n)) + ("beta", "tau_T", "tau_S")
    prob = sdp.SdpProblem(c, (big, p_lo, p_hi), lower, upper, names)
    return prob, lay, (sT, sS)


def schur_residual(qmi_T, qmi_ball, P, K, beta, tau_T, tau_S):
    """lambda_max of ``A_Qc - tau_T A_QT - tau_S A_Qb`` (should be <= 0)."""
    Ac = lyapunov_qmi(P, K, beta).bordered()
    return max_eig(Ac - tau_T * qmi_T.bordered() - tau_S * qmi_ball.bordered())


def synthesize(qmi_T, qmi_ball, opts=None):
    opts = opts or SynthesisOptions()
    prob, lay, (sT, sS) = build_lmi(qmi_T, qmi_ball, opts)
    # tau may legitimately approach tau_max, so widen the solver ball past it
    sol = sdp.solve(prob, feas_tol=opts.feas_tol, max_iter=opts.max_iter, radius=10.0 * opts.tau_max)
    st = sol.status
    if st is sdp.Status.INFEASIBLE:
        raise InfeasibleError(f"synthesis LMI infeasible: {sol.message}", sol)
    if st is sdp.Status.ITER_LIMIT:
        raise InconclusiveError(f"solver inconclusive: {sol.message}", sol)
    if st is sdp.Status.NUMERICAL_FAILURE:
        raise NumericalFailureError(f"solver failure: {sol.message}", sol)

    P, Y, beta, tn_T, tn_S = lay.unpack(sol.x)
    # P >= p_min I is a constraint; a failure here means the certificate is broken
    assert min_eig(P) > 0, "solver returned P that is not positive definite"
    K = Y @ sym_inv(P, tol=0.0)
    tau_T, tau_S = tn_T / sT, tn_S / sS
    lmi_min = float(sdp.residuals(prob, sol.x)[0])
    schur = schur_residual(qmi_T, qmi_ball, P, K, beta, tau_T, tau_S)
    if lmi_min < -LMI_TOL:
        raise NumericalFailureError(f"certificate check failed: lmi_min_eig {lmi_min:.3g}", sol)
    if schur > SCHUR_TOL:
        raise NumericalFailureError(f"Schur-form re-check failed: {schur:.3g}", sol)
    at_bound = max(tn_T, tn_S) >= 0.999 * opts.tau_max
    return SynthesisResult(P, Y, beta, tau_T, tau_S, K, lmi_min, schur, at_bound, sol)


@dataclass(frozen=True)
class RegularityReport:
    mu_T: float
    mu_S: float
    min_eig_combo: float
    slater_point: np.ndarray
    slater_margins: tuple
    tries: int

    @property
    def mu_ok(self):
        return self.min_eig_combo > 0

    @property
    def slater_ok(self):
        return self.slater_point is not None and max(self.slater_margins) < 0

    @property
    def satisfied(self):
        return self.mu_ok and self.slater_ok

    def to_dict(self):
        return {
            "satisfied": self.satisfied,
            "mu_T": self.mu_T,
            "mu_S": self.mu_S,
            "min_eig_combo": self.min_eig_combo,
            "slater_point": None if self.slater_point is None else self.slater_point.tolist(),
            "slater_margins": list(self.slater_margins),
            "tries": self.tries,
        }


def best_mu(A1, A2, grid=720):
    """Maximize ``lambda_min(cos t A1 + sin t A2)`` over the unit circle.

    Both matrices are scaled to unit norm for the search; the returned
    (mu1, mu2, lambda_min) refer to the unscaled inputs with |mu| = 1.
    """
    s1, s2 = _scale(A1), _scale(A2)
    N1, N2 = A1 / s1, A2 / s2

    def f(t):
        return min_eig(np.cos(t) * N1 + np.sin(t) * N2)

    thetas = np.arange(grid) * (2.0 * np.pi / grid)
    vals = np.array([f(t) for t in thetas])
    i = int(np.argmax(vals))
    h = 2.0 * np.pi / grid
    res = minimize_scalar(lambda t: -f(t), bounds=(thetas[i] - h, thetas[i] + h), method="bounded",
                          options={"xatol": 1e-12})
    t = float(res.x) if -res.fun > vals[i] else float(thetas[i])
    mu = np.array([np.cos(t) / s1, np.sin(t) / s2])
    mu /= np.linalg.norm(mu)
    return float(mu[0]), float(mu[1]), min_eig(mu[0] * A1 + mu[1] * A2)


def find_slater_point(qmi_1, qmi_2, center, radius, tries, rng, margin=1e-9, batch=1000):
    """Search for Z with lambda_max f_i(Z) < -margin for both sets.

    Tries ``center`` first, then up to ``tries`` sampled candidates, and
    returns (Z or None, margins of the best candidate, number tried).
    """

    def margins(Zs):
        return np.maximum(qmi_1.max_eig_many(Zs), qmi_2.max_eig_many(Zs))

    best = center[None]
    best_val = margins(best)[0]
    used = 1
    while best_val >= -margin and used < tries + 1:
        cnt = min(batch, tries + 1 - used)
        Zs = intersection_proposals(qmi_1, qmi_2, center, radius, cnt, rng)
        vals = margins(Zs)
        used += cnt
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best, best_val = Zs[j : j + 1], vals[j]
    Z = best[0]
    m = (max_eig(qmi_1.evaluate(Z)), max_eig(qmi_2.evaluate(Z)))
    return (Z if max(m) < -margin else None), m, used


def check_regularity(qmi_T, qmi_ball, tries=10000, slater_margin=1e-9, seed=0, grid=720):
    """Report whether the two-set regularity conditions can be certified."""
    _dims(qmi_T, qmi_ball)
    mu_T, mu_S, lam = best_mu(qmi_T.bordered(), qmi_ball.bordered(), grid)
    center, radius = ball_center_radius(qmi_ball)
    rng = np.random.default_rng(seed)
    Z, margins, used = find_slater_point(qmi_T, qmi_ball, center, radius, tries, rng, slater_margin)
    return RegularityReport(mu_T, mu_S, lam, Z, tuple(float(v) for v in margins), used)
