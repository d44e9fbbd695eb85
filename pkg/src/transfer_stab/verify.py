"""Post-synthesis checks and a brute-force oracle for the two-set S-procedure.

The oracle compares three statements about quadratic functions f0, f1, f2:

    (I)   f0(Z) <= 0 for every Z with f1(Z) <= 0 and f2(Z) <= 0
    (II)  the same with the strict filter f1(Z) < 0, f2(Z) < 0
    (III) tau1 A_Q1 + tau2 A_Q2 - A_Q0 >= 0 for some tau1, tau2 >= 0

(III) is decided by a tiny SDP; (I) and (II) are probed by sampling.
"""

from dataclasses import dataclass, field

import numpy as np

from . import sdp
from .data import LinearSystem
from .linalg import max_eig, min_eig, spectral_radius, symmetrize
from .sets import (
    Qmi,
    _affine_param,
    ball,
    ball_center_radius,
    intersection_proposals,
    lyapunov_qmi,
    spectral_ball_draws,
)
from .synthesis import best_mu

MAX_DRAWS = 10**6
MEMBER_TOL = 1e-9
VIOLATION_TOL = 1e-7


@dataclass
class SampleReport:
    requested: int
    accepted: int
    draws: int
    systems: list
    radii: list = field(default_factory=list)

    @property
    def max_closed_loop_radius(self):
        return max(self.radii) if self.radii else float("nan")

    def to_csv(self):
        lines = ["index,radius"]
        lines += ["%d,%.17g" % (i, r) for i, r in enumerate(self.radii)]
        return "\n".join(lines) + "\n"


def sample_intersection(qmi_T, qmi_ball, count, seed, max_draws=MAX_DRAWS, batch=None, tol=MEMBER_TOL):
    """Draw up to ``count`` systems lying in both sets.

    Candidates mix spectral-ball draws with exact members of the target set
    steered into the ball (see ``sets.intersection_proposals``); every
    candidate is accepted only if it passes membership of both sets.
    """
    center, radius = ball_center_radius(qmi_ball)
    n = qmi_T.q
    rng = np.random.default_rng(seed)
    batch = batch or max(256, 4 * count)
    accepted = []
    draws = 0
    while len(accepted) < count and draws < max_draws:
        cnt = min(batch, max_draws - draws)
        Zs = intersection_proposals(qmi_T, qmi_ball, center, radius, cnt, rng)
        draws += cnt
        ok = (qmi_T.max_eig_many(Zs) <= tol) & (qmi_ball.max_eig_many(Zs) <= tol)
        accepted.extend(Zs[ok][: count - len(accepted)])
    systems = [LinearSystem.from_z(Z, n) for Z in accepted]
    return SampleReport(count, len(systems), draws, systems)


def closed_loop_sweep(systems, K, requested=None):
    K = np.asarray(K, dtype=float)
    radii = []
    for s in systems:
        if K.shape != (s.m, s.n):
            raise ValueError(f"K must have shape {(s.m, s.n)}, got {K.shape}")
        radii.append(spectral_radius(s.closed_loop(K)))
    n = len(systems)
    return SampleReport(n if requested is None else requested, n, n, list(systems), radii)


def grid_intersection(qmi_T, qmi_ball, min_points=1000, max_side=4096, tol=MEMBER_TOL):
    """Regular grid points of the intersection for scalar systems (p=2, q=1).

    The grid covers the ball's bounding square and is refined until at least
    ``min_points`` points fall in both sets. Returns an (N, 2) array of (a, b).
    """
    if (qmi_T.p, qmi_T.q) != (2, 1):
        raise ValueError("grid is only defined for scalar systems")
    center, radius = ball_center_radius(qmi_ball)
    side = 64
    while True:
        a = np.linspace(center[0, 0] - radius, center[0, 0] + radius, side)
        b = np.linspace(center[1, 0] - radius, center[1, 0] + radius, side)
        Zs = np.stack(np.meshgrid(a, b, indexing="ij"), axis=-1).reshape(-1, 2, 1)
        ok = (qmi_T.max_eig_many(Zs) <= tol) & (qmi_ball.max_eig_many(Zs) <= tol)
        if ok.sum() >= min_points or side >= max_side:
            return Zs[ok, :, 0]
        side *= 2


@dataclass(frozen=True)
class SLemmaInstance:
    f1: Qmi
    f2: Qmi
    zbar: np.ndarray = None
    mu: tuple = None
    f0: Qmi = None

    def __post_init__(self):
        dims = {(f.p, f.q) for f in (self.f1, self.f2, self.f0) if f is not None}
        if len(dims) != 1:
            raise ValueError("all functions must share dimensions")

    @property
    def shape(self):
        return self.f1.p, self.f1.q


@dataclass(frozen=True)
class IIIResult:
    found: bool
    tau1: float
    tau2: float
    margin: float
    status: str


def slemma_check_III(inst, f0_bordered, tol=1e-8, tau_max=1e6):
    """Decide (III) via ``max t : tau1 A_Q1 + tau2 A_Q2 - A_Q0 >= t I``.

    The three matrices are divided by a common scale first. ``found`` is
    true when the optimal margin is at least ``-tol``; NotFound is returned
    only when the solver certifies the margin is below ``-tol``.
    """
    A0 = symmetrize(np.asarray(f0_bordered, dtype=float))
    A1, A2 = inst.f1.bordered(), inst.f2.bordered()
    if A0.shape != A1.shape:
        raise ValueError("f0 bordered matrix has the wrong dimension")
    s = max(np.linalg.norm(M, 2) for M in (A0, A1, A2)) or 1.0
    d = A0.shape[0]
    F = np.stack([A1 / s, A2 / s, -np.eye(d)])
    prob = sdp.SdpProblem(
        np.array([0.0, 0.0, 1.0]),
        (sdp.LmiBlock(-A0 / s, F),),
        lower=np.array([0.0, 0.0, -np.inf]),
        upper=np.array([tau_max, tau_max, 1.0]),
        names=("tau1", "tau2", "t"),
    )
    sol = sdp.solve(prob, max_iter=400)
    if sol.status is sdp.Status.NUMERICAL_FAILURE:
        raise ArithmeticError(f"(III) solve failed: {sol.message}")
    t = float(sol.x[2])
    if sol.status is sdp.Status.INFEASIBLE:
        # cannot happen for this always-feasible epigraph form, kept for safety
        return IIIResult(False, float("nan"), float("nan"), -np.inf, sol.status.value)
    if t >= -tol:
        return IIIResult(True, float(sol.x[0]), float(sol.x[1]), t * s, sol.status.value)
    certified = sol.status is sdp.Status.OPTIMAL
    return IIIResult(False, float(sol.x[0]), float(sol.x[1]), t * s,
                     sol.status.value if certified else "Inconclusive")


def _both_max(f1, f2, Zs):
    return np.maximum(f1.max_eig_many(Zs), f2.max_eig_many(Zs))


def _exit_distance(f1, f2, zbar, dirs, rmax, steps=48):
    """Distance along each ray from ``zbar`` to the boundary of {f1<=0, f2<=0}.

    Rays still feasible at ``rmax`` report ``rmax``.
    """
    lo = np.zeros(len(dirs))
    hi = np.full(len(dirs), float(rmax))
    inside_far = _both_max(f1, f2, zbar + hi[:, None, None] * dirs) <= 0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        ok = _both_max(f1, f2, zbar + mid[:, None, None] * dirs) <= 0
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    return np.where(inside_far, rmax, lo)


def find_feasible_point(f1, f2, rng, tries=2000):
    """A point with both functions strictly negative, or None."""
    cands = []
    for f in (f1, f2):
        par = _affine_param(f)
        if par is not None:
            cands.append(par.center)
    if len(cands) == 2:
        cands.append(0.5 * (cands[0] + cands[1]))
    cands.append(np.zeros((f1.p, f1.q)))
    Zs = np.array(cands)
    vals = _both_max(f1, f2, Zs)
    j = int(np.argmin(vals))
    if vals[j] < 0:
        return Zs[j]
    for f, g in ((f1, f2), (f2, f1)):
        par = _affine_param(g)
        if par is None or par.null_basis.shape[1]:
            continue
        c = par.center
        r = float(np.linalg.norm(par.range_map, 2) * np.linalg.norm(par.Qroot, 2))
        Zs = intersection_proposals(f, _ball_qmi(c, r), c, r, tries, rng)
        vals = _both_max(f1, f2, Zs)
        j = int(np.argmin(vals))
        if vals[j] < 0:
            return Zs[j]
    return None


def _ball_qmi(c, r):
    return ball(c, max(r, 1e-12))


def _verdict(feasible, done, cex=None, vacuous=False):
    return {"holds": cex is None, "vacuous": vacuous, "feasible_samples": feasible, "samples": done,
            "counterexample": cex}


def slemma_probe(inst, f0, samples, seed, zbar=None, tol=VIOLATION_TOL):
    """Sampled verdicts of (I) and (II) from one shared set of draws.

    Points are placed on random rays from a feasible point: a third uniform
    along the ray, a third boundary-biased, a third just inside the boundary.
    Returns ``{"I": verdict, "II": verdict}``; each verdict carries the first
    counterexample (Z and the three evaluations) or None.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    f1, f2 = inst.f1, inst.f2
    rng = np.random.default_rng(seed)
    if zbar is None:
        zbar = inst.zbar
    if zbar is None or _both_max(f1, f2, np.asarray(zbar)[None])[0] > 0:
        zbar = find_feasible_point(f1, f2, rng)
    if zbar is None:
        v = _verdict(0, samples, vacuous=True)
        return {"I": v, "II": dict(v)}
    zbar = np.asarray(zbar, dtype=float)
    rmax = 1e3 * (1.0 + np.linalg.norm(zbar, 2))
    feasible = {"I": 0, "II": 0}
    cex = {"I": None, "II": None}
    done = 0
    batch = 2000
    while done < samples and (cex["I"] is None or cex["II"] is None):
        cnt = min(batch, samples - done)
        G = rng.standard_normal((cnt,) + zbar.shape)
        dirs = G / np.linalg.norm(G, axis=(1, 2))[:, None, None]
        rexit = _exit_distance(f1, f2, zbar, dirs, rmax)
        u = rng.uniform(size=cnt)
        kind = np.arange(cnt) % 3
        u = np.where(kind == 1, np.maximum(u, rng.uniform(size=cnt)), u)
        u = np.where(kind == 2, 1.0 - 1e-9 * rng.uniform(size=cnt), u)
        Zs = zbar + (u * rexit)[:, None, None] * dirs
        done += cnt
        m12 = _both_max(f1, f2, Zs)
        v0 = f0.max_eig_many(Zs)
        for mode, keep in (("I", m12 <= 0), ("II", m12 < 0)):
            if cex[mode] is not None:
                continue
            feasible[mode] += int(keep.sum())
            bad = np.flatnonzero(keep & (v0 > tol))
            if bad.size:
                Z = Zs[bad[0]]
                cex[mode] = {
                    "Z": Z.tolist(),
                    "f0": f0.evaluate(Z).tolist(),
                    "f1": f1.evaluate(Z).tolist(),
                    "f2": f2.evaluate(Z).tolist(),
                }
    return {mode: _verdict(feasible[mode], done, cex[mode]) for mode in ("I", "II")}


def slemma_check_I(inst, f0, samples, seed, strict=False, zbar=None, tol=VIOLATION_TOL):
    """Monte-Carlo search for Z with f1, f2 <= 0 (``< 0`` if strict) but lambda_max f0 > tol."""
    return slemma_probe(inst, f0, samples, seed, zbar, tol)["II" if strict else "I"]


def _random_spd(rng, p, cond=10.0):
    Qm, _ = np.linalg.qr(rng.standard_normal((p, p)))
    lam = np.exp(rng.uniform(0.0, np.log(cond), p))
    return symmetrize((Qm * lam) @ Qm.T)


def _ellipsoid(A, c, Q):
    return Qmi(A, -A @ c, symmetrize(c.T @ A @ c) - Q)


def regularity_instance_gen(p, q, seed, max_tries=1000):
    """Random instance satisfying both regularity conditions by construction.

    An inner ellipsoid is placed strictly inside an outer one (strict
    containment is what makes some ``mu1 A_Q1 + mu2 A_Q2`` definite). Even
    attempts return the nested pair, odd ones the outer set minus the inner
    one, a non-convex intersection. The mu condition and the Slater point are
    re-verified and failing draws are discarded.
    """
    if p < 2:
        raise ValueError("need p > 1")
    rng = np.random.default_rng(seed)
    annulus = bool(rng.integers(2))
    for _ in range(max_tries):
        c_out = rng.standard_normal((p, q))
        A_out = _random_spd(rng, p)
        Q_out = _random_spd(rng, q, cond=3.0) if q > 1 else np.array([[rng.uniform(0.5, 2.0)]])
        c_in = c_out + 0.1 * rng.standard_normal((p, q))
        A_in = _random_spd(rng, p) * rng.uniform(4.0, 20.0)
        Q_in = Q_out * rng.uniform(0.2, 1.0)
        outer = _ellipsoid(A_out, c_out, Q_out)
        inner = _ellipsoid(A_in, c_in, Q_in)
        if annulus:
            # outside of the inner ellipsoid
            f1, f2 = outer, Qmi(-inner.A, -inner.B, -inner.C)
            # a point of the outer set outside the inner one
            Zs = c_out + np.einsum("ab,sbc->sac", np.linalg.inv(np.linalg.cholesky(A_out)).T,
                                   spectral_ball_draws(np.zeros((p, q)), 1.0, 500, rng)) @ np.linalg.cholesky(Q_out).T
            vals = _both_max(f1, f2, Zs)
            zbar = Zs[int(np.argmin(vals))]
        else:
            f1, f2 = (inner, outer) if rng.integers(2) else (outer, inner)
            zbar = c_in
        if max(max_eig(f1.evaluate(zbar)), max_eig(f2.evaluate(zbar))) >= -1e-6:
            continue
        mu1, mu2, lam = best_mu(f1.bordered(), f2.bordered())
        if lam <= 1e-9:
            continue
        assert min_eig(mu1 * f1.bordered() + mu2 * f2.bordered()) > 0
        return SLemmaInstance(f1, f2, zbar, (mu1, mu2))
    raise RuntimeError("no regular instance found")


def f0_gen(inst, seed, perturb=False):
    """A test function for the oracle.

    ``A_Q0 = t1 A_Q1 + t2 A_Q2 - R`` with R PSD, so (III) holds; with
    ``perturb`` a positive rank-one bump is added, which may break (I).
    """
    rng = np.random.default_rng(seed)
    A1, A2 = inst.f1.bordered(), inst.f2.bordered()
    d = A1.shape[0]
    t1, t2 = rng.uniform(0.0, 1.0, 2)
    G = rng.standard_normal((d, d))
    M = t1 * A1 + t2 * A2 - 0.1 * (G @ G.T) / d
    if perturb:
        v = rng.standard_normal(d)
        M = M + rng.uniform(0.5, 5.0) * np.outer(v, v) / (v @ v)
    return Qmi.from_bordered(M, inst.f1.q)


def run_slemma_selftest(n_instances=100, samples=10**4, seed=0, converse_samples=None, shapes=None):
    """Run the oracle over generated instances; returns a JSON-ready report."""
    shapes = shapes or [(3, 1), (2, 1), (3, 2), (4, 2)]
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(n_instances)
    rows = []
    for i, child in enumerate(children):
        s_inst, s_f0, s_i, s_ii = (int(x) for x in child.generate_state(4))
        p, q = shapes[i % len(shapes)]
        inst = regularity_instance_gen(p, q, s_inst)
        f0 = f0_gen(inst, s_f0, perturb=bool(i % 2))
        iii = slemma_check_III(inst, f0.bordered())
        probe = slemma_probe(inst, f0, samples, s_i)
        res_i, res_ii = probe["I"], probe["II"]
        row = {
            "index": i,
            "p": p,
            "q": q,
            "III_found": iii.found,
            "III_status": iii.status,
            "tau": [iii.tau1, iii.tau2],
            "III_margin": iii.margin,
            "I_holds": res_i["holds"],
            "II_holds": res_ii["holds"],
            "feasible_samples": res_i["feasible_samples"],
            "counterexample": res_i["counterexample"],
        }
        if converse_samples and res_i["holds"] and not iii.found:
            deep = slemma_check_I(inst, f0, converse_samples, s_ii)
            row["converse_gap"] = deep["holds"]
        rows.append(row)
    hard = [r["index"] for r in rows if r["III_found"] and not r["I_holds"]]
    strict_mismatch = [r["index"] for r in rows if r["I_holds"] != r["II_holds"]]
    soft = [r["index"] for r in rows if r.get("converse_gap")]
    summary = {
        "instances": n_instances,
        "samples": samples,
        "III_found": sum(r["III_found"] for r in rows),
        "I_holds": sum(r["I_holds"] for r in rows),
        "III_implies_I_failures": hard,
        "strict_filter_mismatches": strict_mismatch,
        "suspected_sampling_gaps": soft,
        "scalar_p3_instances": sum(1 for r in rows if (r["p"], r["q"]) == (3, 1)),
        "passed": not hard and not strict_mismatch,
    }
    return {"summary": summary, "instances": rows}


def lyapunov_oracle(P, K, beta, qmi_T, qmi_ball, samples=10**4, seed=0):
    """End-to-end check: the Lyapunov QMI of a gain holds on the intersection."""
    f0 = lyapunov_qmi(P, K, beta)
    center, _ = ball_center_radius(qmi_ball)
    inst = SLemmaInstance(qmi_T, qmi_ball)
    zbar = center if _both_max(qmi_T, qmi_ball, center[None])[0] <= 0 else None
    return slemma_check_I(inst, f0, samples, seed, zbar=zbar, tol=1e-6)


__all__ = [
    "SampleReport",
    "sample_intersection",
    "closed_loop_sweep",
    "grid_intersection",
    "SLemmaInstance",
    "IIIResult",
    "slemma_check_III",
    "slemma_check_I",
    "regularity_instance_gen",
    "f0_gen",
    "run_slemma_selftest",
    "lyapunov_oracle",
    "spectral_ball_draws",
]
