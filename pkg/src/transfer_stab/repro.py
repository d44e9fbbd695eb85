"""Case studies and the end-to-end pipeline shared by the CLI modes.

A pipeline run never touches the file system: it returns every artifact as
text so the caller can write them all at once, or none on failure.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from .data import (
    DisturbanceBound,
    LinearSystem,
    check_full_row_rank,
    discretize_zoh,
    dumps_data,
    energy_bound_from_amplitude,
    simulate,
)
from .linalg import spectral_radius
from .sets import (
    ball_center_radius,
    boundary_polylines,
    epsilon_ball,
    inflated_boundary,
    is_compact,
    outer_ball,
    outer_radius,
    qmi_from_data,
    recenter,
    spectral_ball_draws,
)
from .synthesis import (
    InconclusiveError,
    InfeasibleError,
    NumericalFailureError,
    SynthesisOptions,
    check_regularity,
    synthesize,
)
from .verify import closed_loop_sweep, grid_intersection, lyapunov_oracle, sample_intersection

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INFEASIBLE = 2
EXIT_INCONCLUSIVE = 3
EXIT_CONFIG = 4
EXIT_NUMERICAL = 5

REACTOR_G = np.array(
    [
        [1.38, -0.2077, 6.715, -5.676],
        [-0.5814, -4.29, 0.0, 0.675],
        [1.067, 4.273, -6.654, 5.893],
        [0.048, 4.273, 1.343, -2.104],
    ]
)
REACTOR_H = np.array([[0.0, 0.0], [5.679, 0.0], [1.136, -3.146], [1.136, 0.0]])
REACTOR_H_STEP = 0.01


class InputError(ValueError):
    """Bad input data or settings detected while running (exit code 4)."""


@dataclass(frozen=True)
class CaseStudy:
    name: str
    source: LinearSystem
    epsilon: float
    N_T: int
    target_input: float
    delta_T: float
    N_S: int
    source_input: float
    delta_S: float
    x0_amplitude: float = 1.0


def first_order_case():
    return CaseStudy(
        name="first-order",
        source=LinearSystem([[1.021]], [[0.041]]),
        epsilon=0.025,
        N_T=1,
        target_input=10.0,
        delta_T=1.0,
        N_S=200,
        source_input=10.0,
        delta_S=0.1,
    )


def reactor_source():
    return discretize_zoh(REACTOR_G, REACTOR_H, REACTOR_H_STEP)


def reactor_case():
    return CaseStudy(
        name="reactor",
        source=reactor_source(),
        epsilon=0.1,
        N_T=4,
        target_input=50.0,
        delta_T=0.02,
        N_S=100,
        source_input=50.0,
        delta_S=0.01,
    )


CASES = {"repro-first-order": first_order_case, "repro-reactor": reactor_case}


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0
    noisy_source: bool = False
    samples: int = 100
    bound_policy: str = "isotropic"
    grid_points: int = 1000
    oracle_samples: int = 10000
    regularity_tries: int = 10000
    synthesis: SynthesisOptions = SynthesisOptions()


@dataclass
class Outcome:
    code: int
    result: dict
    artifacts: dict
    plot_data: dict


def _streams(seed):
    """Independent generators: target system, target data, source data, sampling."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


def draw_target(source, epsilon, rng):
    """A system within ``epsilon`` of the source: ``Zc + eps*u*G/|G|``."""
    Z = spectral_ball_draws(source.as_z(), epsilon, 1, rng)[0]
    return LinearSystem.from_z(Z, source.n)


def run_experiment(system, N, input_amp, delta, x0_amp, rng):
    x0 = rng.uniform(-x0_amp, x0_amp, system.n)
    U = rng.uniform(-input_amp, input_amp, (system.m, N))
    D = rng.uniform(-delta, delta, (system.n, N)) if delta > 0 else np.zeros((system.n, N))
    return simulate(system, x0, U, D)


def disturbance_bound(data, delta, policy):
    if policy == "isotropic":
        return energy_bound_from_amplitude(data.n, data.N, delta)
    if policy == "realized":
        if data.D0 is None:
            raise InputError("the realized bound needs recorded disturbances")
        return DisturbanceBound(data.D0 @ data.D0.T)
    raise InputError(f"unknown bound policy {policy!r}")


def source_ball(source_data, source_bound, epsilon, known_source=None):
    """Ball for the synthesis LMI plus a JSON summary of the source set.

    With ``known_source`` the ball is centered on it with radius epsilon;
    otherwise the data-consistent source set must be compact and the outer
    ball of its epsilon-neighbourhood is used.
    """
    info = {}
    if source_data is not None:
        info["N"] = source_data.N
        info["full_row_rank"] = bool(check_full_row_rank(source_data))
        qS = qmi_from_data(source_data, source_bound)
        info["compact"] = bool(is_compact(qS))
        if info["full_row_rank"]:
            c = recenter(qS)
            info["center"] = c.center.tolist()
            info["Q"] = c.Q.tolist()
            info["singleton"] = bool(np.max(np.abs(np.linalg.eigvalsh(c.Q))) <= 1e-9 * max(c.scale, 1.0))
    if known_source is not None:
        info["system"] = {"A": known_source.A.tolist(), "B": known_source.B.tolist()}
        info["radius"] = float(epsilon)
        return epsilon_ball(known_source, epsilon), info, None
    if source_data is None:
        raise InputError("need either a known source system or source data")
    if not info["full_row_rank"]:
        raise InputError("source data matrix [X0; U0] does not have full row rank")
    if not info["compact"]:
        raise InputError("source data set is not compact")
    c = recenter(qS)
    r = outer_radius(c, epsilon)
    info["radius"] = r
    return outer_ball(qS, epsilon), info, (qS, c)


def _g(v):
    return "%.17g" % v


def sweep_csv(radii):
    return "index,radius\n" + "".join(f"{i},{_g(r)}\n" for i, r in enumerate(radii))


def eigs_csv(systems, K):
    lines = ["index,real,imag"]
    for i, s in enumerate(systems):
        lam = np.linalg.eigvals(s.closed_loop(K))
        lam = lam[np.lexsort((lam.imag, lam.real))]
        lines += [f"{i},{_g(z.real)},{_g(z.imag)}" for z in lam]
    return "\n".join(lines) + "\n"


def boundary_csv(curves):
    lines = ["set,segment,a,b"]
    for name, segs in curves:
        for j, pts in enumerate(segs):
            lines += [f"{name},{j},{_g(a)},{_g(b)}" for a, b in pts]
    return "\n".join(lines) + "\n"


def scalar_curves(qmi_T, qmi_ball, source_sets, epsilon, true_target, npts=400):
    center, radius = ball_center_radius(qmi_ball)
    a0, b0 = center[:, 0]
    w = 3.0 * radius
    # widen the view until some edge of the target set is visible
    for _ in range(7):
        window = (a0 - w, a0 + w, b0 - w, b0 + w)
        edges = boundary_polylines(qmi_T, window, npts)
        if edges:
            break
        w *= 2.0
    curves = [
        ("target_set_edge", edges),
        ("synthesis_ball", boundary_polylines(qmi_ball, window, npts)),
    ]
    if source_sets is not None:
        qS, c = source_sets
        curves.append(("source_set", boundary_polylines(qS, window, npts)))
        curves.append(("source_neighbourhood", [inflated_boundary(c, epsilon, npts)]))
    curves.append(("true_target", [np.array([[true_target.A[0, 0], true_target.B[0, 0]]])]))
    return curves


def dumps_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def synthesis_step(qmi_T, qmi_ball, settings):
    """Synthesis plus regularity report; returns (exit code, result dict, SynthesisResult or None)."""
    result = {}
    reg = check_regularity(qmi_T, qmi_ball, tries=settings.regularity_tries, seed=settings.seed)
    result["regularity"] = reg.to_dict()
    try:
        syn = synthesize(qmi_T, qmi_ball, settings.synthesis)
    except InfeasibleError as exc:
        result["status"] = "Infeasible"
        result["message"] = str(exc)
        # the LMI is only necessary when the regularity conditions are certified
        result["no_robust_controller_certified"] = reg.satisfied
        return EXIT_INFEASIBLE, result, None
    except InconclusiveError as exc:
        result["status"] = "Inconclusive"
        result["message"] = str(exc)
        return EXIT_INCONCLUSIVE, result, None
    except NumericalFailureError as exc:
        result["status"] = "NumericalFailure"
        result["message"] = str(exc)
        return EXIT_NUMERICAL, result, None
    result["status"] = "Feasible"
    result["synthesis"] = syn.to_dict()
    return EXIT_OK, result, syn


def verification_step(qmi_T, qmi_ball, P, K, beta, settings, rng, held_out=None):
    """Sampled closed-loop check of a gain; returns (summary dict, systems, radii)."""
    K = np.asarray(K, dtype=float)
    rep = sample_intersection(qmi_T, qmi_ball, settings.samples, int(rng.integers(2**32)))
    systems = ([held_out] if held_out is not None else []) + rep.systems
    sweep = closed_loop_sweep(systems, K)
    ver = {
        "samples_requested": rep.requested,
        "samples_accepted": rep.accepted,
        "draws": rep.draws,
        "max_radius": sweep.max_closed_loop_radius,
        "all_stable": bool(all(r < 1 for r in sweep.radii)),
    }
    if held_out is not None:
        ver["target_radius"] = sweep.radii[0]
    if qmi_T.p == 2 and qmi_T.q == 1 and settings.grid_points:
        pts = grid_intersection(qmi_T, qmi_ball, settings.grid_points)
        grid_r = np.abs(pts[:, 0] + pts[:, 1] * K[0, 0])
        ver["grid_points"] = int(len(pts))
        ver["grid_max_radius"] = float(grid_r.max()) if len(pts) else float("nan")
        ver["all_stable"] = ver["all_stable"] and bool(np.all(grid_r < 1))
    if settings.oracle_samples:
        orc = lyapunov_oracle(P, K, beta, qmi_T, qmi_ball, settings.oracle_samples, int(rng.integers(2**32)))
        ver["lyapunov_oracle"] = {k: orc[k] for k in ("holds", "feasible_samples", "samples", "counterexample")}
        ver["passed"] = ver["all_stable"] and orc["holds"]
    else:
        ver["passed"] = ver["all_stable"]
    return ver, systems, sweep.radii


def verify_artifacts(systems, radii, K):
    return {"sweep.csv": sweep_csv(radii), "eigs.csv": eigs_csv(systems, np.asarray(K, dtype=float))}


def plot_payload(systems, radii, K):
    K = np.asarray(K, dtype=float)
    return {"radii": list(radii), "eigs": [np.linalg.eigvals(s.closed_loop(K)) for s in systems]}


def run_case(case, settings, target=None):
    """The full case-study pipeline for one seed."""
    rng_sys, rng_t, rng_s, rng_v = _streams(settings.seed)
    true_target = target if target is not None else draw_target(case.source, case.epsilon, rng_sys)
    if (true_target.n, true_target.m) != (case.source.n, case.source.m):
        raise InputError("target system dimensions do not match the case study")
    tdata = run_experiment(true_target, case.N_T, case.target_input, case.delta_T, case.x0_amplitude, rng_t)
    tbound = disturbance_bound(tdata, case.delta_T, settings.bound_policy)
    qmi_T = qmi_from_data(tdata, tbound)

    delta_S = case.delta_S if settings.noisy_source else 0.0
    sdata = run_experiment(case.source, case.N_S, case.source_input, delta_S, case.x0_amplitude, rng_s)
    sbound = disturbance_bound(sdata, delta_S, settings.bound_policy)
    known = None if settings.noisy_source else case.source
    qmi_ball, source_info, source_sets = source_ball(sdata, sbound, case.epsilon, known)

    code, result, syn = synthesis_step(qmi_T, qmi_ball, settings)
    ver = None
    if syn is not None:
        ver, systems, radii = verification_step(qmi_T, qmi_ball, syn.P, syn.K, syn.beta, settings, rng_v,
                                                held_out=true_target)
        result["verification"] = ver
        code = EXIT_OK if ver["passed"] else EXIT_FAILED
    result.update(
        {
            "case": case.name,
            "seed": settings.seed,
            "noisy_source": settings.noisy_source,
            "epsilon": case.epsilon,
            "bound_policy": settings.bound_policy,
            "true_target": {
                "A": true_target.A.tolist(),
                "B": true_target.B.tolist(),
                "open_loop_radius": spectral_radius(true_target.A),
            },
            "source_open_loop_radius": spectral_radius(case.source.A),
            "source": source_info,
            "target_data": {"N": tdata.N, "bound": tbound.bound.tolist(),
                            "full_row_rank": bool(check_full_row_rank(tdata))},
        }
    )
    artifacts = {
        "result.json": dumps_json(result),
        "data_target.csv": dumps_data(tdata),
        "data_source.csv": dumps_data(sdata),
    }
    plot = {"case": case.name}
    if ver is not None:
        artifacts.update(verify_artifacts(systems, radii, syn.K))
        plot.update(plot_payload(systems, radii, syn.K))
    if case.source.n == 1 and case.source.m == 1:
        curves = scalar_curves(qmi_T, qmi_ball, source_sets, case.epsilon, true_target)
        artifacts["sets_boundary.csv"] = boundary_csv(curves)
        plot["curves"] = curves
    return Outcome(code, result, artifacts, plot)


def with_overrides(case, **kw):
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(case, **kw)
