"""Command-line front end.

Exit codes: 0 success, 1 verification or self-test failed, 2 infeasible,
3 inconclusive, 4 configuration or input error, 5 numerical failure.
"""

import argparse
import json
import os
import sys
from importlib import resources

import jsonschema
import numpy as np

from . import repro
from .data import (
    DataFormatError,
    DivergenceError,
    LinearSystem,
    atomic_write_bytes,
    discretize_zoh,
    dumps_data,
    load_data,
)
from .linalg import spectral_radius
from .repro import (
    EXIT_CONFIG,
    EXIT_FAILED,
    EXIT_NUMERICAL,
    EXIT_OK,
    InputError,
    Outcome,
    RunSettings,
    disturbance_bound,
    dumps_json,
    run_experiment,
    source_ball,
)
from .sets import qmi_from_data
from .synthesis import SynthesisOptions
from .verify import run_slemma_selftest

MODES = ("simulate", "synthesize", "verify", "repro-first-order", "repro-reactor", "selftest-slemma")
WRITE_CODES = (0, 1, 2, 3)


class ConfigError(ValueError):
    pass


def load_schema():
    return json.loads(resources.files("transfer_stab").joinpath("config_schema.json").read_text())


def _path(err):
    parts = [str(p) for p in err.absolute_path]
    return "/".join(parts) if parts else "<root>"


def validate_config(cfg):
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        msgs = [f"{_path(e)}: {e.message}" for e in errors]
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(msgs))
    mode = cfg.get("mode")
    if mode is None:
        raise ConfigError("mode: a mode is required (--mode or config 'mode')")
    need = {
        "simulate": ("system", "simulation"),
        "synthesize": ("target_data", "epsilon"),
        "verify": ("target_data", "epsilon", "result_file"),
    }.get(mode, ())
    for key in need:
        if key not in cfg:
            raise ConfigError(f"{key}: required for mode {mode}")
    if mode in ("synthesize", "verify"):
        if ("source_system" in cfg) == ("source_data" in cfg):
            raise ConfigError("source_system/source_data: give exactly one")
        if "source_data" in cfg and "source_delta" not in cfg and cfg.get("bound_policy") != "realized":
            raise ConfigError("source_delta: required with source_data")
        if "target_delta" not in cfg and cfg.get("bound_policy") != "realized":
            raise ConfigError("target_delta: required for mode " + mode)
    return cfg


def build_config(args):
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: not valid JSON ({exc})") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("<root>: configuration must be a JSON object")
    for key in ("mode", "seed", "epsilon", "out", "samples", "target_file"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if args.noisy_source:
        cfg["noisy_source"] = True
    if args.figures:
        cfg["figures"] = True
    return validate_config(cfg)


def settings_from(cfg):
    try:
        opts = SynthesisOptions(**cfg.get("solver", {}))
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from exc
    defaults = RunSettings()
    return RunSettings(
        seed=cfg.get("seed", 0),
        noisy_source=cfg.get("noisy_source", False),
        samples=cfg.get("samples", defaults.samples),
        bound_policy=cfg.get("bound_policy", defaults.bound_policy),
        grid_points=cfg.get("grid_points", defaults.grid_points),
        oracle_samples=cfg.get("oracle_samples", defaults.oracle_samples),
        regularity_tries=cfg.get("regularity_tries", defaults.regularity_tries),
        synthesis=opts,
    )


def _system_from(spec):
    if "A" in spec:
        return LinearSystem(spec["A"], spec["B"])
    return discretize_zoh(spec["G"], spec["H"], spec["h"])


def _load_target_file(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
        return LinearSystem(d["A"], d["B"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"target_file: cannot load system from {path}: {exc}") from exc


def run_repro(cfg):
    case = repro.CASES[cfg["mode"]]()
    exp = cfg.get("experiment", {})
    case = repro.with_overrides(
        case,
        epsilon=cfg.get("epsilon"),
        N_T=exp.get("N_T"),
        N_S=exp.get("N_S"),
        target_input=exp.get("target_input_amplitude"),
        source_input=exp.get("source_input_amplitude"),
        delta_T=exp.get("delta_T"),
        delta_S=exp.get("delta_S"),
        x0_amplitude=exp.get("x0_amplitude"),
    )
    target = _load_target_file(cfg["target_file"]) if cfg.get("target_file") else None
    return repro.run_case(case, settings_from(cfg), target)


def run_simulate(cfg):
    sys_ = _system_from(cfg["system"])
    sim = cfg["simulation"]
    rng = np.random.default_rng(cfg.get("seed", 0))
    data = run_experiment(
        sys_, sim["N"], sim.get("input_amplitude", 1.0), sim.get("disturbance_amplitude", 0.0),
        sim.get("x0_amplitude", 1.0), rng,
    )
    summary = {"mode": "simulate", "n": data.n, "m": data.m, "N": data.N,
               "open_loop_radius": spectral_radius(sys_.A)}
    return Outcome(EXIT_OK, summary, {"data_simulated.csv": dumps_data(data)}, {})


def _sets_from(cfg, settings):
    try:
        tdata = load_data(cfg["target_data"])
        sdata = load_data(cfg["source_data"]) if "source_data" in cfg else None
    except OSError as exc:
        raise InputError(f"cannot read data file: {exc}") from exc
    tbound = disturbance_bound(tdata, cfg.get("target_delta", 0.0), settings.bound_policy)
    qmi_T = qmi_from_data(tdata, tbound)
    if sdata is not None:
        sbound = disturbance_bound(sdata, cfg.get("source_delta", 0.0), settings.bound_policy)
        qmi_ball, info, _ = source_ball(sdata, sbound, cfg["epsilon"])
    else:
        known = LinearSystem(cfg["source_system"]["A"], cfg["source_system"]["B"])
        qmi_ball, info, _ = source_ball(None, None, cfg["epsilon"], known)
    if (qmi_T.p, qmi_T.q) != (qmi_ball.p, qmi_ball.q):
        raise InputError("target data and source description have different dimensions")
    return qmi_T, qmi_ball, info


def run_synthesize(cfg):
    settings = settings_from(cfg)
    qmi_T, qmi_ball, info = _sets_from(cfg, settings)
    code, result, _ = repro.synthesis_step(qmi_T, qmi_ball, settings)
    result.update({"mode": "synthesize", "epsilon": cfg["epsilon"], "source": info,
                   "sets": {"target": qmi_T.to_dict(), "ball": qmi_ball.to_dict()}})
    return Outcome(code, result, {"result.json": dumps_json(result)}, {})


def run_verify(cfg):
    settings = settings_from(cfg)
    qmi_T, qmi_ball, _ = _sets_from(cfg, settings)
    try:
        with open(cfg["result_file"]) as fh:
            prev = json.load(fh)
        syn = prev["synthesis"]
        K, P, beta = np.array(syn["K"], dtype=float), np.array(syn["P"], dtype=float), float(syn["beta"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"result_file: no synthesis result in {cfg['result_file']}: {exc}") from exc
    held = _load_target_file(cfg["target_file"]) if cfg.get("target_file") else None
    rng = np.random.default_rng(np.random.SeedSequence(settings.seed).spawn(4)[3])
    ver, systems, radii = repro.verification_step(qmi_T, qmi_ball, P, K, beta, settings, rng, held)
    ver["mode"] = "verify"
    arts = {"verify.json": dumps_json(ver)}
    arts.update(repro.verify_artifacts(systems, radii, K))
    code = EXIT_OK if ver["passed"] else EXIT_FAILED
    return Outcome(code, ver, arts, repro.plot_payload(systems, radii, K))


def run_selftest(cfg):
    rep = run_slemma_selftest(
        n_instances=cfg.get("instances", 100),
        samples=cfg.get("oracle_samples", 10**4) or 10**4,
        seed=cfg.get("seed", 0),
    )
    code = EXIT_OK if rep["summary"]["passed"] else EXIT_FAILED
    return Outcome(code, rep["summary"], {"slemma_report.json": dumps_json(rep)}, {})


DISPATCH = {
    "simulate": run_simulate,
    "synthesize": run_synthesize,
    "verify": run_verify,
    "repro-first-order": run_repro,
    "repro-reactor": run_repro,
    "selftest-slemma": run_selftest,
}


def _check_paths(cfg, names):
    out = os.path.abspath(cfg.get("out", "out"))
    targets = {os.path.join(out, n) for n in names}
    for key in ("target_data", "source_data", "result_file", "target_file"):
        p = cfg.get(key)
        if p and os.path.abspath(p) in targets:
            raise ConfigError(f"{key}: input path would be overwritten by an output artifact")
    if os.path.exists(out) and not os.path.isdir(out):
        raise ConfigError(f"out: {out} exists and is not a directory")
    return out


def write_artifacts(out, artifacts):
    os.makedirs(out, exist_ok=True)
    for name in sorted(artifacts):
        payload = artifacts[name]
        if isinstance(payload, str):
            payload = payload.encode("utf-8")
        atomic_write_bytes(os.path.join(out, name), payload)


def run(cfg):
    """Execute a validated configuration; returns (exit code, Outcome or None)."""
    outcome = DISPATCH[cfg["mode"]](cfg)
    if outcome.code in WRITE_CODES:
        arts = dict(outcome.artifacts)
        if cfg.get("figures") and outcome.plot_data:
            from .plotting import render

            arts.update(render(outcome.plot_data))
        out = _check_paths(cfg, arts)
        write_artifacts(out, arts)
    return outcome.code, outcome


def _summary_lines(cfg, outcome):
    r = outcome.result
    lines = [f"mode: {cfg['mode']}", f"exit_code: {outcome.code}"]
    if "status" in r:
        lines.append(f"status: {r['status']}")
    syn = r.get("synthesis")
    if syn:
        lines.append("K: " + json.dumps(syn["K"]))
        lines.append(f"beta: {syn['beta']:.6g}")
    ver = r.get("verification", r if "max_radius" in r else None)
    if ver:
        lines.append(f"max_closed_loop_radius: {ver['max_radius']:.6g}")
        lines.append(f"all_stable: {ver['all_stable']}")
    if "passed" in r and "instances" in r:
        lines.append(f"selftest_passed: {r['passed']}")
    if outcome.code in WRITE_CODES:
        lines.append(f"out: {os.path.abspath(cfg.get('out', 'out'))}")
    return lines


def make_parser():
    ap = argparse.ArgumentParser(prog="transfer-stab", description="Data-based transfer stabilization.")
    ap.add_argument("--config", metavar="PATH", help="JSON configuration file")
    ap.add_argument("--mode", choices=MODES)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--epsilon", type=float)
    ap.add_argument("--noisy-source", action="store_true", help="use noisy source data (outer-ball path)")
    ap.add_argument("--out", metavar="DIR", help="artifact directory (default ./out)")
    ap.add_argument("--samples", type=int, help="intersection samples for the sweep")
    ap.add_argument("--target-file", metavar="PATH", help="JSON {A, B} pinning the true target")
    ap.add_argument("--figures", action="store_true", help="also render PNG figures")
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        code, outcome = run(cfg)
    except (ConfigError, InputError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for line in _summary_lines(cfg, outcome):
        print(line)
    if code != EXIT_OK and "message" in outcome.result:
        print(outcome.result["message"], file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
