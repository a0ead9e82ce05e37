"""Command-line pipeline: identify, bound, synthesize, simulate.

Every command reads an optional TOML configuration, applies command-line
overrides and works inside the output directory, which holds ``model.json``
and all emitted artefacts.

Exit codes: 0 success, 2 infeasible synthesis, 3 data/configuration error,
4 solver breakdown.
"""

import argparse
import copy
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as mio
from .bounds import build_bound_report
from .core import OutputMap, SampleSet, dictionary_from_spec
from .edmd import build_data_matrices, empirical_remainder_bound, fit_generator
from .exceptions import DataError, KoopmanObserverError, ParameterError, SolverError
from .lmi import LmiProblem, lyapunov_decrease_check, preflight_check, solve_feasibility
from .sim import fit_decay_rate, run_observer_batch
from .systems import get_system, sample_uniform

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_DATA = 3
EXIT_SOLVER = 4

DEFAULTS = {
    "system": "example_a",
    "output": "out",
    "data": None,
    "validation_data": None,
    "system_params": {},
    "dictionary": None,
    "output_map": None,
    "identify": {"samples": 5000, "seed": 1, "validation_samples": None,
                 "validation_seed": None, "holdout_fraction": 0.2, "rank_tol": 1e-10},
    "bound": {"delta": 0.1, "c_r": "empirical*1.5"},
    "synthesize": {"alpha": [0.1, 0.9], "c_r": "empirical", "gain_cap": 10.0,
                   "lambda_cap": 1e6, "mu": 1e-6, "trace_cap": None, "feas_tol": 1e-7},
    "simulate": {"horizon": 5.0, "step": 1e-3, "runs": 5, "seed": 7, "initial_states": None,
                 "estimate_states": None, "burn_in": 0.1, "figures": True},
}

# Per-system overrides of DEFAULTS.  The CSTR rates are per hour; its
# identified lifted matrix has spectral abscissa near -10.1, which caps alpha.
SYSTEM_DEFAULTS = {
    "example_a": {},
    "cstr": {"synthesize": {"alpha": [0.1, 10.0]},
             "simulate": {"horizon": 1.0}},
}


class ConfigError(DataError):
    pass


def _merge(base, extra, where="config"):
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if key not in out:
            raise ConfigError(f"unknown key {where}.{key}")
        if isinstance(out[key], dict) and key != "system_params":
            if not isinstance(val, dict):
                raise ConfigError(f"{where}.{key} must be a table")
            out[key] = _merge(out[key], val, f"{where}.{key}")
        else:
            out[key] = copy.deepcopy(val)
    return out


def _load_toml(path):
    try:
        import tomllib
    except ImportError:  # Python < 3.11
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc


def load_config(path=None, overrides=None) -> dict:
    """Merge built-in defaults, system defaults, the TOML file and overrides."""
    user = _load_toml(path) if path else {}
    overrides = overrides or {}
    system = overrides.get("system", user.get("system", DEFAULTS["system"]))
    if system not in SYSTEM_DEFAULTS and not (user.get("data") or overrides.get("data")):
        raise ConfigError(f"unknown system {system!r}; available: {sorted(SYSTEM_DEFAULTS)}")
    cfg = _merge(DEFAULTS, SYSTEM_DEFAULTS.get(system, {}))
    cfg = _merge(cfg, user)
    for dotted, val in overrides.items():
        keys = dotted.split(".")
        node = cfg
        for k in keys[:-1]:
            node = node[k]
        node[keys[-1]] = val
    return cfg


def parse_cr(value, empirical):
    """``0.01``, ``"empirical"`` or ``"empirical*1.5"`` (``x`` also accepted)."""
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip().lower().replace("×", "*")
    m = re.fullmatch(r"empirical(?:\s*[*x]\s*([0-9.eE+-]+))?", text)
    if m:
        if empirical is None:
            raise ConfigError("c_r = empirical requires an identified model")
        return float(empirical) * (float(m.group(1)) if m.group(1) else 1.0)
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse c_r value {value!r}") from None


# --------------------------------------------------------------------------
# Shared helpers

def _system(cfg):
    if cfg["system"] in SYSTEM_DEFAULTS:
        try:
            return get_system(cfg["system"], **cfg["system_params"])
        except (TypeError, ParameterError) as exc:
            raise ConfigError(f"bad system parameters: {exc}") from exc
    return None


def _dictionary(cfg, system):
    if cfg["dictionary"]:
        try:
            return dictionary_from_spec(cfg["dictionary"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad dictionary spec: {exc}") from exc
    if system is None:
        raise ConfigError("a [dictionary] table is required when no built-in system is named")
    return system.dictionary


def _output_map(cfg, system):
    if cfg["output_map"]:
        return OutputMap(np.array(cfg["output_map"]["C"], dtype=float))
    if system is None:
        return None
    return system.output


def _samples(cfg, system, dictionary):
    """Training and validation sets, generated or read from CSV."""
    ident = cfg["identify"]
    if cfg["data"]:
        train = mio.read_samples(cfg["data"], n=dictionary.n)
        if cfg["validation_data"]:
            valid = mio.read_samples(cfg["validation_data"], n=dictionary.n)
        else:
            rng = np.random.default_rng(ident["seed"])
            perm = rng.permutation(train.d)
            n_hold = int(round(ident["holdout_fraction"] * train.d))
            if train.d < 2 or n_hold < 1:
                raise DataError("need at least two samples to hold one out for validation")
            hold, keep = perm[:n_hold], perm[n_hold:]
            valid = SampleSet(train.states[hold], train.derivatives[hold])
            train = SampleSet(train.states[keep], train.derivatives[keep])
        return train, valid
    if system is None:
        raise ConfigError("no data file and no built-in system to sample from")
    seed = ident["seed"]
    vseed = ident["validation_seed"] if ident["validation_seed"] is not None else seed + 1000
    vcount = ident["validation_samples"] or ident["samples"]
    return (sample_uniform(system, ident["samples"], seed),
            sample_uniform(system, vcount, vseed))


def _model_path(cfg):
    return Path(cfg["output"]) / "model.json"


def _load_model(cfg):
    return mio.read_model(_model_path(cfg))


def _print(msg=""):
    print(msg, flush=True)


# --------------------------------------------------------------------------
# Commands

def cmd_identify(cfg) -> int:
    system = _system(cfg)
    dictionary = _dictionary(cfg, system)
    cmap = _output_map(cfg, system)
    train, valid = _samples(cfg, system, dictionary)
    X, Y = build_data_matrices(dictionary, train)
    gen = fit_generator(X, Y, cfg["identify"]["rank_tol"])
    c_emp = empirical_remainder_bound(dictionary, gen.A, valid)
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    if not cfg["data"]:
        mio.write_samples(out / "samples.csv", train)
    model = {
        "format": mio.MODEL_FORMAT,
        "format_version": mio.MODEL_FORMAT_VERSION,
        "artifact_version": __version__,
        "metadata": {
            "system": cfg["system"],
            "system_params": {k: v for k, v in sorted(cfg["system_params"].items())},
            "data": cfg["data"],
            "validation_data": cfg["validation_data"],
            "samples": train.d,
            "validation_samples": valid.d,
            "seed": cfg["identify"]["seed"] if not cfg["data"] else None,
            "rank_tol": cfg["identify"]["rank_tol"],
        },
        "dictionary": {"spec": dictionary.spec, "n": dictionary.n, "N": dictionary.N,
                       "labels": dictionary.labels},
        "generator": {
            "A": gen.A,
            "full_form": gen.full_form,
            "residual_fro": gen.residual_fro,
            "relative_residual": gen.residual_fro / max(np.linalg.norm(Y), 1e-300),
            "rank_X": gen.rank_X,
            "rank_deficient": gen.rank_deficient,
            "c_r_empirical": c_emp,
        },
        "output": {"C": cmap.C if cmap is not None else None},
    }
    if system is not None and system.reference_A is not None:
        model["generator"]["reference_A"] = system.reference_A
        model["generator"]["max_abs_error_vs_reference"] = float(
            np.max(np.abs(gen.A - system.reference_A)))
    mio.write_model(_model_path(cfg), model)
    _print(f"identified N={dictionary.N} generator from d={train.d} samples "
           f"(rank {gen.rank_X}, residual {gen.residual_fro:.3e})")
    _print(f"empirical conic remainder bound c_r = {c_emp:.6e}")
    _print(f"model written to {_model_path(cfg)}")
    return EXIT_OK


def cmd_bound(cfg) -> int:
    model = _load_model(cfg)
    system = _system(cfg)
    dictionary = dictionary_from_spec(model["dictionary"]["spec"])
    train, _ = _samples(cfg, system, dictionary)
    c_r = parse_cr(cfg["bound"]["c_r"], model["generator"]["c_r_empirical"])
    rep = build_bound_report(dictionary, train, c_r, cfg["bound"]["delta"])
    model["bound"] = {
        "c_r": rep.c_r, "delta": rep.delta, "A_norm": rep.A_norm, "Cinv_norm": rep.Cinv_norm,
        "c_tilde": rep.c_tilde, "d0_real": rep.d0_real, "d0": rep.d0, "d": train.d,
        "satisfied": rep.satisfied_by(train.d), "mc_points": rep.mc_points,
        "R1": rep.R1, "R2": rep.R2, "Sigma1_sq": rep.Sigma1, "Sigma2_sq": rep.Sigma2,
    }
    mio.write_model(_model_path(cfg), model)
    verdict = "satisfies" if rep.satisfied_by(train.d) else "does NOT satisfy"
    d0 = f"{rep.d0}" if rep.d0 < 10 ** 12 else f"{float(rep.d0):.3e}"
    _print(f"required data d0 = {d0} (c_r = {c_r:.6e}, delta = {rep.delta:g}, "
           f"c_tilde = {rep.c_tilde:.6e})")
    _print(f"available d = {train.d} {verdict} d >= d0")
    return EXIT_OK


def _synthesis_entry(res):
    return {
        "alpha": res.alpha, "c_r": res.c_r, "feasible": res.feasible, "slack": res.slack,
        "lambda": res.lam, "P_phi": res.P_phi, "P_e": res.P_e, "G": res.G,
        "L": res.L if res.L is not None else None,
        "lmi_max_eig": res.lmi_max_eig, "closedloop_abscissa": res.closedloop_abscissa,
        "preflight_abscissa": res.preflight.abscissa, "preflight_passed": res.preflight.passed,
        "certificate": ({name: {"value": c.value, "passed": c.passed}
                         for name, c in res.certificate.checks.items()}
                        if res.certificate else None),
        "message": res.message,
    }


def cmd_synthesize(cfg) -> int:
    model = _load_model(cfg)
    A = mio.matrix(model["generator"]["A"])
    if model["output"]["C"] is None:
        raise ConfigError("no output matrix: give [output_map] C in the config")
    C = mio.matrix(model["output"]["C"])
    syn = cfg["synthesize"]
    c_r = parse_cr(syn["c_r"], model["generator"]["c_r_empirical"])
    alphas = syn["alpha"] if isinstance(syn["alpha"], (list, tuple)) else [syn["alpha"]]
    entries, status = [], EXIT_OK
    for alpha in alphas:
        pre = preflight_check(A, alpha)
        _print(f"alpha = {alpha:g}: {pre}")
        prob = LmiProblem(A=A, C=C, alpha=float(alpha), c_r=c_r, mu=syn["mu"],
                          trace_cap=syn["trace_cap"], gain_cap=syn["gain_cap"],
                          lambda_cap=syn["lambda_cap"], feas_tol=syn["feas_tol"])
        res = solve_feasibility(prob)
        entries.append(_synthesis_entry(res))
        if res.feasible:
            _print(f"alpha = {alpha:g}: feasible, slack {res.slack:.4e}, "
                   f"closed-loop abscissa {res.closedloop_abscissa:.6g}")
            _print("  L = " + np.array2string(res.L.ravel(), precision=6))
        else:
            _print(f"alpha = {alpha:g}: INFEASIBLE ({res.message})")
            status = EXIT_INFEASIBLE
    model["synthesis"] = entries
    mio.write_model(_model_path(cfg), model)
    return status


def _initial_states(cfg, system):
    sim = cfg["simulate"]
    low, high = system.domain
    rng = np.random.default_rng(sim["seed"])
    X0 = rng.uniform(low, high, size=(sim["runs"], system.n))
    Xh = rng.uniform(low, high, size=(sim["runs"], system.n))
    if sim["initial_states"] is not None:
        X0 = np.array(sim["initial_states"], dtype=float).reshape(-1, system.n)
        if sim["estimate_states"] is None:
            Xh = rng.uniform(low, high, size=X0.shape)
    if sim["estimate_states"] is not None:
        Xh = np.array(sim["estimate_states"], dtype=float).reshape(-1, system.n)
    if X0.shape != Xh.shape:
        raise ConfigError("initial_states and estimate_states must have the same length")
    return X0, Xh


def cmd_simulate(cfg) -> int:
    model = _load_model(cfg)
    system = _system(cfg)
    if system is None:
        raise ConfigError("simulation needs a built-in plant (set `system`)")
    designs = [e for e in model.get("synthesis", []) if e["feasible"] and e["L"] is not None]
    if not designs:
        raise DataError("model has no certified observer gain; run `synthesize` first")
    dictionary = dictionary_from_spec(model["dictionary"]["spec"])
    A = mio.matrix(model["generator"]["A"])
    C = mio.matrix(model["output"]["C"])
    sim = cfg["simulate"]
    X0, Xh = _initial_states(cfg, system)
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    rows, plotted = [], []
    for entry in designs:
        alpha = float(entry["alpha"])
        L = mio.matrix(entry["L"])
        recs = run_observer_batch(A, C, L, dictionary, system, X0, Xh, sim["horizon"], sim["step"])
        plotted.append((alpha, recs))
        P_phi, P_e = mio.matrix(entry["P_phi"]), mio.matrix(entry["P_e"])
        for k, rec in enumerate(recs):
            mio.write_simulation_csv(out / f"sim_alpha{alpha:g}_run{k}.csv", rec)
            try:
                fit = fit_decay_rate(rec.times, rec.e_lifted_norm, sim["burn_in"])
                ahat, mhat = fit.alpha_hat, fit.M_hat
            except DataError:  # error already at the floor: no rate to fit
                ahat, mhat = "", ""
            lyap = lyapunov_decrease_check(rec, P_phi, P_e)
            rows.append([alpha, k, ahat, mhat, float(rec.e_lifted_norm.max()),
                         float(rec.e_state_norm[-1]), lyap.violations,
                         "diverged" if rec.diverged else "ok"])
    mio.write_table(out / "summary.csv",
                    ["alpha", "run", "alpha_hat", "M_hat", "max_lifted_error",
                     "final_state_error", "lyapunov_violations", "status"], rows)
    if sim["figures"]:
        unit = "t [h]" if system.units.get("time") == "h" else "t"
        from .plotting import plot_error_decay, plot_trajectories
        plot_trajectories(out / "trajectories.svg", plotted, unit)
        plot_error_decay(out / "error_decay.svg", plotted, unit)
    _print(f"{'alpha':>8} {'run':>3} {'alpha_hat':>10} {'final |x-xhat|':>15} {'lyap':>5}")
    for r in rows:
        rate = f"{r[2]:10.4f}" if r[2] != "" else f"{'-':>10}"
        _print(f"{r[0]:8g} {r[1]:3d} {rate} {r[5]:15.3e} {r[6]:5d}")
    for alpha, _ in plotted:
        fitted = [r[2] for r in rows if r[0] == alpha and r[2] != ""]
        if fitted:
            _print(f"alpha = {alpha:g}: mean fitted decay rate {np.mean(fitted):.4f}")
    if any(r[7] != "ok" for r in rows):
        return EXIT_DATA
    return EXIT_OK


def cmd_pipeline(cfg) -> int:
    for stage in (cmd_identify, cmd_bound, cmd_synthesize, cmd_simulate):
        _print(f"== {stage.__name__[4:]} ==")
        code = stage(cfg)
        if code != EXIT_OK:
            return code
    return EXIT_OK


COMMANDS = {"identify": cmd_identify, "bound": cmd_bound, "synthesize": cmd_synthesize,
            "simulate": cmd_simulate, "pipeline": cmd_pipeline}


def build_parser():
    p = argparse.ArgumentParser(prog="koopman-observer", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="TOML configuration file")
        s.add_argument("--system", help="built-in system: example_a or cstr")
        s.add_argument("--data", help="sample CSV (x1..xn,xdot1..xdotn)")
        s.add_argument("--out", help="output directory (default: out)")
        s.add_argument("--samples", type=int, help="number of generated samples")
        s.add_argument("--seed", type=int, help="sampling seed")
        s.add_argument("--delta", type=float, help="probability tolerance for the bound")
        s.add_argument("--cr", help="error bound: a number, 'empirical' or 'empirical*F'")
        s.add_argument("--alpha", type=float, nargs="+", help="desired convergence rate(s)")
        s.add_argument("--horizon", type=float, help="simulation horizon")
        s.add_argument("--step", type=float, help="RK4 step")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _overrides(args):
    mapping = {"system": "system", "data": "data", "out": "output", "samples": "identify.samples",
               "seed": "identify.seed", "delta": "bound.delta", "alpha": "synthesize.alpha",
               "horizon": "simulate.horizon", "step": "simulate.step"}
    ov = {}
    for attr, key in mapping.items():
        val = getattr(args, attr)
        if val is not None:
            ov[key] = val
    if args.cr is not None:
        ov["bound.c_r"] = args.cr
        ov["synthesize.c_r"] = args.cr
    return ov


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        return COMMANDS[args.command](cfg)
    except SolverError as exc:
        print(f"error: solver breakdown: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DataError, KoopmanObserverError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
