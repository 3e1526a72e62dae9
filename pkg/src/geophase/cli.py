"""Batch runner for the named experiments.

    geophase list
    geophase run config.toml [--seed N] [--threads N] [--output-dir DIR]

A config names one experiment and its parameters:

    experiment = "spin-berry"
    seed = 1
    [params]
    theta = [0.5236, 1.5708]

JSON with the same keys is accepted too. Each run writes ``<experiment>.csv``,
``summary.json`` and ``manifest.json`` (the fully resolved config plus the
library version) into the output directory. The directory is taken from
--output-dir, then the config's ``output`` key, then $GEOPHASE_OUTPUT_DIR,
then ``./geophase-output``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""
import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

OUTPUT_ENV = "GEOPHASE_OUTPUT_DIR"
DEFAULT_OUTPUT = "geophase-output"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
PI = float(np.pi)


# ---------------------------------------------------------------- schema

@dataclass(frozen=True)
class Param:
    kind: str  # float, int, bool, str, floats, vector, optional-float
    default: object = None
    required: bool = False
    minimum: float = None
    choices: tuple = None


def _coerce(value, spec, path):
    def num(x):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"expected a number, got {x!r}", path)
        return float(x)

    kind = spec.kind
    if kind == "float":
        out = num(value)
    elif kind == "optional-float":
        out = None if value is None or value == "none" else num(value)
    elif kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", path)
        out = int(value)
    elif kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"expected true or false, got {value!r}", path)
        out = value
    elif kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path)
        out = value
    elif kind in ("floats", "vector"):
        if isinstance(value, (int, float)) and not isinstance(value, bool) and kind == "floats":
            value = [value]
        if not isinstance(value, list) or not value:
            raise ConfigError("expected a non-empty list of numbers", path)
        out = [num(x) for x in value]
        if kind == "vector" and len(out) != 3:
            raise ConfigError("expected three components", path)
    else:
        raise AssertionError(kind)
    if spec.minimum is not None and out is not None and kind in ("float", "int", "optional-float"):
        if out < spec.minimum:
            raise ConfigError(f"must be at least {spec.minimum}", path)
    if spec.minimum is not None and kind == "floats" and min(out) < spec.minimum:
        raise ConfigError(f"entries must be at least {spec.minimum}", path)
    if spec.choices is not None and out not in spec.choices:
        raise ConfigError(f"must be one of {', '.join(map(str, spec.choices))}", path)
    return out


@dataclass(frozen=True)
class Experiment:
    name: str
    topic: str
    params: dict
    columns: tuple
    runner: object = field(compare=False, repr=False)

    @property
    def required(self):
        return [k for k, v in self.params.items() if v.required]

    def resolve(self, given):
        given = dict(given or {})
        unknown = sorted(set(given) - set(self.params))
        if unknown:
            raise ConfigError(f"unknown parameter for {self.name}", f"params.{unknown[0]}")
        out = {}
        for key, spec in self.params.items():
            path = f"params.{key}"
            if key in given:
                out[key] = _coerce(given[key], spec, path)
            elif spec.required:
                raise ConfigError("missing required parameter", path)
            else:
                out[key] = spec.default
        return out


# ---------------------------------------------------------------- runners
# Each returns (rows, summary); rows match the experiment's columns.

def _spin_berry(prm, ctx):
    from .spin import RotatingFieldParams, berry_phase, kinematic_gp_numeric
    rows = []
    for th in prm["theta"]:
        row = [th, berry_phase(th, prm["branch"])]
        if prm["numeric"]:
            row.append(kinematic_gp_numeric(RotatingFieldParams(Omega=prm["Omega"], theta=th)))
        else:
            row.append(float("nan"))
        rows.append(row)
    return rows, {}


def _spin_echo(prm, ctx):
    from .spin import echo_persistence_unitary
    th = np.linspace(prm["theta_min"], prm["theta_max"], prm["n_points"])
    return [[t, echo_persistence_unitary(t, prm["adiabatic"], prm["Omega"])] for t in th], {}


def _jc_unitary(prm, ctx):
    from .jc import JCParams, adiabatic_gp_jc, unitary_gp_jc
    rows = []
    for D in prm["Delta"]:
        p = JCParams(Delta=D, g=prm["g"])
        rows.append([D, unitary_gp_jc(p, p.period), adiabatic_gp_jc(p, "+", "kinematic")])
    return rows, {}


def _jc_open(prm, ctx):
    from .jc import JCParams, open_gp_jc
    p = JCParams(Delta=prm["Delta"], gamma=prm["gamma"], p=prm["pump"], g=prm["g"])
    times = np.linspace(0.0, prm["periods"] * p.period, prm["n_points"] + 1)[1:]
    rows = [[t, *open_gp_jc(p, t)] for t in times]
    return rows, {"regime": p.regime, "period": p.period}


def _jc_delta_scan(prm, ctx):
    from .jc import delta_scan
    deltas = np.linspace(prm["Delta_min"], prm["Delta_max"], prm["n_points"])
    vals = delta_scan(deltas, prm["gamma"], prm["pump"], prm["periods"], prm["g"])
    return [[d, v] for d, v in zip(deltas, vals)], {}


def _bipartite_env(prm):
    from .bipartite import BipartiteEnvSpec
    return BipartiteEnvSpec(gamma0=prm["gamma0"], L_tilde=prm["L_tilde"], d_tilde=prm["d_tilde"],
                            pol1=tuple(prm["pol1"]), pol2=tuple(prm["pol2"]))


_BIPARTITE = {
    "gamma0": Param("float", 1e-3, minimum=0.0),
    "L_tilde": Param("float", 7.811, minimum=0.0),
    "d_tilde": Param("optional-float", None, minimum=0.0),
    "pol1": Param("vector", [1.0, 0.0, 0.0]),
    "pol2": Param("vector", [1.0, 0.0, 0.0]),
    "theta0": Param("float", PI / 2),
}


def _bipartite_dynamics(prm, ctx):
    from .bipartite import concurrence, evolve_bipartite
    env = _bipartite_env(prm)
    t = np.linspace(0.0, prm["t_max"], prm["n_points"])
    rhos = evolve_bipartite(env, prm["theta0"], t)
    rows = [[ti, r[0, 0].real, r[1, 1].real, r[3, 3].real, abs(r[3, 0]), concurrence(r, x_state=True)]
            for ti, r in zip(t, rhos)]
    return rows, {"warnings": env.validity_warnings()}


def _bipartite_concurrence(prm, ctx):
    from .bipartite import coherence_decay_time, concurrence_crossings
    env = _bipartite_env(prm)
    cross = concurrence_crossings(env, prm["theta0"], prm["t_max"])
    return [[k, t] for k, t in enumerate(cross)], {"coherence_decay_time": coherence_decay_time(env)}


def _bipartite_gp(prm, ctx):
    from dataclasses import replace
    from .bipartite import approx_gp_bipartite, gp_expansion_bipartite, natural_period, open_gp_bipartite
    base = _bipartite_env(prm)
    rows = []
    for g0 in prm["gamma0_values"]:
        env = replace(base, gamma0=g0)
        phi_g, delta = open_gp_bipartite(env, prm["theta0"], natural_period(env))
        rows.append([g0, phi_g, delta, gp_expansion_bipartite(env, prm["theta0"])[0],
                     approx_gp_bipartite(env, prm["theta0"])])
    return rows, {}


_SLIDING = {
    "omega0_tilde": Param("float", 0.2, minimum=1e-12),
    "Gamma_tilde": Param("float", 1.0, minimum=1e-12),
    "mu2_over_d3": Param("float", 0.005, minimum=0.0),
    "n_hat": Param("vector", [1.0, 0.0, 0.0]),
    "vartheta0": Param("float", PI / 2),
}


def _sliding_spec(prm, v):
    from .sliding import SlidingAtomSpec
    return SlidingAtomSpec(omega0_tilde=prm["omega0_tilde"], Gamma_tilde=prm["Gamma_tilde"], v=v,
                           mu2_over_d3=prm["mu2_over_d3"], n_hat=tuple(prm["n_hat"]),
                           vartheta0=prm["vartheta0"])


def _sliding_dynamics(prm, ctx):
    from .sliding import evolve_sliding, purity, steady_excited_population
    spec = _sliding_spec(prm, prm["v"])
    t = np.linspace(0.0, prm["t_max"], prm["n_points"])
    rhos = evolve_sliding(spec, t)
    rows = [[ti, r[0, 0].real, r[1, 1].real, abs(r[0, 1]), purity(r)] for ti, r in zip(t, rhos)]
    return rows, {"regime": spec.regime, "rho11_steady": steady_excited_population(spec)}


def _sliding_taud(prm, ctx):
    from .sliding import decoherence_ratio_coefficient, decoherence_time, load_materials
    if prm["material"]:
        preset = load_materials()[prm["material"]]
        if prm["atom_index"] >= len(preset.atoms[prm["atom"]]):
            raise ConfigError(f"{prm['material']} lists {len(preset.atoms[prm['atom']])} "
                              f"{prm['atom']} transitions", "params.atom_index")
        prm = dict(prm, omega0_tilde=preset.omega0_tilde(prm["atom"], prm["atom_index"]),
                   Gamma_tilde=preset.Gamma_tilde)
    rows = []
    for v in prm["v_values"]:
        d = decoherence_time(_sliding_spec(prm, v))
        rows.append([v, d.numeric, d.markov, d.ratio])
    coeff = decoherence_ratio_coefficient(prm["omega0_tilde"], prm["Gamma_tilde"])
    return rows, {"omega0_tilde": prm["omega0_tilde"], "ratio_coefficient": coeff}


def _sliding_gp(prm, ctx):
    from .sliding import open_gp_sliding
    rows = []
    for v in prm["v_values"]:
        spec = _sliding_spec(prm, v)
        rows.append([v, *open_gp_sliding(spec, prm["periods"] * spec.natural_period)])
    return rows, {}


def _friction(prm, ctx):
    from .sliding import friction_force
    rows = [[v, friction_force(prm["lambda2g2"], prm["omega"], prm["Omega_mat"], prm["d"], v)]
            for v in prm["v_values"]]
    return rows, {}


_TRAJ = {
    "theta": Param("float", 0.34 * PI),
    "Omega": Param("float", 5e-3, minimum=1e-12),
    "Gamma": Param("float", 1e-3, minimum=0.0),
    "gamma_z": Param("float", 0.0, minimum=0.0),
    "n_traj": Param("int", 10000, minimum=100),
    "n_bins": Param("int", 64, minimum=2),
}


def _traj_setup(prm):
    from .spin import RotatingFieldParams
    from .trajectories import JumpChannelSet
    return (RotatingFieldParams(Omega=prm["Omega"], theta=prm["theta"]),
            JumpChannelSet(Gamma=prm["Gamma"], gamma_z=prm["gamma_z"]))


def _traj_phase(prm, ctx):
    from .trajectories import phase_ensemble
    p, ch = _traj_setup(prm)
    res = phase_ensemble(p, ch, prm["n_traj"], ctx["seed"], n_bins=prm["n_bins"], threads=ctx["threads"])
    d = res.distribution
    return ([[c, w] for c, w in zip(d.bin_centers, d.weights)],
            {"mean_jumps": res.mean_jumps, "jump_error": res.jump_error, "discarded": res.discarded,
             **res.references})


def _traj_echo(prm, ctx):
    from .trajectories import echo_ensemble
    from .phasefun import histogram_peaks
    p, ch = _traj_setup(prm)
    res = echo_ensemble(p, ch, prm["n_traj"], ctx["seed"], n_bins=prm["n_bins"], threads=ctx["threads"])
    d = res.distribution
    classes = {k: res.jump_classes.count(k) for k in sorted(set(res.jump_classes))}
    return ([[c, w] for c, w in zip(d.bin_centers, d.weights)],
            {"mean_jumps": float(res.n_jumps.mean()), "peak_bins": histogram_peaks(d).tolist(),
             "jump_classes": classes})


def _topo_scan(prm, ctx):
    from .trajectories import default_theta_grid, topo_scan
    scan = topo_scan(default_theta_grid(prm["n_linear"]), prm["Omega"], prm["Gamma"])
    return [[t, f] for t, f in zip(scan.theta, scan.phi0)], {"n": scan.n}


def _singularity(prm, ctx):
    from .trajectories import find_singularity, singularity_condition
    bounds = ((prm["Omega_min"], prm["Omega_max"]), (prm["Gamma_min"], prm["Gamma_max"]))
    Om, G = find_singularity(prm["theta"], bounds)
    res = abs(singularity_condition(Om, G, prm["theta"])[0])
    return [[prm["theta"], Om, G, res]], {}


def _registry():
    E = Experiment
    entries = [
        E("spin-berry", "rotating-field spin: adiabatic Berry phase versus exact kinematic phase",
          {"theta": Param("floats", [PI / 6, PI / 3, 0.34 * PI, PI / 2]),
           "Omega": Param("float", 1e-4, minimum=1e-12),
           "branch": Param("str", "+", choices=("+", "-")),
           "numeric": Param("bool", False)},
          ("theta", "phi", "phi_numeric"), _spin_berry),
        E("spin-echo", "rotating-field spin: two-cycle echo persistence probability",
          {"theta_min": Param("float", 0.0), "theta_max": Param("float", PI),
           "n_points": Param("int", 101, minimum=2), "adiabatic": Param("bool", True),
           "Omega": Param("float", 1e-3, minimum=1e-12)},
          ("theta", "persistence"), _spin_echo),
        E("jc-unitary", "atom-mode doublet: closed-system phase over one Rabi period",
          {"Delta": Param("floats", [0.0, 0.1, 2.0, 10.0]), "g": Param("float", 1.0, minimum=1e-12)},
          ("Delta", "phi_u", "phi_adiabatic"), _jc_unitary),
        E("jc-open", "atom-mode doublet with photon loss and pumping: open-system phase in time",
          {"Delta": Param("float", 0.0), "gamma": Param("float", 0.1, minimum=0.0),
           "pump": Param("float", 0.005, minimum=0.0), "g": Param("float", 1.0, minimum=1e-12),
           "periods": Param("float", 3.0, minimum=0.0), "n_points": Param("int", 30, minimum=1)},
          ("t", "phi_g", "delta_phi"), _jc_open),
        E("jc-delta-scan", "atom-mode doublet: phase correction versus detuning",
          {"Delta_min": Param("float", 0.0), "Delta_max": Param("float", 1.0),
           "n_points": Param("int", 21, minimum=2), "gamma": Param("float", 0.1, minimum=0.0),
           "pump": Param("float", 0.005, minimum=0.0), "g": Param("float", 1.0, minimum=1e-12),
           "periods": Param("float", 3.0, minimum=0.0)},
          ("Delta", "delta_phi"), _jc_delta_scan),
        E("bipartite-dynamics", "qubit pair in a shared vacuum: populations, coherence, concurrence",
          {**_BIPARTITE, "t_max": Param("float", 2000.0, minimum=0.0),
           "n_points": Param("int", 201, minimum=2)},
          ("t", "rho11", "rho22", "rho44", "abs_rho41", "concurrence"), _bipartite_dynamics),
        E("bipartite-concurrence", "qubit pair: concurrence death and revival times",
          {**_BIPARTITE, "t_max": Param("float", 5000.0, minimum=0.0)},
          ("index", "t"), _bipartite_concurrence),
        E("bipartite-gp", "qubit pair: open-system phase after one period versus coupling",
          {**_BIPARTITE, "gamma0_values": Param("floats", [1e-4, 1e-3, 1e-2], minimum=0.0)},
          ("gamma0", "phi_g", "delta_phi", "first_order", "approx"), _bipartite_gp),
        E("sliding-dynamics", "atom moving over a dielectric: reduced density matrix in time",
          {**_SLIDING, "v": Param("float", 0.0, minimum=0.0),
           "t_max": Param("float", 2000.0, minimum=0.0), "n_points": Param("int", 201, minimum=2)},
          ("t", "rho11", "rho22", "abs_rho12", "purity"), _sliding_dynamics),
        E("sliding-taud", "atom moving over a dielectric: decoherence time versus velocity",
          {**_SLIDING, "v_values": Param("floats", [0.0, 0.003, 0.01], minimum=0.0),
           "material": Param("str", "", choices=("", "Au", "nSi")),
           "atom": Param("str", "NV", choices=("Rb", "NV")),
           "atom_index": Param("int", 0, minimum=0)},
          ("v", "tau_numeric", "tau_markov", "ratio"), _sliding_taud),
        E("sliding-gp", "atom moving over a dielectric: phase correction versus velocity",
          {**_SLIDING, "mu2_over_d3": Param("float", 0.05, minimum=0.0),
           "v_values": Param("floats", [0.0, 0.02, 0.04, 0.06], minimum=0.0),
           "periods": Param("float", 1.0, minimum=0.0)},
          ("v", "phi_g", "delta_phi", "delta_phi_v0"), _sliding_gp),
        E("friction-force", "particle sliding over an oscillator sheet: quantum friction force",
          {"lambda2g2": Param("float", 1.0, minimum=0.0), "omega": Param("float", 1.0, minimum=0.0),
           "Omega_mat": Param("float", 1.0, minimum=0.0), "d": Param("float", 1.0, minimum=1e-12),
           "v_values": Param("floats", [0.05, 0.1, 0.2, 0.3], minimum=1e-12)},
          ("v", "force"), _friction),
        E("traj-phase-dist", "monitored spin: distribution of trajectory phases", dict(_TRAJ),
          ("bin_center", "probability"), _traj_phase),
        E("traj-echo-dist", "monitored spin: distribution of the echo parameter", dict(_TRAJ),
          ("bin_center", "probability"), _traj_echo),
        E("topo-scan", "monitored spin: no-jump phase across polar angle and its winding number",
          {"Omega": Param("float", 4.8e-3, minimum=1e-12), "Gamma": Param("float", 0.0306, minimum=0.0),
           "n_linear": Param("int", 257, minimum=2)},
          ("theta", "phi0_unwrapped"), _topo_scan),
        E("singularity-find", "monitored spin: parameters where the no-jump return amplitude vanishes",
          {"theta": Param("float", 0.34 * PI), "Omega_min": Param("float", 4.795e-3, minimum=1e-12),
           "Omega_max": Param("float", 4.82e-3, minimum=1e-12), "Gamma_min": Param("float", 0.030, minimum=0.0),
           "Gamma_max": Param("float", 0.0312, minimum=0.0)},
          ("theta", "Omega", "Gamma", "residual"), _singularity),
    ]
    return {e.name: e for e in entries}


REGISTRY = _registry()


def list_experiments():
    """(name, required parameters, topic) for every registered experiment."""
    return [(e.name, e.required, e.topic) for e in REGISTRY.values()]


# ---------------------------------------------------------------- config

def load_config(path):
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from exc
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config: {exc}", str(path)) from exc


def resolve_config(raw, seed=None):
    """Validate a raw config mapping and fill in defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table")
    unknown = sorted(set(raw) - {"experiment", "seed", "output", "params"})
    if unknown:
        raise ConfigError("unknown top-level key", unknown[0])
    name = raw.get("experiment")
    if name not in REGISTRY:
        raise ConfigError(f"unknown experiment {name!r}", "experiment")
    if seed is None:
        seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an integer in [0, 2**64)", "seed")
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params must be a table", "params")
    out = {"experiment": name, "seed": seed, "params": REGISTRY[name].resolve(params)}
    if "output" in raw:
        if not isinstance(raw["output"], str):
            raise ConfigError("output must be a path string", "output")
        out["output"] = raw["output"]
    return out


def output_directory(config, cli_dir=None):
    return Path(cli_dir or config.get("output") or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x)) if np.isfinite(x) else ("nan" if np.isnan(x) else ("inf" if x > 0 else "-inf"))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    return x


def render_csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def run(config, output_dir=None, threads=1):
    """Run a resolved config and write its artifacts; returns the output directory."""
    exp = REGISTRY[config["experiment"]]
    ctx = {"seed": config["seed"], "threads": max(1, int(threads))}
    rows, summary = exp.runner(dict(config["params"]), ctx)
    out = output_directory(config, output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{exp.name}.csv").write_text(render_csv(exp.columns, rows))
    dump = lambda obj: json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"
    (out / "summary.json").write_text(dump(summary))
    manifest = {"version": __version__, "config": config, "columns": list(exp.columns),
                "rows": len(rows)}
    (out / "manifest.json").write_text(dump(manifest))
    return out


# ---------------------------------------------------------------- entry point

def _parser():
    ap = argparse.ArgumentParser(prog="geophase", description="Run geometric-phase experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a TOML or JSON config")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads for trajectory ensembles")
    r.add_argument("--output-dir", default=None,
                   help=f"output directory (default: config 'output', ${OUTPUT_ENV}, ./{DEFAULT_OUTPUT})")
    sub.add_parser("list", help="list the available experiments")
    return ap


def main(argv=None):
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "list":
        width = max(len(n) for n in REGISTRY)
        for name, required, topic in list_experiments():
            need = ", ".join(required) if required else "-"
            print(f"{name:<{width}}  requires: {need:<6}  {topic}")
        return EXIT_OK
    try:
        config = resolve_config(load_config(args.config), seed=args.seed)
        if args.threads < 1:
            raise ConfigError("must be at least 1", "--threads")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = run(config, args.output_dir, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # any failure inside the numerics is a runtime error
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
