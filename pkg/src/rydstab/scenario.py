"""Scenario configs: TOML ingestion, schema validation, and single-scenario runs."""

from __future__ import annotations

import copy
import difflib
import hashlib
import json
import math
import platform
import sys
from dataclasses import dataclass, field
from importlib import metadata, resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import analysis
from .dynamics import ramsey_scan
from .noise import Experiment, NoiseModel, run_monte_carlo
from .pulses import DEFAULT_ANCILLA_OMEGA, build_readout_sequence
from .system import (C6_DATA_INTRA, C6_INTER, AtomSite, AtomSystem, InterSpeciesParams,
                     SpeciesParams, plaquette_side_for, square_plaquette, two_atom_pair,
                     vdw_strength)
from .tables import FringeTable, fmt

DEFAULT_PHASES = 12
DEFAULT_SHOTS = 1000
NOISE_SHORTHANDS = {
    "t2_star": ("t2_star_ancilla", "t2_star_data"),
    "rabi_tau": ("rabi_tau_ancilla", "rabi_tau_data"),
}


class ConfigError(ValueError):
    """Invalid scenario; ``problems`` lists one diagnostic per violation."""

    def __init__(self, problems):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("\n".join(self.problems))


def load_schema() -> dict:
    text = resources.files("rydstab").joinpath("schema/scenario.schema.json").read_text()
    return json.loads(text)


def parse_config(text: str, source: str = "<config>") -> dict:
    try:
        cfg = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    validate_config(cfg, text=text, source=source)
    return cfg


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def _locate(text: str | None, path: list) -> int | None:
    """Best-effort line number of a dotted key in TOML source."""
    if not text or not path:
        return None
    lines = text.splitlines()
    section, key = str(path[0]), str(path[1]) if len(path) > 1 else None
    start = None
    for i, line in enumerate(lines):
        if line.strip() == f"[{section}]":
            start = i
            break
    if start is None:
        return None
    if key is None:
        return start + 1
    for i in range(start + 1, len(lines)):
        s = lines[i].strip()
        if s.startswith("["):
            break
        if s.split("=")[0].strip() == key:
            return i + 1
    return start + 1


def validate_config(cfg: dict, text: str | None = None, source: str = "<config>") -> None:
    validator = Draft202012Validator(load_schema())
    problems = []
    for err in sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.path))):
        where = ".".join(str(p) for p in err.path) or "<root>"
        line = _locate(text, list(err.path))
        prefix = f"{source}:{line}: " if line else f"{source}: "
        problems.append(f"{prefix}{where}: {err.message}")
    if problems:
        raise ConfigError(problems)
    problems = [f"{source}: {p}" for p in _semantic_problems(cfg)]
    if problems:
        raise ConfigError(problems)


def _semantic_problems(cfg: dict) -> list[str]:
    out = []
    sys_cfg, gate = cfg["system"], cfg["gate"]
    geo = sys_cfg["geometry"]
    if geo == "pair" and ("v" in sys_cfg) == ("distance" in sys_cfg):
        out.append("system: a pair needs exactly one of v or distance")
    if geo == "plaquette" and "v" not in sys_cfg and "side" not in sys_cfg:
        out.append("system: a plaquette needs v (ancilla-data interaction) or side")
    if geo == "sites" and "positions" not in sys_cfg:
        out.append("system.positions: required for geometry 'sites'")
    loaded = sys_cfg.get("loaded")
    if isinstance(loaded, list):
        expected = {"pair": 1, "plaquette": 4}.get(geo, len(sys_cfg.get("positions", [])) - 1)
        if len(loaded) != expected:
            out.append(f"system.loaded: expected {expected} entries, got {len(loaded)}")
    if gate["scheme"] == "resonant" and "omega_data" not in gate:
        out.append("gate.omega_data: required for the resonant scheme")
    run = cfg.get("run", {})
    if "load_probability" in sys_cfg and run.get("mode", "unitary") != "mc":
        out.append("system.load_probability: stochastic loading needs run.mode = 'mc'")
    return out


def schema_paths(schema: dict | None = None, prefix: str = "") -> list[str]:
    """All dotted leaf paths accepted by the schema."""
    schema = schema or load_schema()
    out = []
    for key, sub in schema.get("properties", {}).items():
        path = f"{prefix}{key}"
        if "properties" in sub:
            out.extend(schema_paths(sub, path + "."))
        else:
            out.append(path)
    return out


def set_path(cfg: dict, path: str, value) -> dict:
    """Copy of ``cfg`` with dotted ``path`` set; unknown paths get nearest-match hints."""
    valid = schema_paths()
    if path not in valid:
        hints = difflib.get_close_matches(path, valid, n=3, cutoff=0.5)
        msg = f"unknown parameter path {path!r}"
        if hints:
            msg += f"; did you mean {', '.join(hints)}?"
        raise ConfigError(msg)
    out = copy.deepcopy(cfg)
    node = out
    parts = path.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def versions() -> dict:
    import scipy

    try:
        own = metadata.version("rydstab")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"rydstab": own, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


# --- builders ---------------------------------------------------------------

def _species(sys_cfg: dict):
    inter = InterSpeciesParams(sys_cfg.get("c6_inter", C6_INTER))
    data = SpeciesParams("Cs", sys_cfg.get("c6_intra", C6_DATA_INTRA))
    return inter, data


def build_system(cfg: dict, force_unloaded: bool = False) -> AtomSystem:
    s = cfg["system"]
    inter, data_species = _species(s)
    geo = s["geometry"]
    levels = s.get("data_levels", 3)
    initial = s.get("data_initial", "1")
    loaded = s.get("loaded", True)
    if geo == "pair":
        if isinstance(loaded, list):
            loaded = loaded[0]
        system = two_atom_pair(v=s.get("v"), distance=s.get("distance"),
                               data_loaded=bool(loaded) and not force_unloaded,
                               data_initial=initial if isinstance(initial, str) else initial[0],
                               data_levels=levels, inter=inter)
        return AtomSystem(system.sites, data_species=data_species, inter=inter,
                          overrides=system.overrides,
                          include_data_data=s.get("include_data_data", True))
    if geo == "plaquette":
        side = s.get("side") or plaquette_side_for(s["v"], inter.c6_inter)
        pattern = [loaded] * 4 if isinstance(loaded, bool) else list(loaded)
        if force_unloaded:
            pattern = [False] * 4
        return square_plaquette(side, loaded=pattern, initial=initial, data_levels=levels,
                                include_data_data=s.get("include_data_data", True),
                                data_species=data_species, inter=inter)
    positions = s["positions"]
    n_data = len(positions) - 1
    pattern = [loaded] * n_data if isinstance(loaded, bool) else list(loaded)
    inits = [initial] * n_data if isinstance(initial, str) else list(initial)
    if force_unloaded:
        pattern = [False] * n_data
    sites = [AtomSite("ancilla", positions[0], initial="g")]
    sites += [AtomSite("data", p, loaded=l, initial=i, n_levels=levels)
              for p, l, i in zip(positions[1:], pattern, inits)]
    return AtomSystem(tuple(sites), data_species=data_species, inter=inter,
                      include_data_data=s.get("include_data_data", True))


def design_interaction(cfg: dict) -> float:
    """Gate design V: explicit, or the strongest ancilla-data coupling of the geometry."""
    v = cfg["gate"].get("v", "auto")
    if v != "auto":
        return float(v)
    s = cfg["system"]
    inter, _ = _species(s)
    if s["geometry"] in ("pair", "plaquette") and "v" in s:
        return float(s["v"])
    if s["geometry"] == "pair":
        return vdw_strength(inter.c6_inter, s["distance"])
    if s["geometry"] == "plaquette":
        return vdw_strength(inter.c6_inter, s["side"] / math.sqrt(2))
    pos = np.array(s["positions"], dtype=float)
    r = np.min(np.linalg.norm(pos[1:] - pos[0], axis=1))
    return vdw_strength(inter.c6_inter, float(r))


def build_sequence(cfg: dict):
    g = cfg["gate"]
    v = design_interaction(cfg)
    return build_readout_sequence(
        g["scheme"], v=v, n=g.get("n", 1), omega_data=g.get("omega_data"),
        ancilla_omega=g.get("ancilla_omega", DEFAULT_ANCILLA_OMEGA),
        instantaneous=g.get("instantaneous", False),
    )


def build_noise(cfg: dict) -> NoiseModel:
    n = dict(cfg.get("noise", {}))
    if not n:
        return NoiseModel.noiseless()
    preset = n.pop("preset", "default")
    base = NoiseModel() if preset == "default" else NoiseModel.noiseless()
    params = base.to_dict()
    for short, targets in NOISE_SHORTHANDS.items():
        if short in n:
            val = n.pop(short)
            for t in targets:
                params[t] = val
    params.update(n)
    return NoiseModel.from_dict(params)


def phase_grid(cfg: dict) -> np.ndarray:
    ph = cfg.get("run", {}).get("phases", DEFAULT_PHASES)
    if isinstance(ph, int):
        return np.linspace(0.0, 2 * np.pi, ph, endpoint=False)
    return np.asarray(ph, dtype=float)


# --- running ----------------------------------------------------------------

@dataclass
class RunResult:
    config: dict
    tables: dict                      # name -> FringeTable
    fits: dict                        # name -> FringeFit
    scalars: dict = field(default_factory=dict)
    log: list = field(default_factory=list)

    def report(self) -> dict:
        run = self.config.get("run", {})
        return jsonable({
            "config": self.config,
            "config_hash": config_hash(self.config),
            "seed": run.get("seed", 0),
            "versions": versions(),
            "fits": {k: f.report() for k, f in self.fits.items()},
            "scalars": self.scalars,
        })


def apply_overrides(cfg: dict, seed=None, shots=None, mode=None) -> dict:
    cfg = copy.deepcopy(cfg)
    run = cfg.setdefault("run", {})
    if seed is not None:
        run["seed"] = seed
    if shots is not None:
        run["shots"] = shots
    if mode is not None:
        run["mode"] = "mc" if mode in ("mc", "monte_carlo") else mode
    validate_config(cfg)
    return cfg


def _fit(table: FringeTable, resamples: int, seed: int) -> analysis.FringeFit:
    if table.shots is None or resamples == 0:
        return analysis.fit_table(table)
    return analysis.bootstrap(table, resamples=resamples, seed=seed).fit


def run_scenario(cfg: dict) -> RunResult:
    """Run one validated scenario: probe fringe(s), optional unloaded reference, fits."""
    run = cfg.get("run", {})
    mode = run.get("mode", "unitary")
    seed = run.get("seed", 0)
    shots = run.get("shots", DEFAULT_SHOTS)
    resamples = run.get("bootstrap", 300)
    readout = run.get("readout", "rydberg_loss")
    postselect = run.get("postselect")
    phases = phase_grid(cfg)
    sequence = build_sequence(cfg)
    noise = build_noise(cfg)
    has_noise = "noise" in cfg
    log = [f"mode={mode} seed={seed} readout={readout} phases={phases.size}"]
    tables: dict = {}

    def scan(system, name):
        if mode == "mc":
            exp = Experiment(system, sequence, phases, noise, scheme=readout, postselect=postselect,
                             load_probability=cfg["system"].get("load_probability")
                             if name == "probe" else None)
            res = run_monte_carlo(exp, shots, seed)
            log.append(f"{name}: {res.accepted.sum()} of {res.accepted.size} shots accepted")
            if name == "probe" and exp.load_probability is not None and run.get("group_by_loading", True):
                n_sites = sum(s.role == "data" for s in system.sites)
                for n in range(n_sites + 1):
                    t = res.fringe_table(n_loaded=n, label=f"n_loaded={n}")
                    if np.all(t.shots > 0):
                        tables[f"probe_n{n}"] = t
            return res.fringe_table(label=name)
        return ramsey_scan(system, sequence, phases, mode=mode, scheme=readout,
                           postselect=postselect, noise=noise if has_noise else None)

    tables["probe"] = scan(build_system(cfg), "probe")
    if run.get("reference", True):
        tables["reference"] = scan(build_system(cfg, force_unloaded=True), "reference")
    fits = {}
    scalars = {}
    for name, table in tables.items():
        try:
            fits[name] = _fit(table, resamples, seed)
        except analysis.FitError as exc:
            log.append(f"{name}: fit skipped ({exc})")
            continue
        f = fits[name]
        scalars[f"{name}.contrast"] = f.contrast
        scalars[f"{name}.phase"] = f.phase
        scalars[f"{name}.offset"] = f.offset
        scalars[f"{name}.xi_phase"] = f.xi_total["phase"]
        scalars[f"{name}.xi_contrast"] = f.xi_total["contrast"]
    if "probe" in fits and "reference" in fits:
        p, r = fits["probe"], fits["reference"]
        if p.phase_defined and r.phase_defined:
            d = analysis.delta_phi(r, p)
            scalars["delta_phi"] = d
            scalars["delta_phi_over_pi"] = d / np.pi
            scalars["xi_delta_phi"] = math.hypot(p.xi_total["phase"], r.xi_total["phase"])
            log.append(f"delta_phi = {d / np.pi:.6f} pi")
    return RunResult(cfg, tables, fits, scalars, log)


def write_bundle(result: RunResult, out_dir, fmt_: str = "csv", prefix: str | None = None) -> list[Path]:
    """Write tables, JSON report and log; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prefix = prefix or result.config.get("output", {}).get("prefix", "run")
    written = []
    report = result.report()
    if fmt_ == "csv":
        for name, table in result.tables.items():
            p = out / f"{prefix}_{name}.csv"
            table.to_csv(p)
            written.append(p)
    else:
        report["tables"] = {
            name: {"phase_rad": [float(fmt(x)) for x in t.phases],
                   "survival_prob": [float(fmt(x)) for x in t.probs],
                   "shots": None if t.shots is None else t.shots.tolist(),
                   "successes": None if t.successes is None else t.successes.tolist()}
            for name, t in result.tables.items()
        }
    p = out / f"{prefix}_report.json"
    p.write_text(json.dumps(jsonable(report), indent=2, sort_keys=True, default=_json_default) + "\n")
    written.append(p)
    p = out / f"{prefix}.log"
    p.write_text("\n".join(result.log) + "\n")
    written.append(p)
    return written


def jsonable(obj):
    """Recursively replace non-finite floats by strings ("inf", "nan") for strict JSON."""
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(obj):
        return "inf" if obj > 0 else "-inf" if obj < 0 else "nan"
    return obj


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def sweep(cfg: dict, path: str, values) -> tuple[list[str], list[list]]:
    """One run per value; returns (header, rows) in long form."""
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    results = []
    for v in values:
        c = set_path(cfg, path, v)
        validate_config(c)
        results.append(run_scenario(c).scalars)
    keys = sorted(set().union(*results))
    header = ["parameter", "value"] + keys
    rows = [[path, v] + [r.get(k, float("nan")) for k in keys] for v, r in zip(values, results)]
    return header, rows
