"""Scenario runner: ``bimodal run``, ``bimodal validate`` and ``bimodal --list``."""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .evolve import GUARD_DEFAULT, GuardError, TimeSeries, classify_parity, collapse_revival, evolve_series, \
    format_number, variance_series
from .hilbert import build_space
from .lindblad import IntegrationError, LindbladParams, integrate, steady_state, vibrational_operator
from .models import MissingParameter, ModelSpec, build_model, dark_hamiltonian, ion_parity_model, validate_trap
from .operators import angular_momentum_z, number, parity, projector_op, schwinger, spin_op
from .protocols import bimodal_cat_readout, circular_cat_fringes, parity_cat, qnd_projection
from .states import MotionalMixture, StateVector, TruncationError, fidelity, make_state, spatial_density

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OUTPUT_ENV = "BIMODAL_OUTPUT_DIR"
EXIT_OK, EXIT_INVALID, EXIT_GUARD = 0, 2, 3
DEFAULT_OBSERVABLES = ["n1", "n2", "sz"]
TABLE_KEYS = {
    "model": {"tag", "params", "interaction_picture", "F", "G"},
    "space": {"atom_dim", "cutoff1", "cutoff2"},
    "times": {"start", "stop", "stop_scaled", "num"},
}


class ConfigError(ValueError):
    """Configuration failed schema or physics validation."""


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ScenarioConfig:
    scenario: str
    model: dict = field(default_factory=dict)
    space: dict = field(default_factory=dict)
    initial_state: dict = field(default_factory=dict)
    times: dict = field(default_factory=dict)
    observables: list = field(default_factory=list)
    output_dir: str = "output"
    guard: float = GUARD_DEFAULT
    seed: int = 0
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "scenario" not in data:
            raise ConfigError("config is missing 'scenario'")
        cfg = cls(**copy.deepcopy(data))
        if not isinstance(cfg.observables, list):
            raise ConfigError("'observables' must be a list of names")
        for name in ("model", "space", "initial_state", "times", "params"):
            if not isinstance(getattr(cfg, name), dict):
                raise ConfigError(f"'{name}' must be a table")
        for name, allowed in TABLE_KEYS.items():
            extra = sorted(set(getattr(cfg, name)) - allowed)
            if extra:
                raise ConfigError(f"unknown keys in [{name}]: {', '.join(extra)}")
        try:
            cfg.guard = float(cfg.guard)
            cfg.seed = int(cfg.seed)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad guard/seed: {exc}") from None
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """sha256 of the canonical JSON form, excluding the output directory."""
        data = self.to_dict()
        data.pop("output_dir")
        text = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(text.encode()).hexdigest()


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        if path.suffix == ".json":
            data = json.loads(raw)
        else:
            data = tomllib.loads(raw.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return ScenarioConfig.from_dict(data)


def preset_path(name: str):
    return resources.files("bimodal") / "scenarios" / f"{name}.toml"


def load_preset(name: str) -> ScenarioConfig:
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; known: {', '.join(sorted(SCENARIOS))}")
    ref = preset_path(name)
    if not ref.is_file():
        raise ConfigError(f"scenario {name!r} has no preset file")
    return ScenarioConfig.from_dict(tomllib.loads(ref.read_text()))


def _parse_value(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text


def apply_overrides(cfg: ScenarioConfig, pairs) -> ScenarioConfig:
    """Apply ``key=value`` or ``table.key=value`` overrides; values are JSON or bare strings."""
    data = cfg.to_dict()
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, value = pair.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-table")
        node[parts[-1]] = _parse_value(value.strip())
    return ScenarioConfig.from_dict(data)


# ---------------------------------------------------------------------------
# shared helpers


def _need(cfg: ScenarioConfig, *paths):
    missing = []
    for path in paths:
        node = cfg.to_dict()
        for p in path.split("."):
            if not isinstance(node, dict) or p not in node:
                missing.append(path)
                break
            node = node[p]
    if missing:
        raise ConfigError(f"scenario {cfg.scenario!r} needs: {', '.join(missing)}")


def _space(cfg: ScenarioConfig, n_auto: int | None = None):
    sp = cfg.space
    atom_dim = int(sp.get("atom_dim", 2))
    cuts = []
    for key in ("cutoff1", "cutoff2"):
        val = sp.get(key, "auto")
        if val == "auto":
            if n_auto is None:
                raise ConfigError(f"space.{key} = 'auto' is not supported by scenario {cfg.scenario!r}")
            val = n_auto
        cuts.append(int(val))
    return build_space(atom_dim, *cuts)


def _grid(times: dict, scale: float = 1.0) -> np.ndarray:
    """``{start, stop, num}``; ``stop`` may be replaced by ``stop_scaled`` (a multiple of ``scale``)."""
    start = float(times.get("start", 0.0))
    if "stop_scaled" in times:
        stop = float(times["stop_scaled"]) * scale
    elif "stop" in times:
        stop = float(times["stop"])
    else:
        raise ConfigError("times needs 'stop' or 'stop_scaled'")
    num = int(times.get("num", 1001))
    if num < 2 or stop < start:
        raise ConfigError("times must have num >= 2 and stop >= start")
    return np.linspace(start, stop, num)


def _complex(v):
    if isinstance(v, dict):
        return complex(v.get("re", 0.0), v.get("im", 0.0))
    if isinstance(v, (list, tuple)):
        return complex(*v)
    return complex(v)


def _state_spec(spec: dict) -> dict:
    out = {}
    for k, v in spec.items():
        out[k] = _complex(v) if isinstance(v, dict) and set(v) <= {"re", "im"} else v
    return out


def _observables(space, names) -> dict:
    table = {
        "n1": lambda: number(space, 1),
        "n2": lambda: number(space, 2),
        "sz": lambda: spin_op(space, "Sz"),
        "P_minus": lambda: projector_op(space, 0, 0),
        "P_plus": lambda: projector_op(space, 1, 1),
        "excitations": lambda: number(space, 1) + number(space, 2) + spin_op(space, "Sz") + 0.5,
        "J1": lambda: schwinger(space, 1),
        "J2": lambda: schwinger(space, 2),
        "J3": lambda: schwinger(space, 3),
        "Lz": lambda: angular_momentum_z(space),
        "parity1": lambda: parity(space, 1),
        "parity2": lambda: parity(space, 2),
    }
    unknown = [n for n in names if n not in table]
    if unknown:
        raise ConfigError(f"unknown observables {unknown}; known: {sorted(table)}")
    return {n: table[n]() for n in names}


@dataclass
class Result:
    series: dict = field(default_factory=dict)  # file stem -> TimeSeries or (header, rows)
    summary: dict = field(default_factory=dict)


def _table_csv(header, rows, comment) -> str:
    lines = [f"# {comment}", ",".join(header)]
    for row in rows:
        lines.append(",".join(format_number(v) for v in row))
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _jsonable(obj.real), "im": _jsonable(obj.imag)}
    return obj


# ---------------------------------------------------------------------------
# scenarios


def run_evolve(cfg: ScenarioConfig) -> Result:
    """Ad-hoc unitary run of any model from any initial state."""
    _need(cfg, "model.tag", "model.params", "space.cutoff1", "space.cutoff2", "initial_state.family", "times")
    space = _space(cfg)
    try:
        spec = ModelSpec.from_dict(cfg.model)
        model = build_model(spec, space)
    except (MissingParameter, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from None
    psi0 = make_state(_state_spec(cfg.initial_state), space, tail_tol=cfg.guard)
    ops = _observables(space, cfg.observables or DEFAULT_OBSERVABLES)
    ts = evolve_series(model, psi0, _grid(cfg.times), ops, cfg.guard)
    return Result({cfg.scenario: ts}, {
        "model": model.tag,
        "conserved_residuals": model.conserved_residuals(),
        "leaked_norm": float(ts.leaked_norm[-1]),
    })


def run_fig2(cfg: ScenarioConfig) -> Result:
    """Degenerate one-photon exchange with collapse-revival envelope."""
    _need(cfg, "model.tag", "model.params", "space.cutoff1", "space.cutoff2", "initial_state.family", "times.stop")
    res = run_evolve(cfg)
    ts = res.series[cfg.scenario]
    space = _space(cfg)
    n_tot = evolve_series(build_model(ModelSpec.from_dict(cfg.model), space),
                          make_state(_state_spec(cfg.initial_state), space), ts.times,
                          {"excitations": _observables(space, ["excitations"])["excitations"]}, cfg.guard)
    drift = float(np.max(np.abs(n_tot["excitations"].real - n_tot["excitations"][0].real)))
    window = float(cfg.params.get("envelope_window", 30.0))
    cr = collapse_revival(ts.times, ts["n1"].real, window)
    res.summary.update({
        "excitation_drift": drift,
        "collapse_revival": cr.to_dict(),
        "revival_exceeds_1p5": bool(cr.ratio > 1.5 and cr.min_time > ts.times[0]),
    })
    return res


def run_fig5(cfg: ScenarioConfig) -> Result:
    """Two-photon parity effect: transfer vs reabsorption for even/odd n."""
    _need(cfg, "model.params.lam1", "params.n", "times.stop")
    res = Result()
    labels = {}
    for n in cfg.params["n"]:
        n = int(n)
        space = _space(cfg, n)
        model = build_model(ModelSpec.from_dict(cfg.model), space)
        psi0 = make_state({"family": "fock", "n1": n, "n2": 0, "atom": 0}, space)
        ts = evolve_series(model, psi0, _grid(cfg.times), _observables(space, cfg.observables or ["n1", "n2"]),
                           cfg.guard)
        cls = classify_parity(ts.times, ts["n1"].real, n, smooth=float(cfg.params.get("smooth", 1.0)))
        res.series[f"fig5_n{n}"] = ts
        labels[n] = cls.label
        res.summary[f"n{n}"] = {**cls.to_dict(), "conserved_residuals": model.conserved_residuals(),
                                "leaked_norm": float(ts.leaked_norm[-1])}
    res.summary["classifications_differ"] = len(set(labels.values())) == len(labels) > 1
    return res


def _ion_runs(cfg: ScenarioConfig):
    _need(cfg, "params.N", "times")
    omega_p = float(cfg.params.get("omega_prime", 1.0))
    for N in cfg.params["N"]:
        N = int(N)
        space = _space(cfg, N)
        model = ion_parity_model(space, omega_p)
        psi0 = make_state({"family": "rotated_fock", "N": N, "theta": math.pi / 4, "atom": 0}, space)
        t_n = math.pi * N / omega_p
        yield N, space, model, psi0, t_n, omega_p


def run_ion_parity(cfg: ScenarioConfig) -> Result:
    """<J1(t)> of the ion parity model against the large-N closed form."""
    res = Result()
    tol = float(cfg.params.get("tolerance", 0.05))
    for N, space, model, psi0, t_n, omega_p in _ion_runs(cfg):
        times = _grid(cfg.times, t_n)
        ts = evolve_series(model, psi0, times, {"J1": schwinger(space, 1)}, cfg.guard)
        j1 = ts["J1"].real
        formula = N / 2 * np.cos(omega_p * times / N) ** (N - 1)
        dev = np.abs(j1 - formula)
        end = evolve_series(model, psi0, [t_n], {"J1": schwinger(space, 1)}, cfg.guard)["J1"].real[0]
        expected = (-1) ** (N - 1) * N / 2
        ts.values.update({"formula": formula, "deviation": dev})
        res.series[f"ion_parity_N{N}"] = ts
        res.summary[f"N{N}"] = {
            "t_N": t_n,
            "max_deviation": float(dev.max()),
            "max_deviation_rel": float(dev.max() / (N / 2)),
            "J1_tN": float(end),
            "J1_tN_expected": expected,
            "deviation_ok": bool(dev.max() <= tol * N / 2),
            "endpoint_ok": bool(abs(end - expected) <= tol * abs(expected)),
            "leaked_norm": float(ts.leaked_norm[-1]),
        }
    return res


def run_j2_variance(cfg: ScenarioConfig) -> Result:
    """(Delta J2)^2 at t_N/2 for even and odd N."""
    res = Result()
    for N, space, model, psi0, t_n, _ in _ion_runs(cfg):
        j2 = schwinger(space, 2)
        ts = variance_series(model, psi0, _grid(cfg.times, t_n), j2, cfg.guard)
        half = variance_series(model, psi0, [t_n / 2], j2, cfg.guard)["variance"][0]
        res.series[f"j2_variance_N{N}"] = ts
        bound = N ** 2 / 8 if N % 2 else 5 * N
        res.summary[f"N{N}"] = {
            "variance_half": float(half),
            "bound": bound,
            "bound_kind": "lower" if N % 2 else "upper",
            "ok": bool(half >= bound if N % 2 else half <= bound),
        }
    return res


def run_qnd(cfg: ScenarioConfig) -> Result:
    """Null-fluorescence projection of |alpha, beta> onto a pair coherent state."""
    _need(cfg, "params.alpha2", "params.beta2", "params.q_target", "params.n_measurements")
    p = cfg.params
    space = _space(cfg)
    trace = qnd_projection(math.sqrt(float(p["alpha2"])), math.sqrt(float(p["beta2"])), int(p["q_target"]), int(p["n_measurements"]),
                           float(p.get("omega_lx", 2.0)), float(p.get("omega_ly", 1.0)), float(p.get("chi", 0.0049)),
                           space, p.get("schedule", "greedy"))
    ex = trace.extras
    elapsed = np.cumsum(ex["times"])
    probs = np.cumprod([s.record.probability for s in trace.steps])
    rows = list(zip(range(1, len(elapsed) + 1), elapsed, ex["schedule_l"], probs, ex["fidelity_history"]))
    res = Result({"qnd_pair_cs": (["measurement", "t", "l", "success_probability", "fidelity"], rows)})
    res.summary = {"success_probability": trace.success_probability, "final_fidelity": ex["final_fidelity"],
                   "schedule_l": ex["schedule_l"], "reproduces_0172": ex["reproduces_0172"],
                   "target_ladder_weight": ex["target_ladder_weight"], "trace": trace.to_dict()}
    return res


def run_spatial_cat(cfg: ScenarioConfig) -> Result:
    """Spatial density of the circular-quanta cat and its matched mixture."""
    _need(cfg, "params.N")
    p = cfg.params
    N = int(p["N"])
    space = _space(cfg, N)
    fr = circular_cat_fringes(N, p.get("radius"), int(p.get("n_angles", 720)), space)
    ext, num = float(p.get("extent", 8.0)), int(p.get("grid", 81))
    x = np.linspace(-ext, ext, num)
    left = make_state({"family": "circular_fock", "n_r": 0, "n_l": N}, space)
    right = make_state({"family": "circular_fock", "n_r": N, "n_l": 0}, space)
    cat = StateVector(space, left.amplitudes + 1j * right.amplitudes)
    d_cat = spatial_density(cat, x, x)
    d_mix = spatial_density(MotionalMixture.of([left, right]), x, x)
    gx, gy = np.meshgrid(x, x, indexing="ij")
    grid_rows = zip(gx.ravel(), gy.ravel(), d_cat.ravel(), d_mix.ravel())
    ang_rows = zip(fr["phi"], fr["cat"], fr["mixture"])
    return Result({
        "spatial_cat_density": (["x", "y", "cat", "mixture"], grid_rows),
        "spatial_cat_angular": (["phi", "cat", "mixture"], ang_rows),
    }, {"radius": fr["radius"], "var_cat": fr["var_cat"], "var_mixture": fr["var_mixture"],
        "variance_ratio": fr["ratio"], "fringes": bool(fr["ratio"] > 10)})


def run_cat_readout(cfg: ScenarioConfig) -> Result:
    """Bimodal cat readout probability against its closed form."""
    _need(cfg, "params.alpha2", "params.beta2", "params.chi", "times")
    p = cfg.params
    chi = float(p["chi"])
    space = _space(cfg)
    times = _grid(cfg.times, math.pi / chi)  # stop_scaled = 1 covers phi in [0, 2 pi]
    ts = bimodal_cat_readout(math.sqrt(float(p["alpha2"])), math.sqrt(float(p["beta2"])), chi, times, space,
                             cfg.guard)
    max_diff = float(ts["abs_diff"].max())
    return Result({"cat_readout": ts}, {"max_abs_diff": max_diff, "ok": bool(max_diff <= 1e-6),
                                        "leaked_norm": float(ts.leaked_norm[-1])})


def run_dark_pair(cfg: ScenarioConfig) -> Result:
    """Dissipative preparation of a dark pair coherent state."""
    _need(cfg, "params.xi", "params.q", "params.gamma", "space.cutoff1", "space.cutoff2")
    p = cfg.params
    space = _space(cfg)
    xi, q = _complex(p["xi"]), int(p["q"])
    model = dark_hamiltonian(vibrational_operator("pair", {}), xi, float(p.get("omega", 1.0)), space)
    rho0 = make_state(_state_spec(cfg.initial_state or {"family": "fock", "n1": q, "n2": 0}), space).density()
    lp = LindbladParams(float(p["gamma"]))
    target = make_state({"family": "pair_coherent", "xi": xi, "q": q}, space)
    traj = integrate(model, lp, rho0, float(p.get("t_end", 20.0)), float(p.get("dt", 0.5)))
    fids = [fidelity(target, r) for r in traj.states]
    ss = steady_state(model, lp, rho0)
    f_ss = fidelity(target, ss.state)
    rows = zip(traj.times, traj.excited_population(), fids, traj.traces())
    return Result({"dark_pair_cs": (["t", "P_plus", "fidelity", "trace"], rows)}, {
        "fidelity": f_ss, "fluorescence_rate": ss.fluorescence_rate, "converged": ss.converged,
        "dark": ss.dark, "residual": ss.residual, "settle_time": ss.time,
        "ok": bool(f_ss >= 0.999 and ss.fluorescence_rate < 1e-6 * lp.gamma),
    })


def run_su2_cat(cfg: ScenarioConfig) -> Result:
    """SU(2) cats conditioned on the ground electronic state."""
    _need(cfg, "params.N")
    res = Result()
    rows = []
    for N in cfg.params["N"]:
        N = int(N)
        trace = parity_cat(N, float(cfg.params.get("omega_prime", 1.0)), _space(cfg, N))
        ex = trace.extras
        rows.append((N, ex["time"], trace.success_probability, ex["target_fidelity"], ex["nonclassicality"]))
        res.summary[f"N{N}"] = {**{k: v for k, v in ex.items()}, "success_probability": trace.success_probability,
                                "ok": bool(ex["target_fidelity"] >= 0.95)}
    res.series["su2_cat"] = (["N", "t", "success_probability", "fidelity", "nonclassicality"], rows)
    return res


SCENARIOS = {
    "fig2": run_fig2,
    "fig5": run_fig5,
    "ion_parity": run_ion_parity,
    "j2_variance": run_j2_variance,
    "qnd_pair_cs": run_qnd,
    "spatial_cat": run_spatial_cat,
    "cat_readout": run_cat_readout,
    "dark_pair_cs": run_dark_pair,
    "su2_cat": run_su2_cat,
}
ADHOC = {"evolve": run_evolve}


# ---------------------------------------------------------------------------
# validation


def validate(cfg: ScenarioConfig) -> list[str]:
    """Schema and physics checks; returns human-readable violations, warnings and notices."""
    report = []
    if cfg.scenario not in SCENARIOS and cfg.scenario not in ADHOC:
        report.append(f"error: unknown scenario {cfg.scenario!r}")
    if cfg.guard <= 0:
        report.append("error: guard must be positive")
    trap = cfg.params.get("trap")
    if trap is not None:
        try:
            check = validate_trap(float(trap["nu_x"]), float(trap["nu_y"]), float(trap["nu_z"]))
        except (KeyError, TypeError, ValueError) as exc:
            report.append(f"error: trap needs nu_x, nu_y, nu_z ({exc})")
        else:
            for w in check.warnings:
                report.append(("violation: " if not check.valid and "violates" in w else "warning: ") + w)
    init = cfg.initial_state
    if init.get("family") == "coherent":
        for mode in (1, 2):
            alpha = abs(_complex(init.get(f"alpha{mode}", 0)))
            cut = cfg.space.get(f"cutoff{mode}")
            need = alpha ** 2 + 5 * alpha + 10
            if isinstance(cut, (int, float)) and alpha > 0 and cut < need:
                report.append(f"warning: cutoff{mode}={cut} below |alpha|^2 + 5|alpha| + 10 = {need:.1f}")
    if not cfg.observables and cfg.scenario in ("evolve", "fig2", "fig5"):
        report.append(f"notice: empty observables defaulted to {DEFAULT_OBSERVABLES}")
    if cfg.model:
        try:
            ModelSpec.from_dict(cfg.model).require()
        except (MissingParameter, ValueError, KeyError) as exc:
            report.append(f"error: model: {exc}")
    return report


# ---------------------------------------------------------------------------
# execution


def write_result(cfg: ScenarioConfig, result: Result, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    comment = f"config_sha256={cfg.digest()} scenario={cfg.scenario}"
    written = []
    for stem, data in result.series.items():
        path = out_dir / f"{stem}.csv"
        if isinstance(data, TimeSeries):
            text = data.to_csv(comment=comment)
        else:
            header, rows = data
            text = _table_csv(header, rows, comment)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
        written.append(path)
    summary = {"scenario": cfg.scenario, "config_sha256": cfg.digest(), "config": cfg.to_dict(),
               "results": result.summary, "files": [p.name for p in written]}
    summary["config"].pop("output_dir")
    path = out_dir / f"{cfg.scenario}.json"
    with open(path, "w", newline="\n") as fh:
        fh.write(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    written.append(path)
    return written


def execute(cfg: ScenarioConfig) -> tuple[int, str]:
    """Run one scenario; returns (exit code, message)."""
    runner = SCENARIOS.get(cfg.scenario) or ADHOC.get(cfg.scenario)
    if runner is None:
        return EXIT_INVALID, f"unknown scenario {cfg.scenario!r}"
    errors = [r for r in validate(cfg) if r.startswith(("error", "violation"))]
    if errors:
        return EXIT_INVALID, "; ".join(errors)
    np.random.seed(cfg.seed)
    try:
        result = runner(cfg)
    except ConfigError as exc:
        return EXIT_INVALID, str(exc)
    except (GuardError, TruncationError, IntegrationError) as exc:
        return EXIT_GUARD, f"numerical guard: {exc}"
    paths = write_result(cfg, result, Path(cfg.output_dir))
    return EXIT_OK, "wrote " + ", ".join(str(p) for p in paths)


def _execute_safe(cfg):
    try:
        return execute(cfg)
    except ConfigError as exc:
        return EXIT_INVALID, str(exc)


def _resolve(args) -> list[ScenarioConfig]:
    cfgs = [load_config(p) for p in args.configs]
    cfgs += [load_preset(name) for name in args.scenario or []]
    if not cfgs:
        raise ConfigError("nothing to run: give a config file or --scenario NAME")
    out = []
    for cfg in cfgs:
        cfg = apply_overrides(cfg, args.set)
        if args.output_dir:
            cfg.output_dir = args.output_dir
        elif os.environ.get(OUTPUT_ENV):
            cfg.output_dir = os.environ[OUTPUT_ENV]
        if args.guard is not None:
            cfg.guard = args.guard
        if args.seed is not None:
            cfg.seed = args.seed
        out.append(cfg)
    return out


def _print_list():
    for name in sorted(SCENARIOS):
        doc = (SCENARIOS[name].__doc__ or "").strip().splitlines()
        print(name if not doc else f"{name}\t{doc[0]}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bimodal", description="Run two-mode light-matter scenarios.")
    parser.add_argument("--list", action="store_true", help="print the scenario registry and exit")
    sub = parser.add_subparsers(dest="command")
    run = sub.add_parser("run", help="run config files or named presets")
    run.add_argument("configs", nargs="*", help="TOML or JSON config files")
    run.add_argument("--scenario", action="append", help="preset name (repeatable)")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
    run.add_argument("--list", action="store_true", help="print the scenario registry and exit")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--output-dir")
    run.add_argument("--guard", type=float)
    run.add_argument("--seed", type=int)
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list:
        _print_list()
        return EXIT_OK
    if args.command == "validate":
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            print(f"error: {exc}")
            return EXIT_INVALID
        report = validate(cfg)
        for line in report:
            print(line)
        if not report:
            print("ok")
        return EXIT_INVALID if any(r.startswith(("error", "violation")) for r in report) else EXIT_OK
    if args.command != "run":
        build_parser().print_help()
        return EXIT_INVALID
    try:
        cfgs = _resolve(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.jobs > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_execute_safe, cfgs))
    else:
        outcomes = [_execute_safe(c) for c in cfgs]
    code = EXIT_OK
    for cfg, (status, message) in zip(cfgs, outcomes):
        stream = sys.stdout if status == EXIT_OK else sys.stderr
        print(f"[{cfg.scenario}] {message}", file=stream)
        code = max(code, status)
    return code


if __name__ == "__main__":
    sys.exit(main())
