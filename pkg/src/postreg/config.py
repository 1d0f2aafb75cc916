"""Run configuration: JSON schema, defaults, and construction of plant/regulator objects."""

import copy
import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .builtins import exosystem_polynomial
from .checks import (
    SampleGrid,
    check_assumption_Dee,
    check_assumption_P_L,
    check_back,
    check_blockdiag_P_implies_M,
    check_contraction,
    check_minors,
    check_positivity,
    plant_grid,
    plant_input_field,
)
from .errors import ConfigError
from .gains import (
    build_L_back,
    build_L_contraction,
    build_L_minors,
    build_L_negativity,
    build_L_positivity,
    synthesize_gains,
)
from .normal_form import build_signature
from .plant import (
    ExamplePlantParams,
    LinearOracleData,
    example_L,
    example_P,
    make_example_plant,
    make_linear_oracle_plant,
)
from .regulator import RegulatorConfig, phi_from_polynomial

__all__ = [
    "SCHEMA",
    "load_config",
    "normalize_config",
    "dump_config",
    "bundled_config_path",
    "build_plant",
    "build_regulator",
    "initial_state",
    "run_checks",
    "set_param",
]

_num = {"type": "number"}
_vec = {"type": "array", "items": _num}
_mat = {"type": "array", "items": _vec}
_grid = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "scheme": {"enum": ["grid", "sobol", "random"]},
        "count": {"oneOf": [{"type": "integer", "minimum": 1},
                            {"type": "array", "items": {"type": "integer", "minimum": 1}}]},
        "x_box": _mat,
        "seed": {"type": "integer", "minimum": 0},
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["plant"],
    "properties": {
        "plant": {
            "type": "object",
            "additionalProperties": False,
            "required": ["builtin"],
            "properties": {
                "builtin": {"enum": ["example", "linear_oracle"]},
                "params": {"type": "object"},
            },
        },
        "signature": {
            "type": "object",
            "additionalProperties": False,
            "required": ["p", "N", "r_e"],
            "properties": {
                "p": {"type": "array", "items": {"type": "integer"}},
                "N": {"type": "array", "items": {"type": "integer"}},
                "r_e": {"type": "integer"},
            },
        },
        "gains": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["example", "explicit", "minors", "positivity",
                                    "negativity", "back", "contraction"]},
                "L": _mat,
                "K": _mat,
                "M": _mat,
                "kappa": _num,
                "G_minus": _mat,
                "G_plus": _mat,
                "delta0": _num,
                "epsilon": _num,
                "grid": _grid,
            },
        },
        "internal_model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "d": {"type": "integer"},
                "phi": {"oneOf": [{"type": "string"}, _mat]},
                "L_phi": _num,
                "h": _vec,
                "g": _num,
            },
        },
        "stabilizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ell": _num,
                "k": _vec,
                "k1": _num,
                "ratio": _num,
                "alpha_rows": {"type": "array", "items": _vec},
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "horizon": _num,
                "solver": {"enum": ["rk45", "rk4"]},
                "rtol": _num,
                "atol": _num,
                "step": _num,
                "report_dt": _num,
                "threshold": _num,
                "tail_fraction": _num,
                "fd_step": _num,
                "seed": {"type": "integer", "minimum": 0},
                "initial_state": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"w": _vec, "x": _vec, "eta": _vec},
                },
            },
        },
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["type"],
                "properties": {
                    "type": {"enum": ["minors", "P_L", "Dee", "positivity", "contraction",
                                      "back", "blockdiag_P"]},
                    "epsilon": _num,
                    "P": {"oneOf": [{"enum": ["example"]}, _mat]},
                    "L": _mat,
                    "M": {"oneOf": [{"enum": ["blockdiag_P"]}, _mat]},
                    "K": _mat,
                    "G_minus": _mat,
                    "G_plus": _mat,
                    "kappa": _num,
                    "delta0": _num,
                    "probe_count": {"type": "integer", "minimum": 1},
                    "grid": _grid,
                },
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "trajectory": {"type": "boolean"},
            },
        },
    },
}

_DEFAULTS = {
    "internal_model": {"d": 5, "phi": "zero", "g": 5.0},
    "stabilizer": {"ell": 5.0, "k1": 5.0, "ratio": 2.0},
    "sim": {"horizon": 200.0, "solver": "rk45", "rtol": 1e-8, "atol": 1e-10, "step": 1e-3,
            "report_dt": 0.01, "threshold": 1e9, "tail_fraction": 0.2, "seed": 0},
    "checks": [],
    "outputs": {"trajectory": True},
}


def bundled_config_path(name):
    """Path of a configuration shipped with the package (e.g. ``example_q0.cfg``)."""
    ref = resources.files("postreg") / "configs" / name
    return Path(str(ref))


def normalize_config(cfg):
    """Validate against `SCHEMA` and fill defaults. Idempotent."""
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}", field=where) from None
    out = copy.deepcopy(cfg)
    out.setdefault("plant", {}).setdefault("params", {})
    for key, defaults in _DEFAULTS.items():
        if isinstance(defaults, dict):
            merged = dict(defaults)
            merged.update(out.get(key, {}))
            out[key] = merged
        else:
            out.setdefault(key, copy.deepcopy(defaults))
    out.setdefault("gains", {"method": "example" if out["plant"]["builtin"] == "example" else "explicit"})
    out["gains"].setdefault("method", "explicit")
    if out["internal_model"]["d"] < 1:
        raise ConfigError(f"internal_model.d must satisfy d >= 1, got {out['internal_model']['d']}",
                          field="internal_model.d")
    if out["stabilizer"]["ell"] <= 0:
        raise ConfigError("stabilizer.ell must be positive", field="stabilizer.ell")
    if out["internal_model"]["g"] <= 0:
        raise ConfigError("internal_model.g must be positive", field="internal_model.g")
    if out["sim"]["horizon"] <= 0:
        raise ConfigError("sim.horizon must be positive", field="sim.horizon")
    return out


def load_config(path):
    """Read, schema-check and normalize a configuration file.

    A bare file name that does not exist is looked up among the bundled configs.
    """
    path = Path(path)
    if not path.exists():
        alt = bundled_config_path(path.name)
        if alt.exists():
            path = alt
        else:
            raise ConfigError(f"config file not found: {path}", field="path")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})", field="path") from None
    return normalize_config(cfg)


def dump_config(cfg):
    return json.dumps(cfg, indent=2, sort_keys=True)


_PARAM_ALIASES = {
    "g": ("internal_model", "g"),
    "d": ("internal_model", "d"),
    "ell": ("stabilizer", "ell"),
    "k1": ("stabilizer", "k1"),
    "ratio": ("stabilizer", "ratio"),
    "q": ("plant", "params", "q"),
    "alpha": ("plant", "params", "alpha"),
    "m": ("plant", "params", "m"),
    "horizon": ("sim", "horizon"),
}


def set_param(cfg, name, value):
    """Copy of ``cfg`` with a sweep parameter set (alias or dotted path)."""
    path = _PARAM_ALIASES.get(name, tuple(name.split(".")))
    out = copy.deepcopy(cfg)
    node = out
    for key in path[:-1]:
        node = node.setdefault(key, {})
    if path[-1] in ("d",):
        value = int(value)
    node[path[-1]] = value
    return normalize_config(out)


# ---------------------------------------------------------------------------
# object construction


def _arr(v):
    return None if v is None else np.asarray(v, dtype=float)


def build_plant(cfg):
    spec = cfg["plant"]
    params = dict(spec.get("params", {}))
    if spec["builtin"] == "example":
        allowed = {"q", "alpha", "m", "W_radius"}
        bad = set(params) - allowed
        if bad:
            raise ConfigError(f"unknown example plant params: {sorted(bad)}", field="plant.params")
        plant = make_example_plant(ExamplePlantParams(**params))
    else:
        allowed = {"chain_length", "exo_freqs", "a", "A_z", "b_z", "c_z", "P", "P_z", "Q", "W_radius"}
        bad = set(params) - allowed
        if bad:
            raise ConfigError(f"unknown linear_oracle params: {sorted(bad)}", field="plant.params")
        if "exo_freqs" in params:
            params["exo_freqs"] = tuple(params["exo_freqs"])
        for key in ("a", "A_z", "b_z", "c_z", "P", "P_z", "Q"):
            if key in params:
                params[key] = _arr(params[key])
        plant = make_linear_oracle_plant(LinearOracleData(**params))
    if "signature" in cfg:
        s = cfg["signature"]
        sig = build_signature(s["p"], s["N"], s["r_e"])
        if sig != plant.sig:
            raise ConfigError(f"signature {sig} does not match the plant's {plant.sig}",
                              field="signature")
    return plant


def _grid_for(plant, spec, seed):
    spec = spec or {}
    x_box = spec.get("x_box", [[-10.0, 10.0]] * plant.n_x)
    return plant_grid(plant, x_box, scheme=spec.get("scheme", "sobol"),
                      count=spec.get("count", 4096), seed=spec.get("seed", seed))


def _build_L(cfg, plant):
    g = cfg["gains"]
    method = g["method"]
    seed = cfg["sim"]["seed"]

    def need(key):
        if key not in g:
            raise ConfigError(f"gains.{key} is required for method {method!r}", field=f"gains.{key}")
        return np.asarray(g[key], dtype=float)

    if method == "example":
        if plant.name != "example":
            raise ConfigError("gains.method 'example' needs the example plant", field="gains.method")
        return example_L(ExamplePlantParams(**cfg["plant"]["params"]))
    if method == "explicit":
        return need("L") if "L" in g else np.eye(plant.n_u, plant.sig.n_y)
    if method == "positivity":
        return build_L_positivity(need("K"))
    if method == "negativity":
        return build_L_negativity(need("M"), float(need("kappa")))
    if method == "back":
        return build_L_back(need("K"), need("G_minus"), need("G_plus"), float(need("kappa")))
    if method == "contraction":
        return build_L_contraction(need("M"), float(need("delta0")))[0]
    grid = _grid_for(plant, g.get("grid"), seed)
    B_fn = plant.at("B")
    L, _ = build_L_minors([B_fn(p) for p in grid.points()], float(g.get("epsilon", 1e-3)))
    return L


def build_regulator(cfg, plant):
    im, st = cfg["internal_model"], cfg["stabilizer"]
    d = int(im["d"])
    L = _build_L(cfg, plant)
    k = st.get("k")
    if k is None:
        k = [st["k1"] * st["ratio"] ** i for i in range(plant.sig.r)]
    gains = synthesize_gains(plant.sig, L, im["g"], st["ell"], d, h=im.get("h"),
                             alpha_rows=st.get("alpha_rows"), k=k)
    phi = im["phi"]
    if phi == "exosystem":
        freqs = plant.params["data"].exo_freqs if plant.name == "linear_oracle" else ()
        coeffs = exosystem_polynomial(freqs)
        if len(coeffs) > d:
            raise ConfigError("d is smaller than the exosystem order", field="internal_model.d")
        phi = phi_from_polynomial(np.concatenate([coeffs, np.zeros(d - len(coeffs))]), plant.sig.n_e)
    return RegulatorConfig(d, phi, gains, L_phi=im.get("L_phi"))


def initial_state(cfg, plant, config):
    ic = cfg["sim"].get("initial_state", {})
    return dict(
        w=np.asarray(ic.get("w", np.zeros(plant.n_w)), dtype=float),
        x=np.asarray(ic.get("x", np.zeros(plant.n_x)), dtype=float),
        eta=np.asarray(ic.get("eta", np.zeros(config.n_eta)), dtype=float),
    )


def run_checks(cfg, plant, config):
    """Evaluate every configured check; returns a list of `CheckReport`."""
    reports = []
    seed = cfg["sim"]["seed"]
    B_fn = plant.at("B")
    gains = config.gains
    for spec in cfg["checks"]:
        kind = spec["type"]
        grid = _grid_for(plant, spec.get("grid"), seed)
        if kind == "minors":
            rep = check_minors(B_fn, grid, float(spec.get("epsilon", 1e-3)))
        elif kind == "positivity":
            rep = check_positivity(B_fn, _arr(spec["K"]), grid)
        elif kind == "contraction":
            rep = check_contraction(B_fn, _arr(spec["M"]), float(spec["delta0"]), grid)
        elif kind == "back":
            rep = check_back(B_fn, _arr(spec["K"]), _arr(spec["G_minus"]), _arr(spec["G_plus"]),
                             float(spec["kappa"]), grid, probe_count=spec.get("probe_count", 100),
                             seed=seed)
        elif kind in ("P_L", "blockdiag_P", "Dee"):
            P_spec = spec.get("P", "example")
            if P_spec == "example":
                if plant.name != "example":
                    raise ConfigError("P 'example' needs the example plant", field="checks.P")
                P0 = example_P(ExamplePlantParams(**cfg["plant"]["params"]))
                P_fn = lambda p, _P=P0: _P(*plant.split(p))
            else:
                P_const = _arr(P_spec)
                P_fn = lambda p, _P=P_const: _P
            if kind == "P_L":
                L = _arr(spec["L"]) if "L" in spec else gains.L
                rep = check_assumption_P_L(P_fn, L, B_fn, grid,
                                           input_field=plant_input_field(plant), seed=seed)
            elif kind == "blockdiag_P":
                rep = check_blockdiag_P_implies_M(P_fn, plant.sig.n_e, grid)
            else:
                M_spec = spec.get("M", [[1.0]])
                if M_spec == "blockdiag_P":
                    bd = check_blockdiag_P_implies_M(P_fn, plant.sig.n_e, grid)
                    if not bd.passed:
                        reports.append(bd)
                        continue
                    M_fn = bd.induced
                else:
                    M_fn = _arr(M_spec)
                rep = check_assumption_Dee(M_fn, plant, gains, grid, seed=seed)
        else:  # pragma: no cover - the schema rejects other names
            raise ConfigError(f"unknown check {kind!r}", field="checks.type")
        reports.append(rep)
    return reports
