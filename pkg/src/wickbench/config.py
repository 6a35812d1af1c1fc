"""TOML experiment configs: loading, defaults and strict validation."""
from __future__ import annotations

import copy
import sys
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("identities", "gff-cov", "fps-law", "expansion", "multiscale", "gmc",
               "sausage", "collar")


class ConfigError(ValueError):
    """Raised for unreadable, ill-typed or unknown configuration entries."""


def _num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _pos(x):
    return _num(x) and x > 0


def _posint(x):
    return _int(x) and x > 0


def _numlist(x):
    return isinstance(x, list) and len(x) > 0 and all(_num(v) for v in x)


def _intlist(x):
    return isinstance(x, list) and len(x) > 0 and all(_int(v) for v in x)


def _str(x):
    return isinstance(x, str)


UNIFORM = {"shape": (_str, "disk"), "scale": (_pos, 1.0), "mesh": (_pos, 1 / 32)}
ZOOM = {"shape": (_str, "zoom"), "scale": (_pos, 1.0), "n_theta": (_posint, 16),
        "depth": (_pos, 20.0)}

# experiment -> {key: (check, default)}; nested dicts are TOML tables
SCHEMAS: dict[str, dict] = {
    "identities": {
        "n_change_var": (_posint, 12), "n_binomial": (_posint, 12), "n_exp_gen": (_posint, 12),
        "n_two_var": (_posint, 10), "n_laguerre_norm": (_posint, 12), "n_reexp": (_posint, 8),
        "n_combi": (_posint, 11), "n_recurrence": (_posint, 12),
        "group_cap": (_posint, 10), "group_trials": (_posint, 100),
        "subgroup_cap": (_posint, 12), "subgroup_trials": (_posint, 20),
        "nullspace_N": (_intlist, [4, 6, 8]),
        "series_v": (_numlist, [0.5, 1.0, 2.0]), "series_t": (_numlist, [0.5, 1.0, 2.0, 5.0]),
        "series_N": (_posint, 30),
        "bounds": {"series_abs": (_pos, 1e-12), "k0_abs": (_pos, 1e-9),
                   "potential_abs": (_pos, 1e-10), "slope_abs": (_pos, 0.05),
                   "runtime_s": (_pos, 10.0)},
    },
    "gff-cov": {
        "domain": dict(UNIFORM, mesh=(_pos, 1 / 16)),
        "orders": (_intlist, [1, 2, 3]), "pairs": (_posint, 20), "samples": (_posint, 200000),
        "chunk": (_posint, 5000),
        "bounds": {"z_max": (_pos, 4.0), "min_pairs": (_posint, 19), "runtime_s": (_pos, 180.0)},
    },
    "fps-law": {
        "v": (_pos, 1.0), "a": (_num, 0.0),
        "mass_domain": dict(UNIFORM, mesh=(_pos, 1 / 32)), "mass_samples": (_posint, 2000),
        "ks_domain": dict(UNIFORM, mesh=(_pos, 1 / 64)),
        "coarse_domain": dict(UNIFORM, mesh=(_pos, 1 / 32)),
        "ks_samples": (_posint, 1000), "ks_seeds": (_posint, 3), "chunk": (_posint, 250),
        "bounds": {"mass_se": (_pos, 3.0), "ks_max": (_pos, 0.08), "ks_wins": (_posint, 2)},
    },
    "expansion": {
        "domain": dict(ZOOM), "v": (_pos, 1.0), "a": (_num, 0.0),
        "t_grid": (_numlist, [4.0, 6.0, 8.0, 12.0, 16.0]), "samples": (_posint, 6000),
        "N_trunc": (_int, 2), "chunk": (_posint, 250),
        "mass_domain": dict(UNIFORM, mesh=(_pos, 1 / 32)), "mass_samples": (_posint, 2000),
        "bounds": {"mc_se": (_pos, 3.0), "mesh_tol": (_pos, 0.02), "ratio_lo": (_pos, 0.9),
                   "ratio_hi": (_pos, 1.1), "mass_rel": (_pos, 0.1)},
    },
    "multiscale": {
        "domain": dict(ZOOM), "v": (_pos, 1.0), "a": (_num, 0.0), "base_t": (_pos, 4.0),
        "alphas_a": (_numlist, [1.0, 2.0]), "alphas_b": (_numlist, [1.0, 3.0]),
        "samples": (_posint, 8000), "chunk": (_posint, 250),
        "bounds": {"agree_se": (_pos, 5.0), "mass_se": (_pos, 4.0)},
    },
    "gmc": {
        "domain": dict(ZOOM, n_theta=(_posint, 8), depth=(_pos, 600.0)),
        "v": (_pos, 1.0), "a": (_num, 0.0),
        "gammas": (_numlist, [0.4, 0.2, 0.1]), "psi_t": (_pos, 16.0),
        "groups": (_posint, 10), "seeds_per_group": (_posint, 3),
        "samples_per_seed": (_posint, 100), "chunk": (_posint, 100),
        "point_domain": dict(UNIFORM, mesh=(_pos, 1 / 32)), "point_samples": (_posint, 20),
        "point_gamma": (_pos, 0.1),
        "bounds": {"fraction": (_pos, 0.8), "point_rel": (_pos, 0.1)},
    },
    "sausage": {
        "M": (lambda x: _num(x) and x >= 0, 0.0), "eps": (_numlist, [1e-2, 1e-3]), "paths": (_posint, 500),
        "dt0": (_pos, 1e-3), "probes": (_posint, 400),
        "pair_paths": (_posint, 2000), "pair_cell": (_pos, 0.08), "pairs": (_posint, 10),
        "mass_inputs": (_posint, 100), "mass_n_max": (_posint, 4),
        "bounds": {"ratio_lo": (_pos, 0.85), "ratio_hi": (_pos, 1.15), "pair_z": (_pos, 4.0),
                   "min_pairs": (_posint, 9), "mass_residual": (_pos, 1e-12),
                   "runtime_s": (_pos, 300.0)},
    },
    "collar": {
        "domain": dict(ZOOM), "v": (_pos, 0.3), "a": (_num, 0.0), "k": (_intlist, [1, 2]),
        "q_grid": (_numlist, [2.0, 2.52, 3.17, 4.0, 5.04, 6.35, 8.0]),
        "samples": (_posint, 500), "chunk": (_posint, 250),
        "compare_v": (_numlist, [1.0]),
        "bounds": {"slope_tol": (_pos, 0.2)},
    },
}

COMMON = {"experiment": (_str, None), "seed": (_int, 0), "out_dir": (_str, "")}


def _fill(schema: dict, given: dict, where: str) -> dict:
    out = {}
    unknown = set(given) - set(schema)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(sorted(unknown))}")
    for key, spec in schema.items():
        path = f"{where}.{key}" if where else key
        if isinstance(spec, dict):
            sub = given.get(key, {})
            if not isinstance(sub, dict):
                raise ConfigError(f"{path} must be a table")
            out[key] = _fill(spec, sub, path)
            continue
        check, default = spec
        if key in given:
            val = given[key]
            if isinstance(default, float) and _int(val):
                val = float(val)
            if isinstance(default, list) and isinstance(val, list) and default and isinstance(default[0], float):
                val = [float(v) if _int(v) else v for v in val]
            if not check(val):
                raise ConfigError(f"invalid value for {path}: {val!r}")
            out[key] = val
        else:
            out[key] = copy.deepcopy(default)
    return out


def _check_domain(d: dict, where: str):
    shape = d.get("shape")
    if shape == "zoom":
        if "mesh" in d:
            raise ConfigError(f"{where}: zoom domains take n_theta/depth, not mesh")
    elif shape in ("disk", "square"):
        if "n_theta" in d or "depth" in d:
            raise ConfigError(f"{where}: uniform domains take mesh, not n_theta/depth")
    else:
        raise ConfigError(f"{where}.shape must be disk, square or zoom")


def validate(raw: dict, experiment: str | None = None) -> dict:
    """Full config with defaults filled in; raises ConfigError on any problem."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table")
    exp = raw.get("experiment", experiment)
    if exp is None:
        raise ConfigError("missing 'experiment'")
    if exp not in SCHEMAS:
        raise ConfigError(f"unknown experiment {exp!r}")
    if experiment is not None and exp != experiment:
        raise ConfigError(f"config is for {exp!r}, not {experiment!r}")
    schema = dict(COMMON, **SCHEMAS[exp])
    body = dict(raw)
    body.setdefault("experiment", exp)
    cfg = _fill(schema, body, "")
    for key, val in raw.items():
        if isinstance(SCHEMAS[exp].get(key), dict) and key.endswith("domain"):
            _check_domain(dict(cfg[key], **val), key)
    for key in SCHEMAS[exp]:
        if key.endswith("domain"):
            d = cfg[key]
            if d["shape"] == "zoom":
                d.pop("mesh", None)
            _check_domain(d, key)
    if exp == "expansion" and not 0 <= cfg["N_trunc"] <= 4:
        raise ConfigError("N_trunc must lie in 0..4")
    if exp == "gff-cov" and any(not 1 <= n <= 4 for n in cfg["orders"]):
        raise ConfigError("orders must lie in 1..4")
    for key in ("v",):
        if key in cfg and "a" in cfg and not cfg["a"] < cfg[key]:
            raise ConfigError("level a must lie below the boundary value v")
    return cfg


def load(path: str | Path | None, experiment: str | None = None) -> dict:
    """Read and validate a TOML file; ``None`` gives the built-in defaults."""
    if path is None:
        raw = {"experiment": experiment}
    else:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"bad TOML: {e}") from e
    return validate(raw, experiment)


def default_config_text(experiment: str) -> str:
    return resources.files("wickbench").joinpath("configs", f"{experiment}.toml").read_text()
