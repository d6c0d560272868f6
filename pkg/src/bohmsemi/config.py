"""Scenario configuration: TOML (or the JSON echo of a previous run) checked against a schema.

Every section and key is declared below with its type and default; anything
else is rejected. Defaults marked ``None`` are derived from other values once
the file has been read (for example the softening length from sigma), and the
resolved values are what a run echoes into its directory.
"""
from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("two-particle", "schroedinger-newton", "minisuperspace", "equivariance")
REQUIRED = object()


@dataclass(frozen=True)
class Key:
    type: str                      # float, int, str, bool, floats, ints, range, pairs
    default: object = REQUIRED
    check: object = None           # callable(value) -> error text or None
    choices: tuple = ()


def positive(v):
    return None if v > 0 else "must be positive"


def nonnegative(v):
    return None if v >= 0 else "must be non-negative"


def _grid_range(v):
    lo, hi, n = v
    if not hi > lo:
        return "needs max > min"
    if n < 8:
        return "needs at least 8 points"
    return None


def _window(v):
    if v and (len(v) != 2 or not v[1] > v[0]):
        return "must be [start, end] with end > start"
    return None


def _viewport(v):
    if v and (len(v) != 4 or not (v[1] > v[0] and v[3] > v[2])):
        return "must be [xmin, xmax, ymin, ymax] with positive extent"
    return None


def _sign(v):
    return None if v in (1, -1) else "must be +1 or -1"


NODE = {"eps_node": Key("float", 1e-12, positive), "v_max": Key("float", 1e3, positive)}

TOP = {
    "kind": Key("str", REQUIRED, choices=KINDS),
    "name": Key("str", None),
    "seed": Key("int", 0, nonnegative),
    "output": Key("str", None),
    "max_flagged": Key("int", 1000, nonnegative),
}

SCHEMA = {
    "minisuperspace": {
        "packet": {"u": Key("float", 1.0), "v": Key("float", 5.0), "sigma": Key("float", 1.0, positive),
                   "mode": Key("str", "superposition", choices=("R", "L", "superposition"))},
        "model": {"kappa": Key("float", 1.0, positive), "k_curv": Key("float", 0.0),
                  "Lambda": Key("float", 0.0), "V_M": Key("float", 0.0)},
        "trajectories": {"starts": Key("pairs", []), "fan_phi": Key("floats", []), "fan_alpha": Key("float", 0.0),
                         "tau_start": Key("float", 0.0), "tau_end": Key("float", REQUIRED),
                         "dtau": Key("float", 0.01, positive), "highlight": Key("ints", [])},
        "classify": {"alpha_asym": Key("float", None, positive), "delta_cycle": Key("float", 1e-3, positive),
                     "cos_min": Key("float", 0.999)},
        "figure": {"viewport": Key("floats", [], _viewport), "title": Key("str", "")},
        "?compare": {"alpha0": Key("float", -40.0), "phi0": Key("float", None), "tau0": Key("float", 0.0),
                     "tau_end": Key("float", 80.0), "dtau": Key("float", 0.02, positive),
                     "early": Key("floats", [], _window), "late": Key("floats", [], _window)},
        "?semiclassical": {"count": Key("int", 100, positive), "alpha0": Key("float", -80.0),
                           "tau0": Key("float", 0.0), "tau_end": Key("float", 60.0),
                           "dtau": Key("float", 0.02, positive), "alpha_sign": Key("int", 1, _sign)},
    },
    "two-particle": {
        "grid": {"x1": Key("range", [-30.0, 30.0, 256], _grid_range), "x2": Key("range", [-4.0, 4.0, 128], _grid_range)},
        "particles": {"m1": Key("float", 1.0, positive), "m2": Key("float", 100.0, positive),
                      "X1": Key("float", 1.0), "X2": Key("float", 0.2)},
        "coupling": {"type": Key("str", "bilinear", choices=("bilinear", "harmonic")),
                     "lam": Key("float", 0.05), "k": Key("float", 0.0), "omega1": Key("float", 0.0)},
        "state": {"k": Key("float", 2.0), "sigma1": Key("float", 1.0, positive), "sigma2": Key("float", 0.5, positive),
                  "x2_center": Key("float", 0.0)},
        "integrator": {"dt": Key("float", 0.02, positive), "steps": Key("int", 500, positive),
                       "stride": Key("int", 100, positive)},
        "node": NODE,
        "?sweep": {"m2": Key("floats", [10.0, 100.0, 1000.0])},
    },
    "schroedinger-newton": {
        "grid": {"x": Key("range", [-20.0, 20.0, 801], _grid_range)},
        "state": {"centers": Key("floats", [-5.0, 5.0]), "sigma": Key("float", 1.0, positive), "k": Key("float", 0.0)},
        "model": {"G": Key("float", 1.0, nonnegative), "m": Key("float", 1.0, positive),
                  "eps_soft": Key("float", None, positive)},
        "particle": {"X": Key("float", -5.0)},
        "integrator": {"dt": Key("float", 0.01, positive), "steps": Key("int", 100, positive),
                       "stride": Key("int", 50, positive)},
        "node": NODE,
    },
    "equivariance": {
        "grid": {"x": Key("range", [-15.0, 15.0, 1201], _grid_range)},
        "state": {"center": Key("float", 0.0), "sigma": Key("float", 1.0, positive), "k": Key("float", 0.0)},
        "particle": {"m": Key("float", 1.0, positive)},
        "ensemble": {"count": Key("int", 10000, positive), "T": Key("float", None, positive),
                     "dt": Key("float", None, positive)},
        "node": NODE,
    },
}


def _coerce(where, key: Key, v):
    def bad(msg):
        raise ConfigError(f"{where}: {msg}", field=where)

    def num(x, integer=False):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            bad(f"expected a number, got {x!r}")
        if integer:
            if isinstance(x, float) and not x.is_integer():
                bad(f"expected an integer, got {x!r}")
            return int(x)
        if not math.isfinite(x):
            bad("must be finite")
        return float(x)

    t = key.type
    if t == "float":
        v = num(v)
    elif t == "int":
        v = num(v, True)
    elif t == "str":
        if not isinstance(v, str):
            bad(f"expected a string, got {v!r}")
    elif t == "bool":
        if not isinstance(v, bool):
            bad(f"expected true or false, got {v!r}")
    elif t in ("floats", "ints"):
        if not isinstance(v, list):
            bad("expected a list")
        v = [num(x, t == "ints") for x in v]
    elif t == "range":
        if not isinstance(v, list) or len(v) != 3:
            bad("expected [min, max, points]")
        v = [num(v[0]), num(v[1]), num(v[2], True)]
    elif t == "pairs":
        if not isinstance(v, list) or any(not isinstance(p, list) or len(p) != 2 for p in v):
            bad("expected a list of [phi, alpha] pairs")
        v = [[num(a), num(b)] for a, b in v]
    if key.choices and v not in key.choices:
        bad(f"must be one of {', '.join(key.choices)}")
    if key.check is not None and v is not None:
        msg = key.check(v)
        if msg:
            bad(msg)
    return v


def _section(where, schema: dict, given: dict) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"{where}: expected a table", field=where)
    unknown = sorted(set(given) - set(schema))
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown key", field=f"{where}.{unknown[0]}")
    out = {}
    for name, key in schema.items():
        path = f"{where}.{name}" if where else name
        if name in given:
            out[name] = _coerce(path, key, given[name])
        elif key.default is REQUIRED:
            raise ConfigError(f"{path}: required", field=path)
        else:
            out[name] = key.default if not isinstance(key.default, list) else list(key.default)
    return out


@dataclass
class ScenarioConfig:
    kind: str
    name: str
    seed: int
    output: str
    max_flagged: int
    sections: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.sections[section]

    def has(self, section):
        return section in self.sections

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "name": self.name, "seed": self.seed, "output": self.output,
             "max_flagged": self.max_flagged}
        d.update({k: dict(v) for k, v in self.sections.items()})
        return d


def _resolve(cfg: ScenarioConfig):
    """Fill derived defaults and cross-field checks."""
    s = cfg.sections
    if cfg.kind == "minisuperspace":
        if s["classify"]["alpha_asym"] is None:
            s["classify"]["alpha_asym"] = 10.0 * s["packet"]["sigma"]
        tr = s["trajectories"]
        if not tr["tau_end"] > tr["tau_start"]:
            raise ConfigError("trajectories.tau_end: must exceed tau_start", field="trajectories.tau_end")
        if tr["fan_phi"] and (len(tr["fan_phi"]) != 3 or tr["fan_phi"][2] < 1
                              or not float(tr["fan_phi"][2]).is_integer()):
            raise ConfigError("trajectories.fan_phi: must be [min, max, count]", field="trajectories.fan_phi")
        if "compare" in s and s["compare"]["phi0"] is None:
            s["compare"]["phi0"] = s["compare"]["alpha0"]
        if "compare" in s and not s["compare"]["tau_end"] > s["compare"]["tau0"]:
            raise ConfigError("compare.tau_end: must exceed tau0", field="compare.tau_end")
    elif cfg.kind == "schroedinger-newton":
        if s["model"]["eps_soft"] is None:
            s["model"]["eps_soft"] = s["state"]["sigma"] / 10
        if not s["state"]["centers"]:
            raise ConfigError("state.centers: needs at least one packet", field="state.centers")
    elif cfg.kind == "equivariance":
        e = s["ensemble"]
        if e["T"] is None:
            e["T"] = 2 * s["particle"]["m"] * s["state"]["sigma"] ** 2
        if e["dt"] is None:
            e["dt"] = e["T"] / 200
    elif cfg.kind == "two-particle":
        if s["integrator"]["stride"] > s["integrator"]["steps"]:
            raise ConfigError("integrator.stride: larger than steps", field="integrator.stride")
        if "sweep" in s and any(m <= 0 for m in s["sweep"]["m2"]):
            raise ConfigError("sweep.m2: must be positive", field="sweep.m2")
    return cfg


def parse_config(data: dict, stem: str = "run") -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a table")
    if "kind" not in data:
        raise ConfigError("kind: required", field="kind")
    kind = data["kind"]
    if kind not in KINDS:
        raise ConfigError(f"kind: must be one of {', '.join(KINDS)}", field="kind")
    schema = SCHEMA[kind]
    top = {k: v for k, v in data.items() if not isinstance(v, dict)}
    tables = {k: v for k, v in data.items() if isinstance(v, dict)}
    head = _section("", TOP, top)
    names = {s.lstrip("?"): s for s in schema}
    unknown = sorted(set(tables) - set(names))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown section", field=unknown[0])
    sections = {}
    for name, raw in names.items():
        if raw.startswith("?") and name not in tables:
            continue
        sections[name] = _section(name, schema[raw], tables.get(name, {}))
    name = head["name"] or stem
    cfg = ScenarioConfig(kind, name, head["seed"], head["output"] or str(Path("runs") / name),
                         head["max_flagged"], sections)
    return _resolve(cfg)


def load_config(path) -> ScenarioConfig:
    """Read a TOML scenario file, or the config.json echoed into a run directory."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    try:
        if path.suffix == ".json":
            data = json.loads(path.read_text())
        else:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data, path.stem if path.name != "config.json" else path.parent.name)
