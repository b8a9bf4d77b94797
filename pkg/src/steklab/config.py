"""INI run configuration: schema, validation, canonical form and hash."""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .geometry.cusp import EPS_MAX

KINDS = ("mesh", "spectrum", "glue", "reduce", "verify-asymptotics", "optimize", "sweep")
SHAPES = ("disk", "annulus", "square", "cusp", "glued-disk", "file")


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(x) for x in text.replace(",", " ").split())


def _words(text):
    return tuple(text.replace(",", " ").split())


def _t_value(text):
    text = text.strip()
    return "auto" if text == "auto" else float(text)


def _choice(*options):
    def parse(text):
        text = text.strip()
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, tuple):
        return " ".join(_fmt(v) for v in value)
    return str(value)


# section -> key -> (parser, default)
SCHEMA = {
    "run": {
        "kind": (_choice(*KINDS), "spectrum"),
        "seed": (int, 0),
        "threads": (int, 1),
    },
    "geometry": {
        "shape": (_choice(*SHAPES), "disk"),
        "refinement": (int, 4),
        "radius": (float, 1.0),
        "inner_radius": (float, 0.5),
        "n_theta": (int, 64),
        "n_radial": (int, 8),
        "n": (int, 16),
        "side": (float, 1.0),
        "n_phi": (int, 16),
        "cap_rings": (int, 4),
        "n_s": (int, 8),
        "layers": (int, 200),
        "mesh_file": (str, ""),
    },
    "glue": {
        "eps": (float, 0.1),
        "alpha": (float, 0.45),
        "t": (_t_value, "auto"),
        "p0": (float, 0.0),
        "p1": (float, 0.5),
        "flip0": (_bool, False),
        "flip1": (_bool, False),
        "xi": (float, 0.5),
        "mass_tol": (float, 1e-3),
    },
    "solver": {
        "count": (int, 6),
        "method": (_choice("schur", "pencil", "dense"), "schur"),
        "shift": (float, 0.1),
        "steklov_tags": (_words, ()),
        "dirichlet_tags": (_words, ()),
        "lumped": (_bool, False),
    },
    "reduce": {
        "bc": (_choice("dirichlet-dirichlet", "dirichlet-robin"), "dirichlet-dirichlet"),
        "beta": (float, 0.0),
        "n": (int, 400),
        "count": (int, 2),
        "method": (_choice("fd", "shooting"), "fd"),
        "correction": (_bool, False),
        "coupled": (_choice("none", "monolithic", "fixed_point"), "none"),
    },
    "optimize": {
        "modes": (int, 16),
        "per_vertex": (_bool, False),
        "exclude": (_ints, ()),
        "max_iter": (int, 200),
        "init": (_choice("constant", "random"), "constant"),
        "amplitude": (float, 0.2),
        "cluster_rtol": (float, 1e-3),
    },
    "asymptotics": {
        "points": (int, 1000),
        "r_min": (float, 1e-6),
        "r_max": (float, 0.9),
        "r_count": (int, 25),
    },
    "sweep": {
        "eps": (_floats, ()),
        "alpha": (_floats, ()),
        "t": (_floats, ()),
        "xi": (_floats, ()),
    },
}

POSITIVE = {
    ("geometry", "refinement"): 0, ("geometry", "radius"): None, ("geometry", "n_theta"): None,
    ("geometry", "n_radial"): None, ("geometry", "n"): None, ("geometry", "side"): None,
    ("geometry", "n_phi"): None, ("geometry", "cap_rings"): None, ("geometry", "n_s"): None,
    ("geometry", "layers"): None, ("run", "threads"): None, ("solver", "count"): None,
    ("reduce", "n"): None, ("reduce", "count"): None, ("optimize", "modes"): 0,
    ("optimize", "max_iter"): 0, ("asymptotics", "points"): None, ("asymptotics", "r_count"): None,
}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``values[section][key]`` holds parsed values."""

    values: dict
    base_dir: Path = field(default=Path("."), compare=False)

    def __getitem__(self, section):
        return self.values[section]

    @property
    def kind(self) -> str:
        return self.values["run"]["kind"]

    def with_overrides(self, **run) -> "RunConfig":
        vals = {s: dict(k) for s, k in self.values.items()}
        for key, value in run.items():
            if value is not None:
                vals["run"][key] = value
        cfg = RunConfig(vals, self.base_dir)
        _validate(cfg)
        return cfg

    def serialize(self) -> str:
        """Canonical INI text: every section and key, sorted."""
        lines = []
        for section in sorted(self.values):
            lines.append(f"[{section}]")
            for key in sorted(self.values[section]):
                lines.append(f"{key} = {_fmt(self.values[section][key])}")
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        """SHA-256 of the canonical text without ``run.threads``.

        The thread count never changes results, so it is left out of the hash.
        """
        vals = {s: dict(k) for s, k in self.values.items()}
        vals["run"].pop("threads", None)
        return hashlib.sha256(RunConfig(vals).serialize().encode()).hexdigest()

    def mesh_path(self) -> Path:
        return (self.base_dir / self.values["geometry"]["mesh_file"]).resolve()


def parse_config(text: str, base_dir=".") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
    for section, keys in SCHEMA.items():
        values[section] = {}
        given = parser[section] if parser.has_section(section) else {}
        for key in given:
            if key not in keys:
                raise ConfigError(f"[{section}] {key}: unknown key")
        for key, (parse, default) in keys.items():
            if key in given:
                try:
                    values[section][key] = parse(given[key])
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}") from exc
            else:
                values[section][key] = default
    cfg = RunConfig(values, Path(base_dir))
    _validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, path.parent)


def _validate(cfg: RunConfig) -> None:
    v = cfg.values
    for (section, key), floor in POSITIVE.items():
        val = v[section][key]
        if floor is None and not val > 0:
            raise ConfigError(f"[{section}] {key}: must be positive, got {val}")
        if floor is not None and val < floor:
            raise ConfigError(f"[{section}] {key}: must be >= {floor}, got {val}")
    if v["run"]["seed"] < 0 or v["run"]["seed"] >= 2**64:
        raise ConfigError(f"[run] seed: must be an unsigned 64-bit integer, got {v['run']['seed']}")
    g = v["glue"]
    if not 0 < g["eps"] < EPS_MAX:
        raise ConfigError(f"[glue] eps: must lie in (0, {EPS_MAX}), got {g['eps']}")
    if not 0 < g["alpha"] < 1:
        raise ConfigError(f"[glue] alpha: must lie in (0, 1), got {g['alpha']}")
    if g["t"] != "auto" and not g["t"] > 0:
        raise ConfigError(f"[glue] t: must be positive or 'auto', got {g['t']}")
    if not 0 < g["xi"] < 1:
        raise ConfigError(f"[glue] xi: must lie in (0, 1), got {g['xi']}")
    if not 0 < v["geometry"]["inner_radius"] < v["geometry"]["radius"] and v["geometry"]["shape"] == "annulus":
        raise ConfigError("[geometry] inner_radius: must lie in (0, radius)")
    a = v["asymptotics"]
    if not 0 < a["r_min"] <= a["r_max"] < 1:
        raise ConfigError("[asymptotics] r_min, r_max: need 0 < r_min <= r_max < 1")
    if v["geometry"]["shape"] == "file":
        if not v["geometry"]["mesh_file"]:
            raise ConfigError("[geometry] mesh_file: required when shape = file")
        if not cfg.mesh_path().is_file():
            raise ConfigError(f"[geometry] mesh_file: {cfg.mesh_path()} does not exist")
    s = v["sweep"]
    for key in ("eps", "alpha", "t", "xi"):
        for x in s[key]:
            bad = (key == "eps" and not 0 < x < EPS_MAX) or (key == "alpha" and not 0 < x < 1) \
                or (key == "t" and not x > 0) or (key == "xi" and not 0 < x < 1)
            if bad:
                raise ConfigError(f"[sweep] {key}: value {x} out of range")
    if cfg.kind == "sweep":
        if not s["eps"] or not s["alpha"]:
            raise ConfigError("[sweep] eps, alpha: grids must be nonempty for kind = sweep")
        if v["geometry"]["shape"] not in ("cusp", "glued-disk"):
            raise ConfigError("[geometry] shape: sweeps run on 'cusp' or 'glued-disk'")
