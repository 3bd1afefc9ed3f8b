"""Scenario files.

A scenario is a line-oriented text file made of ``[block]`` headers and
``key = value`` lines; ``#`` starts a comment.  Blocks::

    [run]        seed
    [manifold]   name, plus g (interval) or coords/domain/periodic/g_ij (custom)
    [bundle]     name, plus alpha (rot2) or phi (conformal{r})
    [grid]       n, boundary_n
    [section]    kind, degree, seeds, ranks, margin        (repeatable)
    [check]      identity, s | m | k, p, tolerance, points (repeatable)
    [output]     path, format

Values are integers, floats, booleans, bare strings, or bracketed lists of
those.  Every error carries the line and column where it was detected.
"""

import ast
import math
import re
from dataclasses import dataclass, field, replace

from .bundle import BUNDLE_CATALOG
from .errors import BundleCalcError, ConfigError
from .expressions import Expression
from .fields import SECTION_KINDS
from .geometry import MANIFOLD_CATALOG

IDENTITIES = ("ibp", "adjoint", "green", "commutator", "divergence", "bochner_power",
              "structured_norm")
FORMATS = ("json", "csv")
U64 = 2 ** 64

BLOCK_KEYS = {
    "run": {"seed"},
    "manifold": {"name", "g", "coords", "domain", "periodic"},
    "bundle": {"name", "alpha", "phi"},
    "grid": {"n", "boundary_n"},
    "section": {"kind", "degree", "seeds", "ranks", "margin"},
    "check": {"identity", "s", "m", "k", "p", "tolerance", "points"},
    "output": {"path", "format"},
}
REPEATABLE = {"section", "check"}
METRIC_KEY = re.compile(r"g_?(\d)(\d)$")


@dataclass
class SectionBlock:
    kind: str = "trig"
    degree: int = 3
    seeds: tuple = (0,)
    ranks: tuple = (0, 0)
    margin: float = None


@dataclass
class CheckBlock:
    identity: str
    orders: tuple = (1,)             # s for ibp/adjoint, m for commutator/norms, k for powers
    p: float = 2.0
    tolerance: float = None
    points: int = 100


@dataclass
class ScenarioConfig:
    manifold: str = "flat_torus2"
    manifold_params: dict = field(default_factory=dict)
    bundle: str = "trivial_line"
    bundle_params: dict = field(default_factory=dict)
    grid_n: tuple = None
    boundary_n: tuple = None
    sections: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    output_path: str = None
    output_format: str = "json"
    seed: int = 0

    def with_seed(self, seed):
        return replace(self, seed=int(seed) % U64)


# lexical layer ------------------------------------------------------------------

def _parse_value(text, line, col, key):
    text = text.strip()
    if not text:
        raise ConfigError("missing value", line, col, key)
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if text[0] in "[(":
        try:
            value = ast.literal_eval(text.replace("true", "True").replace("false", "False"))
        except (ValueError, SyntaxError):
            raise ConfigError(f"malformed list {text!r}", line, col, key) from None
        return list(value) if isinstance(value, (list, tuple)) else value
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


def tokenize(text):
    """Yield ``(block, index, entries)`` with entries ``{key: (value, line, col, raw)}``."""
    blocks, current = [], None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        stripped = line.strip()
        if stripped.startswith("["):
            m = re.fullmatch(r"\[\s*([A-Za-z_]\w*)\s*\]", stripped)
            if not m:
                raise ConfigError(f"malformed block header {stripped!r}", lineno, indent + 1)
            name = m.group(1)
            if name not in BLOCK_KEYS:
                raise ConfigError(f"unknown block [{name}] (known: {', '.join(BLOCK_KEYS)})",
                                  lineno, indent + 1, name)
            if name not in REPEATABLE and any(b[0] == name for b in blocks):
                raise ConfigError(f"block [{name}] may appear only once", lineno, indent + 1,
                                  name)
            current = (name, lineno, {})
            blocks.append(current)
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", lineno, indent + 1)
        if current is None:
            raise ConfigError("key outside of any [block]", lineno, indent + 1)
        key, _, value = stripped.partition("=")
        key = key.strip()
        vcol = indent + len(stripped) - len(value.lstrip()) + 1
        name, _, entries = current
        allowed = BLOCK_KEYS[name]
        if key not in allowed and not (name == "manifold" and METRIC_KEY.match(key)):
            raise ConfigError(f"unknown key {key!r} in [{name}] "
                              f"(allowed: {', '.join(sorted(allowed))})", lineno, indent + 1, key)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r}", lineno, indent + 1, key)
        entries[key] = (_parse_value(value, lineno, vcol, key), lineno, vcol, value.strip())
    return blocks


# semantic layer ------------------------------------------------------------------

def _get(entries, key, default=None):
    return entries[key][0] if key in entries else default


def _where(entries, key, fallback_line):
    if key in entries:
        return entries[key][1], entries[key][2]
    return fallback_line, 1


def _int(entries, key, default, line, lo=None):
    value = _get(entries, key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer", *_where(entries, key, line), key)
    if lo is not None and value < lo:
        raise ConfigError(f"{key} must be >= {lo}", *_where(entries, key, line), key)
    return value


def _int_list(entries, key, default, line, lo=0):
    value = _get(entries, key, default)
    items = value if isinstance(value, list) else [value]
    if not items or any(isinstance(v, bool) or not isinstance(v, int) or v < lo for v in items):
        raise ConfigError(f"{key} must be an integer >= {lo} or a list of them",
                          *_where(entries, key, line), key)
    return tuple(items)


def _number(entries, key, default, line):
    value = _get(entries, key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number", *_where(entries, key, line), key)
    return float(value)


def _expr_check(entries, key, coords, line):
    src = entries[key][3]
    eline, ecol = _where(entries, key, line)
    try:
        Expression(src, coords)
    except ConfigError as exc:
        raise ConfigError(str(exc.message), eline, ecol + (exc.column or 1) - 1, key) from None
    return src


def _manifold_coords(name, params):
    from .geometry import DEFAULT_COORDS
    m = re.fullmatch(r"flat_torus(\d+)", name)
    if m:
        n = int(m.group(1))
        return DEFAULT_COORDS[:n] if n <= 4 else tuple(f"x{i}" for i in range(n))
    return {"warped_torus2": ("x", "y"), "sphere_chart": ("theta", "phi"),
            "interval": ("x",), "annulus": ("r", "phi")}.get(name, params.get("coords"))


def _build_manifold(cfg, entries, line):
    name = _get(entries, "name")
    if not isinstance(name, str):
        raise ConfigError("manifold name is required", line, 1, "name")
    l, c = _where(entries, "name", line)
    params = {}
    if re.fullmatch(r"flat_torus[1-4]", name) or name in ("warped_torus2", "sphere_chart",
                                                           "annulus"):
        extra = set(entries) - {"name"}
    elif name == "interval":
        extra = set(entries) - {"name", "g"}
        if "g" in entries:
            params["g"] = _expr_check(entries, "g", ("x",), line)
    elif name == "custom":
        extra = set()
        coords = _get(entries, "coords")
        coords = [s.strip() for s in coords.split(",")] if isinstance(coords, str) else coords
        domain, periodic = _get(entries, "domain"), _get(entries, "periodic")
        if not coords or domain is None or periodic is None:
            raise ConfigError("custom charts need coords, domain and periodic", l, c, "name")
        n = len(coords)
        if len(domain) != n or len(periodic) != n:
            raise ConfigError("domain and periodic need one entry per coordinate",
                              *_where(entries, "domain", line), "domain")
        metric = {}
        for key in entries:
            mm = METRIC_KEY.match(key)
            if mm:
                i, j = sorted((int(mm.group(1)) - 1, int(mm.group(2)) - 1))
                if not (0 <= i < n and 0 <= j < n):
                    raise ConfigError(f"metric entry {key} out of range", *_where(entries, key, line), key)
                metric[f"g{i + 1}{j + 1}"] = _expr_check(entries, key, tuple(coords), line)
        if not metric:
            raise ConfigError("custom charts need metric entries g_ij", l, c, "name")
        params = {"coords": list(coords), "domain": [list(map(float, d)) for d in domain],
                  "periodic": [bool(p) for p in periodic], "metric": metric}
    else:
        raise ConfigError(f"unknown manifold {name!r} (catalog: {', '.join(MANIFOLD_CATALOG)})",
                          l, c, "name")
    if extra:
        key = sorted(extra)[0]
        raise ConfigError(f"parameter {key!r} does not apply to manifold {name}",
                          *_where(entries, key, line), key)
    cfg.manifold, cfg.manifold_params = name, params


def _build_bundle(cfg, entries, line):
    name = _get(entries, "name", "trivial_line")
    l, c = _where(entries, "name", line)
    coords = _manifold_coords(cfg.manifold, cfg.manifold_params)
    params = {}
    if name == "trivial_line":
        allowed = set()
    elif name == "rot2":
        allowed = {"alpha"}
        if "alpha" in entries:
            raw = entries["alpha"][3].strip()
            if raw.startswith("[") and raw.endswith("]"):
                raw = raw[1:-1]
            parts = [part.strip().strip("\"'") for part in raw.split(",")]
            eline, ecol = _where(entries, "alpha", line)
            for part in parts:
                try:
                    Expression(str(part), coords)
                except ConfigError as exc:
                    raise ConfigError(exc.message, eline, ecol, "alpha") from None
            if len(parts) != len(coords):
                raise ConfigError(f"alpha needs {len(coords)} expressions", eline, ecol, "alpha")
            params["alpha"] = [str(p).strip() for p in parts]
    elif re.fullmatch(r"conformal[1-9]\d*", str(name)):
        allowed = {"phi"}
        if "phi" in entries:
            params["phi"] = _expr_check(entries, "phi", coords, line)
    else:
        raise ConfigError(f"unknown bundle {name!r} (catalog: {', '.join(BUNDLE_CATALOG)})",
                          l, c, "name")
    extra = set(entries) - {"name"} - allowed
    if extra:
        key = sorted(extra)[0]
        raise ConfigError(f"parameter {key!r} does not apply to bundle {name}",
                          *_where(entries, key, line), key)
    cfg.bundle, cfg.bundle_params = name, params


def _build_section(entries, line):
    kind = _get(entries, "kind", "trig")
    if kind not in SECTION_KINDS:
        raise ConfigError(f"unknown section kind {kind!r} (known: {', '.join(SECTION_KINDS)})",
                          *_where(entries, "kind", line), "kind")
    seeds = _int_list(entries, "seeds", [0], line)
    if any(s >= U64 for s in seeds):
        raise ConfigError("seeds are 64-bit unsigned integers", *_where(entries, "seeds", line),
                          "seeds")
    ranks = _int_list(entries, "ranks", [0, 0], line)
    if len(ranks) != 2:
        raise ConfigError("ranks must be [k, l]", *_where(entries, "ranks", line), "ranks")
    margin = _number(entries, "margin", None, line)
    if margin is not None and margin <= 0:
        raise ConfigError("margin must be positive", *_where(entries, "margin", line), "margin")
    return SectionBlock(kind, _int(entries, "degree", 3, line, lo=0), seeds, ranks, margin)


def _build_check(entries, line):
    identity = _get(entries, "identity")
    if identity not in IDENTITIES:
        raise ConfigError(f"unknown identity {identity!r} (known: {', '.join(IDENTITIES)})",
                          *_where(entries, "identity", line), "identity")
    given = [k for k in ("s", "m", "k") if k in entries]
    if len(given) > 1:
        raise ConfigError("give only one of s, m, k", *_where(entries, given[1], line), given[1])
    default = {"ibp": [1], "adjoint": [1], "commutator": [1], "bochner_power": [1],
               "structured_norm": [2], "green": [1], "divergence": [1]}[identity]
    key = given[0] if given else "s"
    orders = _int_list(entries, key, default, line, lo=0)
    p = _number(entries, "p", 2.0, line)
    if p < 1:
        raise ConfigError("p must be >= 1", *_where(entries, "p", line), "p")
    tol = _number(entries, "tolerance", None, line)
    if tol is not None and tol < 0:
        raise ConfigError("tolerance must be nonnegative", *_where(entries, "tolerance", line),
                          "tolerance")
    return CheckBlock(identity, orders, p, tol, _int(entries, "points", 100, line, lo=1))


def parse(text):
    """Parse scenario text into a :class:`ScenarioConfig`; raises ConfigError."""
    cfg = ScenarioConfig()
    blocks = tokenize(text)
    order = {"run": 0, "manifold": 1, "bundle": 2, "grid": 3, "section": 4, "check": 5,
             "output": 6}
    if not any(b[0] == "manifold" for b in blocks):
        raise ConfigError("a [manifold] block is required", 1, 1, "manifold")
    for name, line, entries in sorted(blocks, key=lambda b: (order[b[0]], b[1])):
        if name == "run":
            seed = _int(entries, "seed", 0, line, lo=0)
            if seed >= U64:
                raise ConfigError("seed must fit in 64 bits", *_where(entries, "seed", line), "seed")
            cfg.seed = seed
        elif name == "manifold":
            _build_manifold(cfg, entries, line)
        elif name == "bundle":
            _build_bundle(cfg, entries, line)
        elif name == "grid":
            if "n" in entries:
                cfg.grid_n = _int_list(entries, "n", None, line, lo=1)
            if "boundary_n" in entries:
                cfg.boundary_n = _int_list(entries, "boundary_n", None, line, lo=1)
        elif name == "section":
            cfg.sections.append(_build_section(entries, line))
        elif name == "check":
            cfg.checks.append(_build_check(entries, line))
        elif name == "output":
            fmt = _get(entries, "format", "json")
            if fmt not in FORMATS:
                raise ConfigError(f"unknown output format {fmt!r} (json or csv)",
                                  *_where(entries, "format", line), "format")
            path = _get(entries, "path")
            cfg.output_path = None if path is None else str(path)
            cfg.output_format = fmt
    if not any(b[0] == "bundle" for b in blocks):
        _build_bundle(cfg, {}, 1)
    if cfg.checks and not cfg.sections:
        cfg.sections.append(SectionBlock())
    return cfg


def load(path):
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


# canonical serialization ----------------------------------------------------------------

def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


def serialize(cfg):
    """Canonical text form; ``parse(serialize(c))`` reproduces ``c``."""
    out = ["[run]", f"seed = {cfg.seed}", "", "[manifold]", f"name = {cfg.manifold}"]
    mp = cfg.manifold_params
    if cfg.manifold == "interval" and "g" in mp:
        out.append(f"g = {mp['g']}")
    if cfg.manifold == "custom":
        out.append(f"coords = {', '.join(mp['coords'])}")
        out.append(f"domain = {_fmt([[float(a), float(b)] for a, b in mp['domain']])}")
        out.append(f"periodic = {_fmt(mp['periodic'])}")
        for key in sorted(mp["metric"]):
            out.append(f"g_{key[1:]} = {mp['metric'][key]}")
    out += ["", "[bundle]", f"name = {cfg.bundle}"]
    if "alpha" in cfg.bundle_params:
        out.append(f"alpha = {', '.join(cfg.bundle_params['alpha'])}")
    if "phi" in cfg.bundle_params:
        out.append(f"phi = {cfg.bundle_params['phi']}")
    if cfg.grid_n is not None or cfg.boundary_n is not None:
        out += ["", "[grid]"]
        if cfg.grid_n is not None:
            out.append(f"n = {_fmt(list(cfg.grid_n))}")
        if cfg.boundary_n is not None:
            out.append(f"boundary_n = {_fmt(list(cfg.boundary_n))}")
    for s in cfg.sections:
        out += ["", "[section]", f"kind = {s.kind}", f"degree = {s.degree}",
                f"seeds = {_fmt(list(s.seeds))}", f"ranks = {_fmt(list(s.ranks))}"]
        if s.margin is not None:
            out.append(f"margin = {_fmt(s.margin)}")
    for c in cfg.checks:
        key = {"commutator": "m", "structured_norm": "m", "bochner_power": "k"}.get(c.identity, "s")
        out += ["", "[check]", f"identity = {c.identity}", f"{key} = {_fmt(list(c.orders))}",
                f"p = {_fmt(c.p)}", f"points = {c.points}"]
        if c.tolerance is not None:
            out.append(f"tolerance = {_fmt(c.tolerance)}")
    out += ["", "[output]", f"format = {cfg.output_format}"]
    if cfg.output_path is not None:
        out.append(f"path = {cfg.output_path}")
    return "\n".join(out) + "\n"


def build_manifold(cfg, max_order=None):
    from .geometry import custom_chart, make_manifold
    from .jets import DEFAULT_MAX_ORDER

    max_order = max_order or DEFAULT_MAX_ORDER
    if cfg.manifold == "custom":
        mp = cfg.manifold_params
        entries = {(int(k[1]) - 1, int(k[2]) - 1): v for k, v in mp["metric"].items()}
        return custom_chart(mp["domain"], mp["periodic"], entries, mp["coords"],
                            max_order=max_order)
    return make_manifold(cfg.manifold, cfg.manifold_params, max_order)


def build_bundle(cfg, M):
    from .bundle import make_bundle
    return make_bundle(cfg.bundle, M, cfg.bundle_params)


__all__ = ["ScenarioConfig", "SectionBlock", "CheckBlock", "IDENTITIES", "parse", "load",
           "serialize", "build_manifold", "build_bundle", "BundleCalcError"]
