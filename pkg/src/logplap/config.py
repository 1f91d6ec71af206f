"""Run configuration: JSON text in, validated dataclasses out.

Every field is optional.  Unknown fields, wrong types and out-of-range
values raise :class:`ConfigError` naming the field and, when the value came
from a file, the line it sits on.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

from .nonlinearity import KINDS
from .verify import RECIPES

__all__ = ["ConfigError", "Config", "parse_config", "load_config", "config_to_dict"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class Domain:
    a: float = 0.0
    b: float = 1.0
    n: int = 64


@dataclass
class ConstantsCfg:
    C: float = 1.0
    rho: float = 0.0
    p: float = 2.0


@dataclass
class NonlinearityCfg:
    kind: str = "h2"
    # stored as ``lam``; the JSON key is ``lambda``
    lam: float = 0.0
    theta: float = 0.5
    t0: float = 3.0
    t1: float = 0.5
    custom_table_path: str | None = None


@dataclass
class SolverCfg:
    tol: float = 1e-8
    max_iter: int = 20000
    restarts: int = 8
    seed: int = 0
    m_knots: int = 33
    k: int = 1
    lambda_tilde: float | None = None


@dataclass
class VerifyCfg:
    samples: int = 1000
    recipe: str = "mixed"
    delta: float = 0.5
    gamma: float = 0.75
    rho_list: list = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4, 1e-5])


@dataclass
class Config:
    domain: Domain = field(default_factory=Domain)
    constants: ConstantsCfg = field(default_factory=ConstantsCfg)
    nonlinearity: NonlinearityCfg = field(default_factory=NonlinearityCfg)
    solver: SolverCfg = field(default_factory=SolverCfg)
    verify: VerifyCfg = field(default_factory=VerifyCfg)


_SECTIONS = {"domain": Domain, "constants": ConstantsCfg, "nonlinearity": NonlinearityCfg,
             "solver": SolverCfg, "verify": VerifyCfg}
_JSON_NAME = {"lam": "lambda"}
_PY_NAME = {v: k for k, v in _JSON_NAME.items()}


# ------------------------------------------------------------ line index


class _Indexer:
    """Maps key paths of a JSON document to 1-based line numbers."""

    def __init__(self, text: str):
        self.s = text
        self.lines: dict[tuple, int] = {}
        self._dec = json.JSONDecoder()

    def line(self, pos: int) -> int:
        return self.s.count("\n", 0, pos) + 1

    def _ws(self, i: int) -> int:
        while i < len(self.s) and self.s[i] in " \t\r\n":
            i += 1
        return i

    def value(self, i: int, path: tuple) -> int:
        i = self._ws(i)
        self.lines.setdefault(path, self.line(i))
        c = self.s[i] if i < len(self.s) else ""
        if c == "{":
            i = self._ws(i + 1)
            if self.s[i] == "}":
                return i + 1
            while True:
                i = self._ws(i)
                key, i = json.decoder.scanstring(self.s, i + 1)
                self.lines[path + (key,)] = self.line(i)
                i = self._ws(i) + 1  # colon
                i = self.value(i, path + (key,))
                i = self._ws(i)
                if self.s[i] == "}":
                    return i + 1
                i += 1  # comma
        if c == "[":
            i = self._ws(i + 1)
            if self.s[i] == "]":
                return i + 1
            k = 0
            while True:
                i = self.value(i, path + (k,))
                i = self._ws(i)
                k += 1
                if self.s[i] == "]":
                    return i + 1
                i += 1
        _, end = self._dec.raw_decode(self.s, i)
        return end


# ------------------------------------------------------------ validation


def _where(src: str, lines: dict, path: tuple) -> str:
    dotted = ".".join(str(p) for p in path)
    if lines and path in lines:
        return f"{src}:{lines[path]}: field {dotted}"
    return f"{src}: field {dotted}"


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _coerce(section: str, name: str, value, err):
    if name in ("n", "max_iter", "restarts", "seed", "m_knots", "samples", "k"):
        if not isinstance(value, int) or isinstance(value, bool):
            err(f"must be an integer, got {value!r}")
        return value
    if name in ("kind", "recipe"):
        if not isinstance(value, str):
            err(f"must be a string, got {value!r}")
        return value
    if name == "custom_table_path":
        if value is not None and not isinstance(value, str):
            err(f"must be a path string or null, got {value!r}")
        return value
    if name == "lambda_tilde" and value is None:
        return None
    if name == "rho_list":
        if not isinstance(value, list) or not all(_is_num(v) for v in value):
            err("must be a list of numbers")
        return [float(v) for v in value]
    if not _is_num(value):
        err(f"must be a number, got {value!r}")
    if not math.isfinite(value):
        err(f"must be finite, got {value!r}")
    return float(value)


def _check_ranges(cfg: Config, err) -> None:
    d, c, nl, s, v = cfg.domain, cfg.constants, cfg.nonlinearity, cfg.solver, cfg.verify
    if not d.b > d.a:
        err(("domain", "b"), f"must exceed domain.a={d.a}, got {d.b}")
    if d.n < 1:
        err(("domain", "n"), f"must be >= 1, got {d.n}")
    if not c.C > 0:
        err(("constants", "C"), f"must be positive, got {c.C}")
    if not c.p > 1:
        err(("constants", "p"), f"must satisfy p > 1, got {c.p}")
    if nl.kind not in KINDS:
        err(("nonlinearity", "kind"), f"must be one of {', '.join(KINDS)}, got {nl.kind!r}")
    if nl.kind in ("h1", "h2", "h3") and not 0 < nl.theta <= 1:
        err(("nonlinearity", "theta"), f"must lie in (0, 1], got {nl.theta}")
    if nl.kind == "h3":
        if not nl.t0 > 1:
            err(("nonlinearity", "t0"), f"must exceed 1, got {nl.t0}")
        if not 0 < nl.t1 < nl.t0:
            err(("nonlinearity", "t1"), f"must lie in (0, t0), got {nl.t1}")
    if nl.kind == "custom" and not nl.custom_table_path:
        err(("nonlinearity", "custom_table_path"), "is required when kind is 'custom'")
    if not s.tol > 0:
        err(("solver", "tol"), f"must be positive, got {s.tol}")
    if s.max_iter < 1:
        err(("solver", "max_iter"), f"must be >= 1, got {s.max_iter}")
    if s.restarts < 1:
        err(("solver", "restarts"), f"must be >= 1, got {s.restarts}")
    if s.seed < 0:
        err(("solver", "seed"), f"must be >= 0, got {s.seed}")
    if s.m_knots < 3:
        err(("solver", "m_knots"), f"must be >= 3, got {s.m_knots}")
    if s.k != 1:
        err(("solver", "k"), f"only k = 1 linking geometries are supported, got {s.k}")
    if v.samples < 1:
        err(("verify", "samples"), f"must be >= 1, got {v.samples}")
    if v.recipe not in RECIPES:
        err(("verify", "recipe"), f"must be one of {', '.join(RECIPES)}, got {v.recipe!r}")
    if not v.delta > 0:
        err(("verify", "delta"), f"must be positive, got {v.delta}")
    if not 0 < v.gamma < 1:
        err(("verify", "gamma"), f"must lie in (0, 1), got {v.gamma}")
    rl = v.rho_list
    if len(rl) < 2 or any(r <= 0 for r in rl) or any(b >= a for a, b in zip(rl, rl[1:])):
        err(("verify", "rho_list"), "must hold at least two positive, strictly decreasing radii")


def parse_config(text: str, source: str = "<config>") -> Config:
    """Validate JSON text; relative table paths resolve against ``source``'s directory."""
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    lines: dict = {}
    if text.strip():
        ix = _Indexer(text)
        ix.value(0, ())
        lines = ix.lines
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}:1: top level must be a JSON object")

    def fail(path, msg):
        raise ConfigError(f"{_where(source, lines, path)} {msg}")

    cfg = Config()
    for sec, body in raw.items():
        if sec not in _SECTIONS:
            fail((sec,), f"is not a known section (expected one of {', '.join(_SECTIONS)})")
        if not isinstance(body, dict):
            fail((sec,), "must be a JSON object")
        target = getattr(cfg, sec)
        known = {_JSON_NAME.get(f.name, f.name) for f in fields(target)}
        for key, value in body.items():
            if key not in known:
                fail((sec, key), f"is unknown (expected one of {', '.join(sorted(known))})")
            name = _PY_NAME.get(key, key)
            val = _coerce(sec, name, value, lambda m, p=(sec, key): fail(p, m))
            setattr(target, name, val)
    _check_ranges(cfg, lambda path, m: fail(tuple(_JSON_NAME.get(p, p) for p in path), m))
    path = cfg.nonlinearity.custom_table_path
    if path and not os.path.isabs(path) and source not in ("<config>",):
        cfg.nonlinearity.custom_table_path = os.path.join(os.path.dirname(os.path.abspath(source)), path)
    return cfg


def load_config(path: str | None) -> Config:
    if path is None:
        return Config()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, path)


def config_to_dict(cfg: Config) -> dict:
    """JSON-ready mapping with the on-disk key names; parses back to ``cfg``."""
    out = {}
    for sec in _SECTIONS:
        body = asdict(getattr(cfg, sec))
        out[sec] = {_JSON_NAME.get(k, k): v for k, v in body.items()}
    return out
