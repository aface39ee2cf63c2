"""Physical coefficients, run configuration and the theorem-level constants.

Config files are INI-style with ``[params]`` and ``[run]`` sections (plus the
optional ``[initial]``, ``[linear]`` and ``[sweep]`` sections used by the CLI).
Any key can be overridden from the environment as
``MICROPOLAR__<SECTION>__<KEY>``, e.g. ``MICROPOLAR__PARAMS__BETA=4``.
"""
from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, fields
from typing import Mapping, NamedTuple

ENV_PREFIX = "MICROPOLAR__"


@dataclass(frozen=True)
class Params:
    """Coefficients of the damped micropolar system.

    No checks happen at construction; use :func:`validate`.
    """

    mu: float = 1.0
    gamma: float = 1.0
    chi: float = 1.0
    kappa: float = 0.0
    eta: float = 1.0
    beta: float = 3.0

    @property
    def lam(self) -> float:
        return min(self.mu, self.gamma)

    @property
    def spectral_gap_ok(self) -> bool:
        return 32.0 * self.chi * (self.mu + self.chi + self.gamma) > 1.0


@dataclass(frozen=True)
class RunConfig:
    grid_n: int = 32
    box_length: float = 2 * math.pi
    dt: float = 1e-2
    t_end: float = 1.0
    t_star: float = 0.0
    record_every: int = 1
    dealias: bool = True
    seed: int = 0
    # extras beyond the core fields
    nonlinear: bool = True
    orders: tuple[int, ...] = (0, 1, 2)
    checkpoints: tuple[float, ...] = ()
    advection: str = "convective"
    cfl: float = 1.0
    budget_c: float | None = None

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class Violation:
    field: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[Violation, ...] = ()
    warnings: tuple[Violation, ...] = ()
    spectral_gap_ok: bool = True

    @property
    def ok(self) -> bool:
        return not self.errors

    def lines(self) -> list[str]:
        out = [f"error: {v.field}: {v.message}" for v in self.errors]
        out += [f"warning: {v.field}: {v.message}" for v in self.warnings]
        return out


def _finite(x) -> bool:
    try:
        return math.isfinite(float(x))
    except (TypeError, ValueError):
        return False


def validate(params: Params, run: RunConfig | None = None) -> ValidationReport:
    errors: list[Violation] = []
    warnings: list[Violation] = []

    for name in ("mu", "gamma", "chi", "eta"):
        v = getattr(params, name)
        if not _finite(v) or v <= 0:
            errors.append(Violation(f"params.{name}", f"must be positive, got {v!r}"))
    if not _finite(params.kappa) or params.kappa < 0:
        errors.append(Violation("params.kappa", f"must be nonnegative, got {params.kappa!r}"))
    if not _finite(params.beta) or params.beta < 1:
        errors.append(Violation("params.beta", f"must be >= 1, got {params.beta!r}"))

    gap_ok = False
    if all(_finite(getattr(params, n)) for n in ("mu", "gamma", "chi")):
        gap_ok = params.spectral_gap_ok
        if not gap_ok:
            warnings.append(Violation(
                "params.chi",
                "32*chi*(mu+chi+gamma) <= 1: the sufficient condition for the "
                "eigenvalue bound does not hold"))

    if run is not None:
        n = run.grid_n
        if not isinstance(n, int) or n < 16 or n & (n - 1):
            errors.append(Violation("run.grid_n", f"must be a power of two >= 16, got {n!r}"))
        if not _finite(run.box_length) or run.box_length <= 0:
            errors.append(Violation("run.box_length", "must be positive"))
        if not _finite(run.dt) or run.dt <= 0:
            errors.append(Violation("run.dt", "must be positive"))
        if not _finite(run.t_end) or run.t_end <= 0:
            errors.append(Violation("run.t_end", "must be positive"))
        elif _finite(run.dt) and run.dt >= run.t_end:
            errors.append(Violation("run.dt", "must be smaller than run.t_end"))
        if not _finite(run.t_star) or run.t_star < 0:
            errors.append(Violation("run.t_star", "must be nonnegative"))
        elif _finite(run.t_end) and run.t_star >= run.t_end:
            errors.append(Violation("run.t_star", "must be smaller than run.t_end"))
        if not isinstance(run.record_every, int) or run.record_every < 1:
            errors.append(Violation("run.record_every", "must be a positive integer"))
        if any(m < 0 or m > 4 for m in run.orders):
            errors.append(Violation("run.orders", "derivative orders must lie in 0..4"))
        if run.advection not in ("convective", "skew"):
            errors.append(Violation("run.advection", "must be 'convective' or 'skew'"))

    return ValidationReport(tuple(errors), tuple(warnings), gap_ok)


class TheoremConstant(NamedTuple):
    u: float
    w: float


def theorem_constant(alpha: float, m: int, params: Params) -> TheoremConstant:
    """Constants bounding ``limsup t^(alpha+m/2) |D^m u|`` and its w analogue.

    ``u = 2**(alpha + m/2) * (mu+chi)**(-(m+1)/2)`` and ``w = u / (4 chi)``.
    """
    if alpha < 0 or m < 0 or int(m) != m:
        raise ValueError("need alpha >= 0 and integer m >= 0")
    c = 2.0 ** (alpha + m / 2) * (params.mu + params.chi) ** (-(m + 1) / 2)
    return TheoremConstant(c, c / (4 * params.chi))


class BetaThresholds(NamedTuple):
    theorem: float
    regimes: tuple[float, float, float]
    regime: int

    @property
    def required(self) -> float:
        """Damping exponent needed by the difference estimate in ``regime``."""
        return self.regimes[self.regime - 1]


def beta_threshold(alpha: float) -> BetaThresholds:
    if not 0 <= alpha < 0.75:
        raise ValueError(f"alpha must lie in [0, 3/4), got {alpha!r}")
    d = 4 * alpha + 3
    regimes = ((8 * alpha + 8) / d, (4 * alpha + 8) / d, (4 * alpha + 7) / d)
    regime = 1 if alpha < 0.25 else 2 if alpha < 0.5 else 3
    return BetaThresholds((4 * alpha + 7) / d, regimes, regime)


# -- config files -----------------------------------------------------------

class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_tuple(conv):
    def parse(s: str):
        parts = [p for p in s.replace(",", " ").split() if p]
        return tuple(conv(p) for p in parts)
    return parse


def _parse_optional_float(s: str):
    return None if s.strip().lower() in ("", "none") else float(s)


_CONVERTERS = {
    "float": float,
    "int": int,
    "bool": _parse_bool,
    "tuple[int, ...]": _parse_tuple(int),
    "tuple[float, ...]": _parse_tuple(float),
    "str": str,
    "float | None": _parse_optional_float,
}


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    where: dict[tuple[str, str], int] = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip().lower()
        elif s and s[0] not in "#;" and ("=" in s or ":" in s):
            key = s.split("=", 1)[0].split(":", 1)[0].strip().lower()
            where[(section, key)] = lineno
    return where


def read_config_text(text: str, env: Mapping[str, str] | None = None,
                     source: str = "<config>") -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    env = os.environ if env is None else env
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].split("__")
        if len(rest) != 2:
            continue
        section, key = rest[0].lower(), rest[1].lower()
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, value)
    return cp


def _build(cls, cp: configparser.ConfigParser, section: str, where, source):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    if cp.has_section(section):
        for key, raw in cp.items(section):
            line = where.get((section, key))
            loc = f"{source}:{line}" if line else f"{source} (environment)"
            if key not in known:
                raise ConfigError(f"{loc}: unknown key {section}.{key}")
            conv = _CONVERTERS[str(known[key].type)]
            try:
                kwargs[key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{loc}: bad value for {section}.{key}: {exc}") from exc
    return cls(**kwargs)


def load_config(path, env: Mapping[str, str] | None = None):
    """Read ``path`` and return ``(params, run, parser)``.

    The parser is returned so that commands can read their own sections.
    Raises :class:`ConfigError` with ``file:line`` diagnostics.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cp = read_config_text(text, env, source=str(path))
    where = _key_lines(text)
    params = _build(Params, cp, "params", where, str(path))
    run = _build(RunConfig, cp, "run", where, str(path))
    return params, run, cp


def config_echo(params: Params, run: RunConfig) -> str:
    lines = ["[params]"]
    lines += [f"{f.name} = {getattr(params, f.name)!r}" for f in fields(params)]
    lines.append("[run]")
    for f in fields(run):
        v = getattr(run, f.name)
        if isinstance(v, tuple):
            v = ", ".join(repr(x) for x in v)
        else:
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
