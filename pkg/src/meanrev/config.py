"""Run configuration: INI-style files with strict key validation.

The file format is line-oriented ``key = value`` under ``[section]``
headers. Unknown sections or keys are rejected so that typos fail loudly;
a ``[results]`` section is tolerated (and skipped) so a run manifest's
config echo can be loaded back verbatim.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

from .errors import ConfigError
from .model import Family, MarketSpec, ModelSpec
from .volterra import QuadratureRule, SolverConfig

_MODEL_KEYS = {"family", "mu", "theta", "sigma", "a", "b"}
_MARKET_KEYS = {"r", "c", "T", "T_prime"}
_SOLVER_KEYS = {
    "n_steps",
    "fixed_point_tol",
    "max_iters",
    "damping",
    "quadrature",
    "bracket_width",
}
_OUTPUT_KEYS = {"directory", "formats"}
_VERIFICATION_KEYS = {"oracles", "n_paths", "steps_per_unit", "seed", "fd_n_x", "fd_n_t"}
_SECTIONS = {
    "model": _MODEL_KEYS,
    "market": _MARKET_KEYS,
    "solver": _SOLVER_KEYS,
    "output": _OUTPUT_KEYS,
    "verification": _VERIFICATION_KEYS,
}


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    formats: tuple[str, ...] = ("csv",)


@dataclass(frozen=True)
class VerificationConfig:
    oracles: tuple[str, ...] = ("fd", "mc")
    n_paths: int = 100_000
    steps_per_unit: int = 2000
    seed: int = 12345
    fd_n_x: int = 1000
    fd_n_t: int = 1000


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    market: MarketSpec
    n_steps: int = 500
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    verification: VerificationConfig = field(default_factory=VerificationConfig)


def _get(section, key, conv, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"missing required key '{key}'")
        return default
    raw = section[key]
    try:
        return conv(raw)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"invalid value for '{key}': {raw!r}") from exc


def load_config(path) -> RunConfig:
    """Parse and validate a run configuration file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    for name in parser.sections():
        if name == "results":
            continue
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        for key in parser[name]:
            if key not in {k.lower() for k in _SECTIONS[name]}:
                raise ConfigError(f"unknown key '{key}' in section [{name}]")
    if "model" not in parser or "market" not in parser:
        raise ConfigError("config needs [model] and [market] sections")

    msec = parser["model"]
    family = _get(msec, "family", lambda s: Family(s), required=True)
    try:
        model = ModelSpec(
            family=family,
            mu=_get(msec, "mu", float, required=True),
            theta=_get(msec, "theta", float, required=True),
            sigma=_get(msec, "sigma", float, required=True),
            a=_get(msec, "a", float),
            b=_get(msec, "b", float),
        )
        market = MarketSpec(
            r=_get(parser["market"], "r", float, required=True),
            c=_get(parser["market"], "c", float, required=True),
            T=_get(parser["market"], "t", float, required=True),
            T_prime=_get(parser["market"], "t_prime", float, required=True),
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"invalid model/market parameters: {exc}") from exc

    ssec = parser["solver"] if "solver" in parser else {}
    n_steps = _get(ssec, "n_steps", int, default=500)
    if n_steps < 2:
        raise ConfigError("n_steps must be at least 2")
    try:
        solver = SolverConfig(
            quadrature=_get(ssec, "quadrature", QuadratureRule, default=QuadratureRule.TRAPEZOID),
            fixed_point_tol=_get(ssec, "fixed_point_tol", float, default=1e-9),
            max_iters=_get(ssec, "max_iters", int, default=60),
            damping=_get(ssec, "damping", float, default=1.0),
            bracket_width=_get(ssec, "bracket_width", float),
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"invalid solver parameters: {exc}") from exc

    osec = parser["output"] if "output" in parser else {}
    formats = tuple(
        s.strip() for s in _get(osec, "formats", str, default="csv").split(",") if s.strip()
    )
    if any(f != "csv" for f in formats):
        raise ConfigError(f"unsupported output formats {formats}; only csv is available")
    output = OutputConfig(directory=_get(osec, "directory", str, default="out"), formats=formats)

    vsec = parser["verification"] if "verification" in parser else {}
    oracles = tuple(
        s.strip() for s in _get(vsec, "oracles", str, default="fd,mc").split(",") if s.strip()
    )
    if any(o not in ("fd", "mc") for o in oracles):
        raise ConfigError(f"unknown oracle in {oracles}; choose from fd, mc")
    verification = VerificationConfig(
        oracles=oracles,
        n_paths=_get(vsec, "n_paths", int, default=100_000),
        steps_per_unit=_get(vsec, "steps_per_unit", int, default=2000),
        seed=_get(vsec, "seed", int, default=12345),
        fd_n_x=_get(vsec, "fd_n_x", int, default=1000),
        fd_n_t=_get(vsec, "fd_n_t", int, default=1000),
    )
    return RunConfig(model, market, n_steps, solver, output, verification)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def config_echo(cfg: RunConfig) -> str:
    """Reproduce a config as loadable INI text (the manifest's config echo)."""
    lines = ["[model]"]
    lines.append(f"family = {cfg.model.family.value}")
    for key in ("mu", "theta", "sigma"):
        lines.append(f"{key} = {_fmt(getattr(cfg.model, key))}")
    if cfg.model.a is not None:
        lines.append(f"a = {_fmt(cfg.model.a)}")
    if cfg.model.b is not None:
        lines.append(f"b = {_fmt(cfg.model.b)}")
    lines += ["", "[market]"]
    lines.append(f"r = {_fmt(cfg.market.r)}")
    lines.append(f"c = {_fmt(cfg.market.c)}")
    lines.append(f"T = {_fmt(cfg.market.T)}")
    lines.append(f"T_prime = {_fmt(cfg.market.T_prime)}")
    lines += ["", "[solver]"]
    lines.append(f"n_steps = {cfg.n_steps}")
    lines.append(f"quadrature = {cfg.solver.quadrature.value}")
    lines.append(f"fixed_point_tol = {_fmt(cfg.solver.fixed_point_tol)}")
    lines.append(f"max_iters = {cfg.solver.max_iters}")
    lines.append(f"damping = {_fmt(cfg.solver.damping)}")
    if cfg.solver.bracket_width is not None:
        lines.append(f"bracket_width = {_fmt(cfg.solver.bracket_width)}")
    lines += ["", "[output]"]
    lines.append(f"directory = {cfg.output.directory}")
    lines.append(f"formats = {','.join(cfg.output.formats)}")
    lines += ["", "[verification]"]
    lines.append(f"oracles = {','.join(cfg.verification.oracles)}")
    lines.append(f"n_paths = {cfg.verification.n_paths}")
    lines.append(f"steps_per_unit = {cfg.verification.steps_per_unit}")
    lines.append(f"seed = {cfg.verification.seed}")
    lines.append(f"fd_n_x = {cfg.verification.fd_n_x}")
    lines.append(f"fd_n_t = {cfg.verification.fd_n_t}")
    return "\n".join(lines) + "\n"
