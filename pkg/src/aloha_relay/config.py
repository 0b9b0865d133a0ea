"""Plain-text run configuration: flat ``key = value`` lines with dotted keys.

    # comments start with '#'
    channel.beta = 4
    mac.p = 0.15
    route.kind = lattice

Floats are written with ``repr`` so that parse(serialize(cfg)) == cfg.
``none`` stands for an unset optional value.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

from .analytic import InterfererSpec, LatticeRouteConfig, PoissonRouteConfig
from .simulate import SimWindow
from .sinr import ChannelConfig, MacConfig

__all__ = [
    "ConfigError",
    "RouteSpec",
    "InterfererFields",
    "SimSettings",
    "RunConfig",
    "KEYS",
    "parse_config",
    "serialize_config",
    "load_config",
    "apply_overrides",
    "resolve_seed",
    "SEED_ENV",
]

SEED_ENV = "ALOHA_RELAY_SEED"
ROUTE_KINDS = ("deterministic", "poisson", "lattice")


class ConfigError(ValueError):
    """Malformed configuration text or an invalid value."""


@dataclass(frozen=True)
class RouteSpec:
    kind: str = "poisson"
    lam: float = 0.01
    delta: float = 200.0
    positions: tuple = ()

    def __post_init__(self):
        if self.kind not in ROUTE_KINDS:
            raise ValueError(f"route.kind must be one of {ROUTE_KINDS}")
        if not self.lam > 0 or not self.delta > 0:
            raise ValueError("route.lambda and route.delta must be > 0")


@dataclass(frozen=True)
class InterfererFields:
    kind: str = "none"
    mu: float = 0.0
    nu: float = 0.0
    lambda_prime: float = 0.0


@dataclass(frozen=True)
class SimSettings:
    seed: int | None = None
    samples: int | None = None
    half_width_1d: float | None = None
    half_width_2d: float | None = None
    workers: int = 1

    def __post_init__(self):
        if (self.samples is not None and self.samples < 1) or self.workers < 1:
            raise ValueError("sim.samples and sim.workers must be >= 1")
        if self.seed is not None and self.seed < 0:
            raise ValueError("sim.seed must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    mac: MacConfig = field(default_factory=MacConfig)
    route: RouteSpec = field(default_factory=RouteSpec)
    interferers: InterfererFields = field(default_factory=InterfererFields)
    M: float = 1000.0
    r: float = 100.0
    sim: SimSettings = field(default_factory=SimSettings)

    def interferer_spec(self) -> InterfererSpec:
        i = self.interferers
        return InterfererSpec(kind=i.kind, mu=i.mu, nu=i.nu, lambda_prime=i.lambda_prime,
                              p_prime=self.mac.p_prime)

    def poisson_route(self) -> PoissonRouteConfig:
        return PoissonRouteConfig(lam=self.route.lam, mac=self.mac, ch=self.channel)

    def lattice_route(self) -> LatticeRouteConfig:
        return LatticeRouteConfig(base=self.poisson_route(), delta=self.route.delta)

    def window(self) -> SimWindow:
        return SimWindow(self.sim.half_width_1d, self.sim.half_width_2d)


def _opt(parse):
    def f(text):
        return None if text.strip().lower() == "none" else parse(text)
    return f


def _positions(text):
    text = text.strip()
    return tuple(float(v) for v in text.split(",")) if text else ()


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# key -> (attribute path, parser)
KEYS = {
    "channel.A": (("channel", "A"), float),
    "channel.beta": (("channel", "beta"), float),
    "channel.T": (("channel", "T"), float),
    "channel.W": (("channel", "W"), float),
    "mac.p": (("mac", "p"), float),
    "mac.p_prime": (("mac", "p_prime"), float),
    "route.kind": (("route", "kind"), str),
    "route.lambda": (("route", "lam"), float),
    "route.delta": (("route", "delta"), float),
    "route.positions": (("route", "positions"), _positions),
    "interferers.kind": (("interferers", "kind"), str),
    "interferers.mu": (("interferers", "mu"), float),
    "interferers.nu": (("interferers", "nu"), float),
    "interferers.lambda_prime": (("interferers", "lambda_prime"), float),
    "segment.M": (("M",), float),
    "segment.r": (("r",), float),
    "sim.seed": (("sim", "seed"), _opt(int)),
    "sim.samples": (("sim", "samples"), _opt(int)),
    "sim.half_width_1d": (("sim", "half_width_1d"), _opt(float)),
    "sim.half_width_2d": (("sim", "half_width_2d"), _opt(float)),
    "sim.workers": (("sim", "workers"), int),
}


def _get(cfg, path):
    for name in path:
        cfg = getattr(cfg, name)
    return cfg


def _assign(values: dict, base: RunConfig) -> RunConfig:
    """Apply parsed key/value pairs, validating the final configuration once."""
    # group by top-level section so nested invariants see all of their fields at once
    sections: dict = {}
    for key, value in values.items():
        path, _ = KEYS[key]
        sections.setdefault(path[0], {})[path[1:]] = value
    out = {}
    for section, items in sections.items():
        if not next(iter(items)):  # top-level scalar
            out[section] = items[()]
            continue
        current = getattr(base, section)
        kwargs = {f.name: getattr(current, f.name) for f in fields(current)}
        for sub, v in items.items():
            kwargs[sub[0]] = v
        try:
            out[section] = type(current)(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid {section} settings: {exc}") from exc
    cfg = replace(base, **out)
    try:
        cfg.interferer_spec()
    except ValueError as exc:
        raise ConfigError(f"invalid interferer settings: {exc}") from exc
    return cfg


def _parse_pair(key: str, text: str, where: str):
    key = key.strip()
    if key not in KEYS:
        raise ConfigError(f"{where}unknown key {key!r}")
    try:
        return key, KEYS[key][1](text.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}bad value for {key}: {text.strip()!r}") from exc


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        k, v = _parse_pair(key, value, f"line {lineno}: ")
        values[k] = v
    return _assign(values, base or RunConfig())


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    section = None
    for key, (path, _) in KEYS.items():
        head = key.split(".")[0]
        if head != section:
            if section is not None:
                lines.append("")
            section = head
        lines.append(f"{key} = {_fmt(_get(cfg, path))}")
    return "\n".join(lines) + "\n"


def load_config(path: str, base: RunConfig | None = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    """Apply ``key=value`` strings (e.g. from repeated --set flags)."""
    values = {}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        k, v = _parse_pair(key, value, "")
        values[k] = v
    return _assign(values, cfg) if values else cfg


def resolve_seed(flag: int | None, cfg: RunConfig) -> int:
    """--seed, then sim.seed, then $ALOHA_RELAY_SEED, then 0."""
    if flag is not None:
        return flag
    if cfg.sim.seed is not None:
        return cfg.sim.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            seed = int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
        if seed < 0:
            raise ConfigError(f"{SEED_ENV} must be >= 0")
        return seed
    return 0
