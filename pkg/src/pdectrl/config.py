"""Configuration file handling.

Flat key-value text with section headers (INI syntax), one section per
environment plus [train] and [networks]. Every default below also lives in
the checked-in reference config (configs/reference.cfg); a config file only
needs the keys it overrides.
"""

import configparser
from dataclasses import dataclass, fields, replace

from .ddpg import ArchConfig, TrainConfig
from .envs import HeatInvaderEnv, PDEModelEnv
from .errors import ConfigurationError


@dataclass
class PDEModelSettings:
    d: int = 6
    dt: float = 0.001
    ds: float = 0.1
    substeps: int = 100
    steps_per_episode: int = 40


@dataclass
class HeatInvaderSettings:
    grid: int = 50
    inv_pe: float = 0.05
    dt_agent: float = 0.1
    airflow: str = "uniform"
    v0: float = 0.2
    omega: float = 0.4
    invader_amplitude: float = 1.0
    invader_width: float = 0.08
    fan_threshold: float = 25.0
    t_star: float = 0.501
    ac_rows: tuple = (23, 24, 25, 26)
    steps_per_episode: int = 40
    cfl_safety: float = 0.9


@dataclass
class NetworkSettings:
    hidden: tuple = (32, 32)
    conv: tuple = ()  # e.g. "32x4,32x4,32x3" in the config file
    state_side: int = 0  # observation downsampling side; 0 keeps the native grid


@dataclass
class ToolkitConfig:
    pde_model: PDEModelSettings
    heat_invader: HeatInvaderSettings
    train: TrainConfig
    networks: NetworkSettings


def default_config() -> ToolkitConfig:
    return ToolkitConfig(
        pde_model=PDEModelSettings(),
        heat_invader=HeatInvaderSettings(),
        train=TrainConfig(),
        networks=NetworkSettings(),
    )


def _parse_value(name: str, raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        if name == "conv":
            if not raw:
                return ()
            layers = []
            for part in raw.split(","):
                f, k = part.strip().split("x")
                layers.append((int(f), int(k)))
            return tuple(layers)
        if not raw:
            return ()
        return tuple(int(x) for x in raw.split(","))
    return raw


def _apply_section(parser, section: str, obj):
    if not parser.has_section(section):
        return obj
    updates = {}
    by_name = {f.name: f for f in fields(obj)}
    for key, raw in parser.items(section):
        if key not in by_name:
            raise ConfigurationError(f"unknown key {key!r} in section [{section}]")
        updates[key] = _parse_value(key, raw, getattr(obj, key))
    return replace(obj, **updates)


def load_config(path=None) -> ToolkitConfig:
    """Defaults, optionally overridden by an INI-style file."""
    cfg = default_config()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"cannot read config file {path}")
    cfg.pde_model = _apply_section(parser, "pde_model", cfg.pde_model)
    cfg.heat_invader = _apply_section(parser, "heat_invader", cfg.heat_invader)
    cfg.train = _apply_section(parser, "train", cfg.train)
    cfg.networks = _apply_section(parser, "networks", cfg.networks)
    return cfg


def make_pde_model_env(settings: PDEModelSettings, seed=0) -> PDEModelEnv:
    return PDEModelEnv(d=settings.d, dt=settings.dt, ds=settings.ds,
                       substeps=settings.substeps,
                       steps_per_episode=settings.steps_per_episode, seed=seed)


def make_heat_invader_env(settings: HeatInvaderSettings, seed=0, airflow=None) -> HeatInvaderEnv:
    return HeatInvaderEnv(grid=settings.grid, inv_pe=settings.inv_pe,
                          dt_agent=settings.dt_agent,
                          airflow=airflow or settings.airflow,
                          v0=settings.v0, omega=settings.omega,
                          invader_amplitude=settings.invader_amplitude,
                          invader_width=settings.invader_width,
                          fan_threshold=settings.fan_threshold,
                          t_star=settings.t_star, ac_rows=settings.ac_rows,
                          steps_per_episode=settings.steps_per_episode,
                          cfl_safety=settings.cfl_safety, seed=seed)


def arch_from_settings(net: NetworkSettings) -> ArchConfig:
    return ArchConfig(conv=net.conv, hidden=net.hidden)
