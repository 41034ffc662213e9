"""Built-in environments and the name registry the CLI resolves against."""

from __future__ import annotations

from typing import Any, Callable

from ..errors import ConfigError
from ..mdp import Environment
from .acas import AcasEnv
from .chain import ChainEnv
from .coopnav import CoopNavEnv

REGISTRY: dict[str, Callable[..., Environment]] = {
    "acas-toy": AcasEnv,
    "coopnav-toy": CoopNavEnv,
    "chain": ChainEnv,
}


def available() -> list[str]:
    return sorted(REGISTRY)


def make_environment(name: str, overrides: dict[str, Any] | None = None
                     ) -> Environment:
    """Instantiate a registered environment by name.

    :param overrides: constructor keyword overrides (e.g. horizon,
        environment constants); unknown keys raise ConfigError.
    """
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ConfigError(
            f"unknown environment '{name}'; available: "
            f"{', '.join(available())}") from None
    try:
        return factory(**(overrides or {}))
    except TypeError as exc:
        raise ConfigError(f"bad overrides for '{name}': {exc}") from exc


__all__ = ["AcasEnv", "ChainEnv", "CoopNavEnv", "REGISTRY", "available",
           "make_environment"]
