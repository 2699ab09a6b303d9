"""The canonical configuration and scenario shipped with the package."""

from __future__ import annotations

from importlib import resources

from fcnledger.genesis import GenesisBundle, init_genesis
from fcnledger.sim.scenario import ScenarioEvent, parse_script

CANONICAL_SEED = 42


def _read(name: str) -> str:
    return resources.files("fcnledger.data").joinpath(name).read_text()


def canonical_config_text() -> str:
    return _read("canonical.ini")


def canonical_script_text() -> str:
    return _read("canonical.scenario")


def canonical_events() -> list[ScenarioEvent]:
    return parse_script(canonical_script_text())


def canonical_bundle(seed: int | str = CANONICAL_SEED) -> GenesisBundle:
    return init_genesis(canonical_config_text(), seed)
