from typing import Optional

import numpy as np


class RunSession:
    """State shared by one CLI run: the seed, its RNG and the config hash."""

    def __init__(self, seed: int, config_hash: str):
        self._seed = seed
        self._config_hash = config_hash
        self._rng = np.random.default_rng(seed)

    def get_seed(self) -> int:
        return self._seed

    def get_config_hash(self) -> str:
        return self._config_hash

    def get_rng(self) -> np.random.Generator:
        return self._rng


_session: Optional[RunSession] = None


def init_session(*args, **kwargs):
    global _session
    if _session:
        raise ValueError(
            "Trying to initialize RunSession twice."
            "\nFIX THIS by calling `shutdown_session()` before starting "
            "another run in the same process.")
    _session = RunSession(*args, **kwargs)


def get_session() -> RunSession:
    global _session
    if not _session or not isinstance(_session, RunSession):
        raise ValueError(
            "Trying to access RunSession from outside a komatsu run."
            "\nFIX THIS by calling functions in `session.py` like "
            "`get_config_hash()` only after `init_session()`, or pass the "
            "value explicitly.")
    return _session


def is_session_enabled() -> bool:
    return _session is not None


def shutdown_session():
    global _session
    _session = None


def get_config_hash() -> str:
    return get_session().get_config_hash()


def get_rng(default_seed: int = 0) -> np.random.Generator:
    """The session RNG, or a fresh generator seeded with ``default_seed``
    when no session is active."""
    if is_session_enabled():
        return get_session().get_rng()
    return np.random.default_rng(default_seed)
