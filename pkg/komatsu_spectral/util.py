import dataclasses
import hashlib
import json
import math
import os
from typing import Any, Dict, List, Sequence

import fsspec
import numpy as np

import ray

THREADS_ENV = "KOMATSU_THREADS"


def process_results(result_futures: List["ray.ObjectRef"]) -> List[Any]:
    """Waits on the futures, surfacing the first failure, and returns their
    results in order."""
    not_ready = result_futures
    while not_ready:
        ready, not_ready = ray.wait(not_ready, timeout=0)
        # Raises as soon as any finished task failed.
        ray.get(ready)
    return ray.get(result_futures)


def get_num_threads() -> int:
    """Worker cap from ``KOMATSU_THREADS``; 1 means run in-process."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV}={raw!r} is not an integer.")
    if value < 1:
        raise ValueError(f"{THREADS_ENV} must be at least 1, got {value}.")
    return value


def to_jsonable(obj: Any) -> Any:
    """Converts reports into plain JSON values.

    Complex numbers become ``[re, im]``; non-finite floats become the
    strings ``"inf"``, ``"-inf"`` and ``"nan"``.
    """
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {
            f.name: to_jsonable(getattr(obj, f.name))
            for f in dataclasses.fields(obj)
        }
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(float(obj.real)), to_jsonable(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isfinite(value):
            return value
        return "nan" if math.isnan(value) else ("inf"
                                                if value > 0 else "-inf")
    return obj


def to_json_stream(obj: Any) -> str:
    """Deterministic JSON text: insertion-ordered keys, shortest round-trip
    floats."""
    return json.dumps(to_jsonable(obj), indent=2) + "\n"


def makedirs(path: str):
    fs, root = fsspec.core.url_to_fs(path)
    fs.makedirs(root, exist_ok=True)


def write_json(path: str, obj: Any):
    with fsspec.open(path, "w") as f:
        f.write(to_json_stream(obj))


def read_json(path: str) -> Any:
    with fsspec.open(path, "r") as f:
        return json.load(f)


def write_csv(path: str, header: Sequence[str], rows: np.ndarray):
    """CSV with 17 significant digits per float."""
    with fsspec.open(path, "w") as f:
        np.savetxt(
            f,
            np.atleast_2d(np.asarray(rows, dtype=float)),
            fmt="%.17g",
            delimiter=",",
            header=",".join(header),
            comments="")


def config_hash(config: Dict) -> str:
    canonical = json.dumps(
        to_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
