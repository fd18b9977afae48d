from typing import Any, Callable, Dict, List, Optional, Sequence

import os

import ray
from ray.util import PublicAPI

from komatsu_spectral import _logger as log
from komatsu_spectral.util import THREADS_ENV, get_num_threads, \
    process_results


@ray.remote
class RayExecutor:
    """A class to execute any arbitrary function remotely."""

    def set_env_var(self, key: str, value: str):
        """Set an environment variable with the provided values."""
        if value is not None:
            value = str(value)
            os.environ[key] = value

    def execute(self, fn: Callable, *args, **kwargs):
        """Execute the provided function and return the result."""
        return fn(*args, **kwargs)


@PublicAPI(stability="beta")
class RayPool:
    """A fixed set of Ray actors mapping a function over independent items.

    Tensor columns, suite checks and other per-item work with no shared
    mutable state are spread round-robin over ``num_workers`` actors. Each
    actor reserves ``num_cpus_per_worker`` CPUs.

    Args:
        num_workers (int): Number of actors to start.
        num_cpus_per_worker (int): Number of CPUs per actor.
        init_hook (Callable): A function to run on each actor upon
            instantiation.
        resources_per_worker (Optional[Dict]): Extra custom resources to
            reserve for each actor. A ``CPU`` key overrides
            ``num_cpus_per_worker``.

    Example:

        .. code-block:: python

            from komatsu_spectral import build_model, from_basis_action
            from komatsu_spectral.catalog import multiply
            from komatsu_spectral.parallel import RayPool

            model = build_model("circle", 16, 64)
            with RayPool(num_workers=2) as pool:
                T = from_basis_action(multiply(model), model, 8, 8,
                                      pool=pool)

    """

    def __init__(self,
                 num_workers: int = 1,
                 num_cpus_per_worker: int = 1,
                 init_hook: Optional[Callable] = None,
                 resources_per_worker: Optional[Dict] = None):
        if not ray.is_initialized():
            ray.init()
        resources_per_worker = dict(resources_per_worker or {})
        self.num_workers = num_workers
        self.num_cpus_per_worker = resources_per_worker.pop(
            "CPU", num_cpus_per_worker)
        self.additional_resources_per_worker = resources_per_worker
        self.init_hook = init_hook
        self.workers = []

    def __getstate__(self):
        d = self.__dict__.copy()
        # Don't serialize the workers.
        del d["workers"]
        return d

    def __setstate__(self, d):
        d["workers"] = []
        self.__dict__.update(d)

    def _create_worker(self):
        """Creates Ray actor."""
        return RayExecutor.options(
            num_cpus=self.num_cpus_per_worker,
            resources=self.additional_resources_per_worker).remote()

    def setup(self):
        """Creates the Ray actors and runs the init hook on each."""
        self.workers = [self._create_worker() for _ in range(self.num_workers)]
        # Workers never start nested pools.
        ray.get(
            [w.set_env_var.remote(THREADS_ENV, "1") for w in self.workers])
        if self.init_hook:
            ray.get([w.execute.remote(self.init_hook) for w in self.workers])
        log.info(f"Started {self.num_workers} Ray workers")

    def map(self, fn: Callable, items: Sequence[Any]) -> List[Any]:
        """``[fn(item) for item in items]`` evaluated on the actors."""
        if not self.workers:
            self.setup()
        fn_ref = ray.put(fn)
        futures = [
            self.workers[i % self.num_workers].execute.remote(
                _call, fn_ref, item) for i, item in enumerate(items)
        ]
        return process_results(futures)

    def shutdown(self):
        for w in self.workers:
            ray.kill(w, no_restart=True)
            del w
        self.workers = []

    def __enter__(self):
        self.setup()
        return self

    def __exit__(self, *exc):
        self.shutdown()


def _call(fn: Callable, item: Any) -> Any:
    return fn(item)


def map_items(fn: Callable,
              items: Sequence[Any],
              pool: Optional[RayPool] = None) -> List[Any]:
    """Maps in-process when ``pool`` is ``None``, else on the pool."""
    if pool is None:
        return [fn(item) for item in items]
    return pool.map(fn, items)


def pool_from_env() -> Optional[RayPool]:
    """A pool sized by ``KOMATSU_THREADS``, or ``None`` when it is 1."""
    n = get_num_threads()
    if n <= 1:
        return None
    return RayPool(num_workers=n)
