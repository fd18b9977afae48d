import os
import pickle

import numpy as np
import pytest
import ray

from komatsu_spectral.catalog import multiply
from komatsu_spectral.parallel import RayPool, map_items, pool_from_env
from komatsu_spectral.spectral_models import (build_model,
                                              default_quadrature_size)
from komatsu_spectral.tensor_ops import from_basis_action
from komatsu_spectral.util import THREADS_ENV, get_num_threads


@pytest.fixture
def ray_start_2_cpus():
    address_info = ray.init(num_cpus=2)
    yield address_info
    # The code after the yield will run as teardown code.
    ray.shutdown()


def _square(x):
    return x * x


def _threads(_):
    return os.environ.get(THREADS_ENV)


@pytest.mark.parametrize("num_workers", [1, 2])
def test_actor_creation(ray_start_2_cpus, num_workers):
    """Tests whether the appropriate number of actors are created."""
    with RayPool(num_workers=num_workers) as pool:
        assert len(pool.workers) == num_workers
        assert pool.map(_square, range(5)) == [0, 1, 4, 9, 16]


def test_workers_run_single_threaded(ray_start_2_cpus):
    with RayPool(num_workers=2) as pool:
        assert set(pool.map(_threads, range(4))) == {"1"}


def test_init_hook(ray_start_2_cpus):
    def hook():
        os.environ["KOMATSU_HOOK"] = "ran"

    with RayPool(num_workers=2, init_hook=hook) as pool:
        seen = pool.map(lambda _: os.environ.get("KOMATSU_HOOK"), range(2))
    assert seen == ["ran", "ran"]


def test_pool_pickles_without_workers(ray_start_2_cpus):
    pool = RayPool(num_workers=2)
    pool.setup()
    clone = pickle.loads(pickle.dumps(pool))
    assert clone.workers == []
    assert clone.num_workers == 2
    pool.shutdown()


def test_remote_failure_surfaces(ray_start_2_cpus):
    def boom(x):
        raise ValueError(f"bad item {x}")

    with RayPool(num_workers=1) as pool:
        with pytest.raises(Exception, match="bad item"):
            pool.map(boom, [1])


def test_parallel_tensor_matches_serial(ray_start_2_cpus):
    model = build_model("circle", 18, default_quadrature_size("circle", 18))
    serial = from_basis_action(multiply(model), model, 8, 8)
    with RayPool(num_workers=2) as pool:
        parallel = from_basis_action(multiply(model), model, 8, 8, pool=pool)
    np.testing.assert_array_equal(parallel.matrix, serial.matrix)


def test_map_items_in_process():
    assert map_items(_square, [1, 2, 3]) == [1, 4, 9]


def test_thread_cap(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert get_num_threads() == 1
    assert pool_from_env() is None
    monkeypatch.setenv(THREADS_ENV, "0")
    with pytest.raises(ValueError):
        get_num_threads()
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ValueError):
        get_num_threads()
