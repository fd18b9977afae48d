import pytest

import ray


@pytest.fixture
def ray_start_2_cpus():
    address_info = ray.init(num_cpus=2)
    yield address_info
    ray.shutdown()


def test_classify_example():
    from komatsu_spectral.examples.classify_example import sweep
    rows = sweep([0.5, 1.0], J=60)
    for a, cls, L, _ in rows:
        assert cls == "gevrey_roumieu"
        assert abs(L - a) <= 0.1 * a


def test_tensor_example(ray_start_2_cpus):
    from komatsu_spectral.examples.tensor_example import report
    T = report("laplacian", truncation=4, num_workers=2)
    assert (T.K, T.J) == (4, 4)
    assert not T.aliased
