import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from skimage.metrics import structural_similarity

from hwl4f import analysis
from hwl4f.analysis import LatencyModel, SsimConfig, aggregate_runs, ssim, throughput
from hwl4f.optics import edge_detect_kernel, calibrated_config, with_noise

finite = st.floats(-10, 10, allow_nan=False)


@given(arrays(np.float64, (9, 9), elements=finite))
def test_ssim_self_is_one(a):
    assert ssim(a, a) == 1.0


def test_ssim_tiny_range_is_finite():
    a = np.zeros((9, 9))
    a[0, 0] = 5e-165
    assert ssim(a, a) == 1.0
    assert np.isfinite(ssim(a, 2 * a))


def test_ssim_single_window_by_hand():
    r = np.random.default_rng(0)
    a = r.random((7, 7))
    b = a + 5.0
    L = a.max() - a.min()
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(), b.var()
    cov = np.mean((a - ma) * (b - mb))
    expected = ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2))
    got = ssim(a, b)
    assert got == pytest.approx(expected, rel=1e-12)
    assert got < 1


@given(arrays(np.float64, (10, 10), elements=finite), arrays(np.float64, (10, 10), elements=finite))
def test_ssim_symmetric_with_fixed_range(a, b):
    cfg = SsimConfig(dynamic_range=2.0)
    assert abs(ssim(a, b, cfg) - ssim(b, a, cfg)) <= 1e-12


def test_ssim_matches_reference_implementation():
    r = np.random.default_rng(3)
    for _ in range(5):
        a = r.random((28, 28))
        b = a + 0.2 * r.normal(size=(28, 28))
        L = a.max() - a.min()
        ref_map = structural_similarity(a, b, win_size=7, data_range=L,
                                        use_sample_covariance=False, full=True)[1]
        # skimage crops (win-1)/2 pixels to score only full windows
        ref = ref_map[3:-3, 3:-3].mean()
        assert ssim(a, b) == pytest.approx(ref, abs=1e-9)


def test_ssim_shape_errors():
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8)), np.zeros((9, 9)))
    with pytest.raises(ValueError):
        ssim(np.zeros((5, 5)), np.zeros((5, 5)))


def test_ssim_decreases_with_camera_noise(mnist_split):
    images = mnist_split.test_x[:20]
    k = edge_detect_kernel(28)
    base = calibrated_config()
    means = [analysis.device_ssim_scores(images, k, with_noise(base, s), seed=0).mean()
             for s in (0.0, 0.05, 0.1, 0.2, 0.4)]
    assert all(b <= a for a, b in zip(means, means[1:]))


def test_aggregate_examples():
    s = aggregate_runs([0.9])
    assert s.mean == 0.9 and s.std == 0.0
    s = aggregate_runs([0.8, 0.9])
    assert s.mean == pytest.approx(0.85)
    assert s.std == pytest.approx(0.0707, abs=1e-4)
    assert aggregate_runs([0.7] * 5).std == 0.0
    with pytest.raises(analysis.ConfigError):
        aggregate_runs([])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.randoms())
def test_aggregate_permutation_invariant(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    a, b = aggregate_runs(values), aggregate_runs(shuffled)
    assert a.mean == b.mean and a.std == b.std


def test_throughput_examples():
    assert throughput(LatencyModel(25, 0, 0, 1)) == 40.0
    assert throughput(LatencyModel(25, 20, 0, 8)) == pytest.approx(1000 / 360)
    assert round(throughput(LatencyModel(25, 20, 0, 8)), 2) == 2.78


@given(st.floats(0.1, 100), st.floats(0, 100), st.floats(0, 100), st.integers(1, 16))
def test_throughput_halves_when_latency_doubles(s, e, o, k):
    a = throughput(LatencyModel(s, e, o, k))
    b = throughput(LatencyModel(2 * s, 2 * e, 2 * o, k))
    assert b == pytest.approx(a / 2, rel=1e-12)
    assert throughput(LatencyModel(s + 1, e, o, k)) < a
    assert throughput(LatencyModel(s, e, o, k + 1)) < a


def test_throughput_errors():
    with pytest.raises(analysis.ConfigError):
        throughput(LatencyModel(0, 0, 0, 1))
    with pytest.raises(ValueError):
        LatencyModel(-1, 0, 0, 1)
