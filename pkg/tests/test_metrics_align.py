import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cycnpf.align import AlignmentPath, dtw_align, path_cost, warp_to_target
from cycnpf.metrics import CONVENTIONS, MCD_CONST, global_variance, lgd, lsd, mcd

from oracles import count_monotone_paths, dtw_brute_force, lgd_loop, lsd_loop, mcd_loop


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def random_pairs(n=100, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        t = int(rng.integers(2, 30))
        yield rng, t


def test_mcd_matches_loop_oracle():
    for rng, t in random_pairs(seed=1):
        x, y = rng.normal(size=(t, 45)), rng.normal(size=(t, 45))
        assert _rel(mcd(x, y), mcd_loop(x, y)) < 1e-9


def test_lsd_matches_loop_oracle():
    for rng, t in random_pairs(seed=2):
        x = np.exp(rng.normal(size=(t, 65)))
        y = np.exp(rng.normal(size=(t, 65)))
        x[0, 0] = 0.0  # exercise the floor
        assert _rel(lsd(x, y), lsd_loop(x, y)) < 1e-9


def test_lgd_matches_loop_oracle():
    for rng, t in random_pairs(seed=3):
        x, y = rng.normal(size=(t, 45)), rng.normal(scale=0.5, size=(t, 45))
        assert _rel(lgd(x, y), lgd_loop(x, y)) < 1e-9


def test_mcd_single_coefficient_constant():
    assert abs(mcd([[1.0]], [[0.0]]) - 10 * np.sqrt(2) / np.log(10)) < 1e-9
    assert abs(MCD_CONST - 6.141851463713754) < 1e-12


def test_mcd_excludes_c0_when_flagged():
    x = np.zeros((3, 46))
    y = np.zeros((3, 46))
    y[:, 0] = 7.0
    assert mcd(x, y, includes_c0=True) == 0.0


def test_mcd_pre_aligned_shape_mismatch():
    with pytest.raises(ValueError):
        mcd(np.zeros((3, 4)), np.zeros((4, 4)))


def test_mcd_unaligned_uses_dtw():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(12, 5))
    stretched = np.repeat(x, 2, axis=0)
    assert mcd(x, stretched, pre_aligned=False) < 1e-12


@given(arrays(np.float64, (6, 4), elements=st.floats(-10, 10)), arrays(np.float64, (6, 4), elements=st.floats(-10, 10)))
def test_mcd_symmetric_nonnegative(x, y):
    assert mcd(x, y) == pytest.approx(mcd(y, x), rel=1e-12, abs=1e-12)
    assert mcd(x, y) >= 0
    assert mcd(x, x) == 0


@given(arrays(np.float64, (5, 9), elements=st.floats(1e-3, 1e3)), st.floats(0.1, 10))
def test_lsd_of_uniform_gain(x, gain):
    assert lsd(x * gain, x) == pytest.approx(abs(20 * np.log10(gain)), rel=1e-9, abs=1e-9)


@given(arrays(np.float64, (8, 3), elements=st.floats(-5, 5)), st.floats(0.2, 5))
def test_lgd_of_scaled_trajectory(x, k):
    if np.any(global_variance(x) < 1e-6):
        return
    assert lgd(k * x, x) == pytest.approx(abs(2 * np.log(k)), rel=1e-9)


def test_lgd_needs_two_frames():
    with pytest.raises(ValueError):
        lgd(np.zeros((1, 3)), np.zeros((4, 3)))


def test_conventions_are_named():
    assert set(CONVENTIONS) == {"mcd", "lsd", "lgd"}


# ---- DTW -----------------------------------------------------------------

def test_dtw_cost_equals_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(200):
        tx, ty = (int(v) for v in rng.integers(1, 9, size=2))
        d = int(rng.integers(1, 4))
        x, y = rng.normal(size=(tx, d)), rng.normal(size=(ty, d))
        path = dtw_align(x, y)
        path.validate(tx, ty)
        assert path.cost == dtw_brute_force(x, y)
        assert path_cost(x, y, path) == pytest.approx(path.cost, rel=1e-12)


def test_brute_force_enumerates_delannoy_paths():
    assert count_monotone_paths(8, 8) == 48639
    assert count_monotone_paths(1, 5) == 1


def test_dtw_identity_is_diagonal():
    x = np.random.default_rng(0).normal(size=(7, 3))
    path = dtw_align(x, x)
    assert path.cost == 0.0
    assert np.array_equal(path.pairs[:, 0], path.pairs[:, 1])


def test_dtw_prefers_diagonal_on_ties():
    path = dtw_align(np.zeros((4, 1)), np.zeros((4, 1)) + 0.0)
    assert path.steps() == [(1, 1)] * 3
    tie = dtw_align(np.zeros((3, 1)), np.ones((3, 1)))
    assert tie.steps() == [(1, 1)] * 2


@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 10_000))
def test_dtw_transpose_symmetry(tx, ty, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(tx, 2)), rng.normal(size=(ty, 2))
    assert dtw_align(x, y).cost == pytest.approx(dtw_align(y, x).cost, rel=1e-12)


def test_dtw_band_too_narrow():
    with pytest.raises(ValueError):
        dtw_align(np.zeros((2, 1)), np.ones((9, 1)), band=0)


def test_dtw_rejects_empty():
    with pytest.raises(ValueError):
        dtw_align(np.zeros((0, 2)), np.zeros((3, 2)))


def test_path_validation_rejects_bad_steps():
    with pytest.raises(ValueError):
        AlignmentPath(np.array([[0, 0], [2, 1]])).validate(3, 2)


def test_warp_to_target_uses_last_pair():
    path = AlignmentPath(np.array([[0, 0], [1, 0], [2, 1], [2, 2]]))
    assert list(warp_to_target(np.array([10, 11, 12]), path, 3)) == [11, 12, 12]


def test_warp_to_target_keeps_frame_rows():
    x = np.arange(12.0).reshape(3, 4)
    path = AlignmentPath(np.array([[0, 0], [1, 1], [2, 1], [2, 2]]))
    assert np.array_equal(warp_to_target(x, path, 3), x[[0, 2, 2]])
