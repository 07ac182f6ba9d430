import numpy as np
import pytest

from emcov import presets
from emcov.scene import (
    ArrayGeometry,
    JammerSpec,
    MissingnessModel,
    SelectionPattern,
    SnapshotSet,
    SourceSpec,
    disturbance_covariance,
    sample_covariance,
    sample_snapshots,
    source_covariance,
    steering_vector,
    steering_vector_u,
    zero_filled_sample_covariance,
)

G20 = ArrayGeometry(20)


def test_geometry_validation():
    with pytest.raises(ValueError, match="n_elements"):
        ArrayGeometry(1)
    with pytest.raises(ValueError):
        ArrayGeometry(4, 0.0)
    assert G20.ssbw == pytest.approx(0.891 / 20)


def test_steering_boresight_is_all_ones():
    np.testing.assert_allclose(steering_vector(G20, 0.0), np.ones(20))


def test_steering_endfire_limit():
    v = steering_vector(ArrayGeometry(2), 90 - 1e-9)
    assert v[1] == pytest.approx(-1.0, abs=1e-9)


def test_steering_phases_at_30_degrees():
    v = steering_vector(ArrayGeometry(4), 30.0)
    k = np.arange(4)
    np.testing.assert_allclose(v, np.exp(1j * k * np.pi * 0.5), atol=1e-14)


def test_steering_in_cosine_matches_angle():
    np.testing.assert_allclose(steering_vector_u(G20, np.sin(np.radians(25))), steering_vector(G20, 25))


def test_steering_rejects_out_of_range():
    with pytest.raises(ValueError):
        steering_vector(G20, 91)


def test_no_jammers_gives_identity():
    np.testing.assert_allclose(disturbance_covariance(ArrayGeometry(5), []), np.eye(5))


def test_narrowband_jammer_at_boresight():
    m = disturbance_covariance(ArrayGeometry(4), [JammerSpec(0.0, 30.0)])
    np.testing.assert_allclose(m, np.eye(4) + 1000 * np.ones((4, 4)), rtol=1e-12)


def test_wideband_jammer_diagonal_and_taper():
    g = ArrayGeometry(6)
    m = disturbance_covariance(g, [JammerSpec(40.0, 30.0, 0.03)], white_noise_power=2.0)
    # jammer power is JNR times the white-noise power
    np.testing.assert_allclose(np.diag(m).real, 2000 + 2.0)
    narrow = disturbance_covariance(g, [JammerSpec(40.0, 30.0)], white_noise_power=2.0)
    assert np.all(np.abs(m) <= np.abs(narrow) + 1e-9)
    assert abs(m[0, 5]) < abs(narrow[0, 5])
    # independent evaluation of one off-diagonal entry
    zeta = np.pi * np.sin(np.radians(40))
    x = 0.5 * 0.03 * 3 * zeta
    expect = 2000 * np.sin(x) / x * np.exp(1j * 3 * zeta)
    assert m[3, 0] == pytest.approx(expect, rel=1e-12)


def test_wideband_reduces_to_narrowband_for_zero_bandwidth():
    g = ArrayGeometry(8)
    a = disturbance_covariance(g, [JammerSpec(30.0, 20.0, 0.0)])
    b = disturbance_covariance(g, [JammerSpec(30.0, 20.0)])
    np.testing.assert_allclose(a, b)


def test_source_covariance_rank_one_spectrum():
    m = source_covariance(G20, [SourceSpec(0.0, 2.0)], 1.0)
    lam = np.linalg.eigvalsh(m)
    assert lam[-1] == pytest.approx(20 * 2.0 + 1.0)
    np.testing.assert_allclose(lam[:-1], 1.0)


def test_two_close_sources_have_rank_two():
    ms = source_covariance(G20, presets.clustered_sources(2, G20), 1.0) - np.eye(20)
    lam = np.linalg.eigvalsh(ms)
    assert np.sum(lam > 1e-9 * lam[-1]) == 2


def test_zero_sources_is_white():
    np.testing.assert_allclose(source_covariance(G20, [], 3.0), 3 * np.eye(20))


def test_selection_pattern_validation():
    with pytest.raises(ValueError):
        SelectionPattern((1, 0), 3)
    with pytest.raises(ValueError):
        SelectionPattern((0, 3), 3)
    with pytest.raises(ValueError):
        SelectionPattern((), 3)
    p = SelectionPattern((0, 2), 3)
    assert p.missing == (1,)
    np.testing.assert_array_equal(p.selection_matrix(), [[1, 0, 0], [0, 0, 1]])


def test_missingness_validation():
    with pytest.raises(ValueError):
        MissingnessModel.bernoulli(1.0)
    with pytest.raises(ValueError):
        MissingnessModel("cyclic")
    with pytest.raises(ValueError):
        MissingnessModel("random")


def test_sample_without_missingness_is_complete():
    draw = sample_snapshots(np.eye(3), 10, None, 1)
    assert draw.data.mask.all()
    np.testing.assert_array_equal(draw.data.values, draw.complete)


def test_bernoulli_zero_matches_none():
    a = sample_snapshots(np.eye(4), 7, None, 5)
    b = sample_snapshots(np.eye(4), 7, MissingnessModel.bernoulli(0.0), 5)
    np.testing.assert_array_equal(a.data.values, b.data.values)
    np.testing.assert_array_equal(a.data.mask, b.data.mask)


def test_same_seed_same_complete_data_across_missingness():
    a = sample_snapshots(np.eye(4), 7, None, 5)
    b = sample_snapshots(np.eye(4), 7, MissingnessModel.bernoulli(0.5), 5)
    np.testing.assert_array_equal(a.complete, b.complete)
    np.testing.assert_array_equal(b.data.values[b.data.mask], b.complete[b.data.mask])
    assert np.all(b.data.values[~b.data.mask] == 0)


def test_bernoulli_rows_never_empty():
    draw = sample_snapshots(np.eye(2), 400, MissingnessModel.bernoulli(0.9), 3)
    assert draw.data.mask.any(axis=1).all()
    assert draw.resampled_patterns > 0


def test_cyclic_patterns_repeat():
    pats = [SelectionPattern((0, 1), 3), SelectionPattern((1, 2), 3)]
    draw = sample_snapshots(np.eye(3), 5, MissingnessModel.cyclic(pats), 0)
    assert [draw.data.pattern(i).observed for i in range(5)] == [(0, 1), (1, 2)] * 2 + [(0, 1)]


def test_sample_covariance_law_of_large_numbers():
    draw = sample_snapshots(np.eye(4), 10000, None, 11)
    assert np.linalg.norm(sample_covariance(draw.complete) - np.eye(4)) < 0.1


def test_sampling_rejects_indefinite():
    with pytest.raises(np.linalg.LinAlgError):
        sample_snapshots(np.diag([1.0, -1.0]), 3)


def test_zero_filled_full_equals_sample_covariance():
    draw = sample_snapshots(np.eye(3), 6, None, 2)
    np.testing.assert_allclose(zero_filled_sample_covariance(draw.data), sample_covariance(draw.complete))


def test_zero_filled_single_entry():
    data = SnapshotSet.from_records(2, [((0,), [2.0])])
    np.testing.assert_allclose(zero_filled_sample_covariance(data), [[4, 0], [0, 0]])


def test_zero_filled_is_psd(rng):
    draw = sample_snapshots(np.eye(6), 4, MissingnessModel.bernoulli(0.4), rng)
    assert np.linalg.eigvalsh(zero_filled_sample_covariance(draw.data))[0] >= -1e-10


def test_snapshot_set_validation():
    with pytest.raises(ValueError):
        SnapshotSet(2, np.zeros((0, 2), bool), np.zeros((0, 2)))
    with pytest.raises(ValueError):
        SnapshotSet(2, np.array([[False, False]]), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        SnapshotSet.from_records(2, [((0,), [1.0, 2.0])])


def test_snapshot_set_records_round_trip(tiny_set):
    again = SnapshotSet.from_records(3, [(p.observed, y) for p, y in tiny_set.records()])
    np.testing.assert_array_equal(again.mask, tiny_set.mask)
    np.testing.assert_array_equal(again.values, tiny_set.values)


def test_presets():
    assert presets.jammer_doas() == [20, 30, 40, 50, 60]
    assert all(j.fractional_bandwidth == 0 for j in presets.scenario1())
    assert all(j.fractional_bandwidth == 0.03 for j in presets.scenario2())
    np.testing.assert_allclose(presets.clustered_cosines(3, G20), np.array([-0.5, 0.5, 1.5]) * 0.891 / 20)
    np.testing.assert_allclose(presets.clustered_cosines(4, G20)[-1], -1.5 * 0.891 / 20)
    assert presets.source_power_for_asnr(10.0, 20) == pytest.approx(0.5)
