import numpy as np
import pytest

from emcov.em import (
    EmConfig,
    IllConditionedSnapshotError,
    LikelihoodDecreaseError,
    ObservedBlocks,
    conditional_moments,
    e_step,
    observed_fit_statistic,
    observed_log_likelihood,
    run_em,
)
from emcov.linalg import NotPositiveDefiniteError
from emcov.mstep import ConstraintSet
from emcov.scene import SelectionPattern, SnapshotSet, sample_covariance
from conftest import random_data, random_hpd


def naive_loglik(m, data):
    """Per-snapshot Gaussian density of the observed block, summed."""
    total = 0.0
    for pattern, y in data.records():
        idx = list(pattern.observed)
        b = m[np.ix_(idx, idx)]
        total += -len(idx) * np.log(np.pi) - np.log(np.linalg.det(b).real)
        total -= np.real(y.conj() @ np.linalg.inv(b) @ y)
    return total


def test_loglik_scalar_examples():
    one = SnapshotSet.from_records(1, [((0,), [0.0])])
    assert observed_log_likelihood(np.eye(1), one) == pytest.approx(-np.log(np.pi))
    one = SnapshotSet.from_records(1, [((0,), [1.0])])
    assert observed_log_likelihood(np.eye(1), one) == pytest.approx(-np.log(np.pi) - 1)
    assert observed_fit_statistic(np.eye(1), one) == pytest.approx(1.0)


def test_loglik_matches_naive(rng):
    for _ in range(10):
        n = int(rng.integers(2, 7))
        m = random_hpd(rng, n)
        data = random_data(rng, n, 12, p_m=0.4)
        assert observed_log_likelihood(m, data) == pytest.approx(naive_loglik(m, data), rel=1e-10)


def test_loglik_full_data_matches_complete_form(rng):
    m = random_hpd(rng, 4)
    data = random_data(rng, 4, 9, p_m=0.0)
    s = sample_covariance(data.values)
    _, logdet = np.linalg.slogdet(m)
    expect = -9 * (4 * np.log(np.pi) + logdet + np.trace(np.linalg.solve(m, s)).real)
    assert observed_log_likelihood(m, data) == pytest.approx(expect, rel=1e-12)


def test_fit_statistic_relation(rng):
    m = random_hpd(rng, 5)
    data = random_data(rng, 5, 20, p_m=0.3)
    p_total = data.mask.sum()
    assert observed_fit_statistic(m, data) == pytest.approx(
        -observed_log_likelihood(m, data) - p_total * np.log(np.pi), rel=1e-12
    )


def test_loglik_rejects_ill_conditioned_block():
    m = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-14]])
    data = SnapshotSet.from_records(2, [((0, 1), [1.0, 1.0])])
    with pytest.raises(np.linalg.LinAlgError):
        observed_log_likelihood(m, data)


def test_conditional_moments_two_by_two_example():
    cm = conditional_moments(np.array([[2.0, 1.0], [1.0, 2.0]]), SelectionPattern((0,), 2), [1.0])
    np.testing.assert_allclose(cm.mu, [0.5])
    np.testing.assert_allclose(cm.gamma, [[1.5]])
    np.testing.assert_allclose(cm.c, [[1, 0.5], [0.5, 1.75]])


def test_conditional_moments_two_by_two_monte_carlo(rng):
    # sample the joint law, keep draws whose first entry lands near y = 1
    m = np.array([[2.0, 1.0], [1.0, 2.0]])
    chol = np.linalg.cholesky(m)
    z = (rng.standard_normal((400000, 2)) + 1j * rng.standard_normal((400000, 2))) / np.sqrt(2)
    r = z @ chol.T
    near = np.abs(r[:, 0] - 1.0) < 0.05
    second = r[near, 1]
    assert abs(second.mean() - 0.5) < 0.05
    assert abs(np.mean(np.abs(second - second.mean()) ** 2) - 1.5) < 0.1


def test_conditional_moments_full_pattern(rng):
    y = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    cm = conditional_moments(random_hpd(rng, 3), SelectionPattern.full(3), y)
    assert cm.mu.size == 0 and cm.gamma.size == 0
    np.testing.assert_allclose(cm.c, np.outer(y, y.conj()))


def test_conditional_moments_identity_covariance():
    cm = conditional_moments(np.eye(4), SelectionPattern((0, 2), 4), [1.0, 2j])
    np.testing.assert_allclose(cm.mu, 0)
    np.testing.assert_allclose(cm.gamma, np.eye(2))
    zf = np.array([1.0, 0, 2j, 0])
    np.testing.assert_allclose(cm.c, np.outer(zf, zf.conj()) + np.diag([0, 1, 0, 1]))


def test_conditional_moments_observed_block_is_exact(rng):
    m = random_hpd(rng, 5)
    pattern = SelectionPattern((1, 3, 4), 5)
    y = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    cm = conditional_moments(m, pattern, y)
    idx = [1, 3, 4]
    assert np.array_equal(cm.c[np.ix_(idx, idx)], np.outer(y, y.conj()))
    assert np.trace(cm.c).real >= np.vdot(y, y).real


def test_conditional_moments_errors():
    with pytest.raises(ValueError):
        conditional_moments(np.eye(3), SelectionPattern((0,), 3), [1.0, 2.0])
    singular = np.array([[1.0, 1.0, 0], [1.0, 1.0, 0], [0, 0, 1.0]])
    with pytest.raises(IllConditionedSnapshotError):
        conditional_moments(singular, SelectionPattern((0, 1), 3), [1.0, 1.0])


def test_batched_estep_matches_per_snapshot(rng):
    m = random_hpd(rng, 6)
    data = random_data(rng, 6, 15, p_m=0.4)
    expect = sum(conditional_moments(m, p, y).c for p, y in data.records()) / data.k
    np.testing.assert_allclose(e_step(m, data), expect, atol=1e-12)


def test_estep_full_data_is_sample_covariance(rng):
    data = random_data(rng, 4, 10, p_m=0.0)
    np.testing.assert_allclose(e_step(random_hpd(rng, 4), data), sample_covariance(data.values), atol=1e-12)


def test_estep_identity_with_common_missing_set():
    rows = [((0, 1), [1.0, 1j]), ((0, 1), [2.0, -1.0])]
    sigma = e_step(np.eye(3), SnapshotSet.from_records(3, rows))
    assert sigma[2, 2] == pytest.approx(1.0)
    np.testing.assert_allclose(sigma[:2, 2], 0)


def test_estep_is_positive_definite(rng):
    for _ in range(100):
        data = random_data(rng, 4, 6, p_m=0.3)
        assert np.linalg.eigvalsh(e_step(random_hpd(rng, 4), data))[0] > 0


def test_ill_conditioned_error_names_snapshot():
    m = np.diag([1.0, 1e-14, 1.0])
    data = SnapshotSet.from_records(3, [((0, 2), [1.0, 1.0]), ((0, 1), [1.0, 1.0])])
    with pytest.raises(IllConditionedSnapshotError) as err:
        ObservedBlocks(m, data)
    assert err.value.index == 1


def test_run_em_full_data_one_step(rng):
    data = random_data(rng, 5, 30, p_m=0.0)
    res = run_em(data)
    s = sample_covariance(data.values)
    np.testing.assert_allclose(res.estimate, s, atol=1e-12 * np.linalg.norm(s))
    assert res.iterations <= 2


def test_run_em_missing_data_monotone_and_pd(rng):
    data = random_data(rng, 5, 40, p_m=0.3)
    res = run_em(data, None, EmConfig(max_iters=500), record_iterates=True)
    trace = np.array(res.likelihood_trace)
    assert np.all(np.diff(trace) >= -1e-9 * np.abs(trace[:-1]))
    assert all(np.linalg.eigvalsh(m)[0] > 0 for m in res.iterates)
    assert res.termination in ("likelihood_tol", "param_tol")


def test_run_em_increases_over_start(rng):
    data = random_data(rng, 6, 30, p_m=0.3)
    res = run_em(data, ConstraintSet.noise_floor(0.5))
    assert res.log_likelihood > res.likelihood_trace[0]
    assert np.linalg.eigvalsh(res.estimate)[0] >= 0.5 - 1e-12


def test_run_em_stops_at_max_iters(rng):
    data = random_data(rng, 5, 20, p_m=0.4)
    res = run_em(data, None, EmConfig(eps_likelihood=1e-300, eps_param=1e-300, max_iters=3))
    assert res.iterations == 3 and res.termination == "max_iters"
    assert len(res.likelihood_trace) == 4


def test_run_em_rejects_bad_init(rng):
    data = random_data(rng, 3, 10)
    with pytest.raises(NotPositiveDefiniteError):
        run_em(data, None, EmConfig(init=-np.eye(3)))
    with pytest.raises(ValueError):
        run_em(data, None, EmConfig(init=np.eye(4)))


def test_config_validation():
    for bad in (dict(eps_likelihood=0), dict(eps_param=-1), dict(max_iters=0), dict(init="zeros")):
        with pytest.raises(ValueError):
            EmConfig(**bad)


def test_likelihood_decrease_is_reported(rng):
    data = random_data(rng, 4, 20, p_m=0.3)

    class Shrink:
        # deliberately not an M-step: halves the E-step matrix
        def project(self, sigma):
            return 0.5 * sigma

    with pytest.raises(LikelihoodDecreaseError):
        run_em(data, Shrink(), EmConfig(init=np.eye(4) * 4))
