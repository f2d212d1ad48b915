import math

import numpy as np
import pytest
from scipy import integrate

import mixnoise
from mixnoise import GaussianMixture
from matstat import make_rng


@pytest.fixture
def bimodal():
    return mixnoise.bimodal_pmu_noise()


def test_bimodal_definition(bimodal):
    assert len(bimodal.components) == 2
    np.testing.assert_array_equal(bimodal.weights, [0.9, 0.1])
    assert math.fsum(bimodal.weights) == pytest.approx(1.0, abs=1e-12)
    mean, var = mixnoise.moments(bimodal)
    assert mean == 0.0
    assert var == pytest.approx(1.9e-4, rel=1e-12)


def test_invalid_mixtures():
    with pytest.raises(ValueError):
        GaussianMixture.from_triples([(0.5, 0.0, 1.0), (0.4, 0.0, 1.0)])
    with pytest.raises(ValueError):
        GaussianMixture.from_triples([(1.0, 0.0, 0.0)])
    with pytest.raises(ValueError):
        GaussianMixture.from_triples([(1.2, 0.0, 1.0), (-0.2, 0.0, 1.0)])
    with pytest.raises(ValueError):
        GaussianMixture(())


def test_sample_variance(bimodal):
    draws = mixnoise.sample(bimodal, make_rng(20190101), size=1_000_000)
    assert abs(np.var(draws) - 1.9e-4) <= 0.02 * 1.9e-4


def test_sample_deterministic(bimodal):
    a = mixnoise.sample(bimodal, make_rng(9), size=100)
    b = mixnoise.sample(bimodal, make_rng(9), size=100)
    np.testing.assert_array_equal(a, b)
    assert isinstance(mixnoise.sample(bimodal, make_rng(9)), float)


def test_sample_degenerate():
    g = GaussianMixture.from_triples([(1.0, 0.0, 1e-30)])
    assert np.max(np.abs(mixnoise.sample(g, make_rng(0), size=1000))) < 1e-12


def test_sample_with_labels_follows_weights(bimodal):
    _, labels = mixnoise.sample_with_labels(bimodal, make_rng(4), 100_000)
    share = np.mean(labels == 1)
    assert abs(share - 0.1) < 4 * math.sqrt(0.09 / 100_000)


def test_pdf_standard_normal():
    g = GaussianMixture.from_triples([(1.0, 0.0, 1.0)])
    assert mixnoise.pdf(g, 0.0) == pytest.approx(1.0 / math.sqrt(2 * math.pi), rel=1e-12)


def test_pdf_bimodal_at_zero(bimodal):
    expected = 0.9 / math.sqrt(2 * math.pi * 1e-4) + 0.1 / math.sqrt(2 * math.pi * 1e-3)
    assert mixnoise.pdf(bimodal, 0.0) == pytest.approx(expected, rel=1e-12)
    values = mixnoise.pdf(bimodal, np.array([-0.01, 0.0, 0.01]))
    assert values.shape == (3,)
    assert values[0] == pytest.approx(values[2])


def test_pdf_integrates_to_one(bimodal):
    total, _ = integrate.quad(lambda x: mixnoise.pdf(bimodal, x), -0.5, 0.5, points=[0.0], limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_moments_of_single_component():
    g = GaussianMixture.from_triples([(1.0, 0.3, 0.02)])
    assert mixnoise.moments(g) == pytest.approx((0.3, 0.02))


def test_moments_of_symmetric_means():
    a, var = 0.05, 1e-4
    g = GaussianMixture.from_triples([(0.5, -a, var), (0.5, a, var)])
    mean, variance = mixnoise.moments(g)
    assert mean == pytest.approx(0.0, abs=1e-15)
    assert variance == pytest.approx(var + a * a, rel=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_moments_agree_with_sampling(k):
    rng = make_rng(100 + k)
    weights = rng.dirichlet(np.ones(k))
    weights = weights / weights.sum()
    triples = [(w, m, v) for w, m, v in zip(weights, rng.uniform(-1.0, 1.0, k), rng.uniform(0.1, 1.0, k))]
    g = GaussianMixture.from_triples(triples)
    mean, var = mixnoise.moments(g)

    n = 200_000
    draws = mixnoise.sample(g, rng, size=n)
    assert abs(np.mean(draws) - mean) <= 5 * math.sqrt(var / n)
    assert abs(np.var(draws) - var) <= 0.03 * var


def test_matched_gaussian(bimodal):
    g = mixnoise.matched_gaussian(bimodal)
    assert len(g.components) == 1
    assert mixnoise.moments(g) == pytest.approx(mixnoise.moments(bimodal))


def test_parse_and_format():
    g = mixnoise.parse_mixture("0.9,0,1e-4; 0.1,0,1e-3")
    assert g == mixnoise.bimodal_pmu_noise()
    assert mixnoise.parse_mixture(mixnoise.format_mixture(g)) == g
    with pytest.raises(ValueError):
        mixnoise.parse_mixture("0.9,0")
    with pytest.raises(ValueError):
        mixnoise.parse_mixture("1,zero,1")
