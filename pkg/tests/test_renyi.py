import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phylab.core import DimensionMismatchError, PhylabError
from phylab.renyi import (
    KernelSpec,
    NormalizedGram,
    conditional_entropy,
    constant_gram,
    gram_matrix,
    hadamard_normalized,
    joint_entropy,
    mutual_information,
    normalize_gram,
    renyi_entropy,
    sample_gram,
    silverman_sigma,
    silverman_total_sigma,
)

alphas = st.floats(0.1, 5).filter(lambda a: abs(a - 1) > 1e-3)


def oracle_entropy(a, alpha):
    lam = np.linalg.eigh(a)[0]
    lam = np.clip(lam, 0, None)
    lam = lam[lam > 0]
    return math.log2(float(np.sum(lam**alpha))) / (1 - alpha)


def random_gram(B, d, seed):
    x = np.random.default_rng(seed).normal(size=(B, d))
    return sample_gram(x)


def test_silverman_unit_normal():
    x = np.random.default_rng(0).normal(size=100)
    assert abs(silverman_sigma(x) - 0.42) <= 0.05


def test_silverman_constant_and_scale():
    assert silverman_sigma(np.ones((10, 3))) == 1e-6
    assert silverman_total_sigma(np.ones((10, 3))) == 1e-6
    x = np.random.default_rng(1).normal(size=(50, 4))
    assert silverman_sigma(10 * x) == pytest.approx(10 * silverman_sigma(x), abs=1e-9)
    assert silverman_total_sigma(10 * x) == pytest.approx(10 * silverman_total_sigma(x), abs=1e-9)


def test_bandwidth_rules_agree_in_one_dimension():
    x = np.random.default_rng(2).normal(size=(80, 1))
    assert silverman_total_sigma(x) == pytest.approx(silverman_sigma(x), rel=1e-14)


def test_total_variance_rule_scales_with_root_dimension():
    x = np.random.default_rng(3).normal(size=(200, 64))
    assert silverman_total_sigma(x) / silverman_sigma(x) == pytest.approx(8.0, rel=0.05)


def test_kernel_spec_validation():
    with pytest.raises(PhylabError):
        KernelSpec(kind="laplace")
    with pytest.raises(PhylabError):
        KernelSpec(sigma=0.0)
    with pytest.raises(PhylabError):
        KernelSpec(rule="scott")
    assert KernelSpec(sigma=2.5).bandwidth(np.zeros((3, 1))) == 2.5


def test_gram_examples():
    np.testing.assert_array_equal(gram_matrix(np.ones((4, 2)), KernelSpec(sigma=1.0)), np.ones((4, 4)))
    sigma = 0.7
    k = gram_matrix(np.array([[0.0, 0.0], [sigma * math.sqrt(2), 0.0]]), sigma=sigma)
    assert k[0, 1] == pytest.approx(math.exp(-1), rel=1e-14)


def test_gram_matches_pairwise_oracle():
    x = np.random.default_rng(4).normal(size=(5, 3))
    k = gram_matrix(x, sigma=1.3)
    for i in range(5):
        for j in range(5):
            d2 = sum((x[i, t] - x[j, t]) ** 2 for t in range(3))
            assert abs(k[i, j] - math.exp(-d2 / (2 * 1.3**2))) <= 1e-12


def test_normalize_examples():
    k = gram_matrix(np.random.default_rng(0).normal(size=(6, 2)), sigma=1.0)
    np.testing.assert_allclose(normalize_gram(k).a, k / 6, atol=1e-16)
    a = normalize_gram(np.eye(4)).a
    np.testing.assert_array_equal(a, np.eye(4) / 4)
    with pytest.raises(PhylabError):
        normalize_gram(np.diag([1.0, 0.0]))
    with pytest.raises(DimensionMismatchError):
        normalize_gram(np.ones((2, 3)))


@given(st.integers(0, 10_000), st.integers(2, 12))
def test_normalize_random_psd(seed, B):
    g = np.random.default_rng(seed).normal(size=(B, B + 2))
    a = normalize_gram(g @ g.T + 1e-3 * np.eye(B)).a
    np.testing.assert_array_equal(a, a.T)
    assert np.trace(a) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("B", [2, 4, 16, 64])
@pytest.mark.parametrize("alpha", [0.5, 1.01, 2.0, 3.0])
def test_uniform_spectrum_gives_log_b(B, alpha):
    assert renyi_entropy(normalize_gram(np.eye(B)), alpha) == pytest.approx(math.log2(B), abs=1e-12)


def test_rank_one_is_zero():
    assert renyi_entropy(constant_gram(7), 1.01) == pytest.approx(0.0, abs=1e-12)
    assert renyi_entropy(sample_gram(np.ones((5, 3))), 2.0) == pytest.approx(0.0, abs=1e-12)


def test_two_by_two_closed_form():
    c = 0.5
    a = np.array([[0.5, c / 2], [c / 2, 0.5]])
    assert renyi_entropy(a, 2.0) == pytest.approx(-math.log2((1 + c * c) / 2), rel=1e-13)


def test_alpha_validation():
    a = normalize_gram(np.eye(3))
    for bad in (1.0, 0.0, -1.0):
        with pytest.raises(PhylabError):
            renyi_entropy(a, bad)


@given(st.integers(0, 10_000), st.integers(2, 20), alphas)
def test_entropy_bounds(seed, B, alpha):
    s = renyi_entropy(random_gram(B, 2, seed), alpha)
    assert -1e-9 <= s <= math.log2(B) + 1e-9


@given(st.integers(0, 10_000), st.permutations(range(8)))
def test_entropy_permutation_invariant(seed, perm):
    x = np.random.default_rng(seed).normal(size=(8, 2))
    a = renyi_entropy(sample_gram(x))
    b = renyi_entropy(sample_gram(x[list(perm)]))
    assert b == pytest.approx(a, abs=1e-9)


@given(st.integers(0, 10_000), st.floats(-50, 50), st.floats(0, 2 * math.pi))
def test_entropy_translation_and_rotation_invariant(seed, shift, theta):
    x = np.random.default_rng(seed).normal(size=(10, 2))
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    a = renyi_entropy(sample_gram(x))
    b = renyi_entropy(sample_gram(x @ R.T + shift))
    assert b == pytest.approx(a, abs=1e-8)


def test_joint_with_constant_is_marginal():
    a = random_gram(9, 2, 0)
    e = constant_gram(9)
    np.testing.assert_allclose(hadamard_normalized(a, e).a, a.a, atol=1e-15)
    assert joint_entropy(a, e) == pytest.approx(renyi_entropy(a), abs=1e-12)


def test_joint_of_identities():
    i = normalize_gram(np.eye(6))
    assert joint_entropy(i, i, 2.0) == pytest.approx(math.log2(6), abs=1e-12)


def test_joint_matches_eigen_oracle():
    a, b = random_gram(6, 2, 1), random_gram(6, 3, 2)
    h = a.a * b.a
    h = h / np.trace(h)
    assert abs(joint_entropy(a, b, 1.01) - oracle_entropy(h, 1.01)) <= 1e-9


def test_size_mismatch():
    with pytest.raises(DimensionMismatchError):
        joint_entropy(random_gram(4, 1, 0), random_gram(5, 1, 0))
    with pytest.raises(DimensionMismatchError):
        mutual_information(random_gram(4, 1, 0), random_gram(5, 1, 0))
    with pytest.raises(DimensionMismatchError):
        conditional_entropy(np.zeros((4, 2)), np.zeros((5, 2)))


def test_mi_against_constant_and_symmetry():
    a, b = random_gram(12, 2, 3), random_gram(12, 2, 4)
    assert abs(mutual_information(a, constant_gram(12))) <= 1e-9
    assert mutual_information(a, b) == mutual_information(b, a)


@given(st.integers(0, 10_000))
def test_joint_bounds(seed):
    a, b = random_gram(10, 2, seed), random_gram(10, 2, seed + 1)
    s_ab = joint_entropy(a, b)
    assert s_ab >= max(renyi_entropy(a), renyi_entropy(b)) - 1e-9
    assert s_ab <= renyi_entropy(a) + renyi_entropy(b) + 1e-9


def test_mi_increases_with_correlation():
    def mi(rho, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=400)
        y = rho * x + math.sqrt(1 - rho * rho) * rng.normal(size=400)
        return mutual_information(sample_gram(x), sample_gram(y))

    avg = {rho: np.mean([mi(rho, s) for s in range(10)]) for rho in (0.0, 0.5, 0.9)}
    assert avg[0.9] > avg[0.5] > avg[0.0]


def test_conditional_with_constant_conditioner():
    z = np.random.default_rng(5).normal(size=(30, 3))
    assert conditional_entropy(z, np.ones((30, 2))) == pytest.approx(renyi_entropy(sample_gram(z)), abs=1e-12)


def test_conditional_on_itself_is_small():
    z = np.random.default_rng(6).normal(size=(60, 2))
    assert conditional_entropy(z, z) < 0.5 * renyi_entropy(sample_gram(z))


def test_conditional_needs_two_samples():
    with pytest.raises(PhylabError):
        conditional_entropy(np.zeros((1, 2)), np.zeros((1, 2)))


def test_negative_eigenvalue_warning(caplog):
    a = np.array([[0.6, 0.5], [0.5, 0.4]])  # indefinite, unit trace
    with caplog.at_level("WARNING", logger="phylab.renyi"):
        renyi_entropy(NormalizedGram(a))
    assert "eigenvalue" in caplog.text
