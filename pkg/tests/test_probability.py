import itertools
import math

import numpy as np
import pytest
from scipy.stats import chisquare

from avcjam.errors import EmptyTypicalSet, InvalidDistribution
from avcjam.probability import (
    ConditionalKernel,
    Distribution,
    TypicalSetParams,
    entropy,
    enumerate_typical_types,
    is_typical,
    joint_counts,
    linf_deviation,
    log2_typical_set_size,
    mutual_information,
    sample_conditional_type,
    sample_uniform_typical,
)


def test_distribution_normalizes_small_drift():
    d = Distribution([0.5, 0.5 + 5e-10])
    assert abs(d.p.sum() - 1.0) < 1e-15


def test_distribution_rejects_large_drift():
    with pytest.raises(InvalidDistribution):
        Distribution([0.5, 0.6])
    with pytest.raises(InvalidDistribution):
        Distribution([-0.1, 1.1])


def test_kernel_slices_are_distributions():
    rng = np.random.default_rng(0)
    t = rng.random((3, 2, 4))
    t /= t.sum(axis=-1, keepdims=True)
    k = ConditionalKernel(t)
    assert np.allclose(k.t.sum(axis=-1), 1.0, atol=1e-12)
    with pytest.raises(InvalidDistribution):
        ConditionalKernel([[0.5, 0.4], [0.5, 0.5]])


def test_entropy_values():
    assert entropy([0.5, 0.5]) == pytest.approx(1.0, abs=1e-15)
    assert entropy([1.0, 0.0]) == 0.0
    # frozen high-precision oracle for H(1/4, 3/4)
    assert entropy([0.25, 0.75]) == pytest.approx(0.8112781244591328, abs=1e-14)


def test_mutual_information_values():
    # independent product
    pj = np.outer([0.3, 0.7], [0.6, 0.4])
    assert mutual_information(pj) == pytest.approx(0.0, abs=1e-14)
    # identity coupling of a uniform bit
    assert mutual_information([[0.5, 0.0], [0.0, 0.5]]) == pytest.approx(1.0)
    # BSC(0.1), uniform input: frozen brute-force oracle 1 - h2(0.1)
    bsc = [[0.45, 0.05], [0.05, 0.45]]
    assert mutual_information(bsc) == pytest.approx(0.5310044064107188, abs=1e-13)


def test_mutual_information_chain_identity_random_tables():
    rng = np.random.default_rng(7)
    for _ in range(25):
        pj = rng.random((3, 4))
        pj /= pj.sum()
        lhs = mutual_information(pj)
        rhs = entropy(pj.sum(axis=1)) + entropy(pj.sum(axis=0)) - entropy(pj)
        assert lhs == pytest.approx(rhs, abs=1e-12)
        assert lhs >= -1e-12


def test_is_typical_hand_cases():
    p = Distribution([0.5, 0.5])
    assert is_typical([0, 1, 0, 1], p, TypicalSetParams(0.0, 4))
    assert is_typical([0, 0, 0, 0], p, TypicalSetParams(1.0, 4))
    # deviation 0.25 > 0.2
    assert not is_typical([0, 0, 0, 1], p, TypicalSetParams(0.2, 4))


def test_is_typical_joint_overload():
    # counts {(0,0):4,(0,1):1,(1,1):3} at n=8 -> max deviation 0.1 from P
    x = [0, 0, 1, 1, 0, 1, 0, 0]
    y = [0, 0, 1, 1, 0, 1, 1, 0]
    P = Distribution([[0.4, 0.1], [0.1, 0.4]])
    assert linf_deviation((x, y), P) == pytest.approx(0.1)
    assert is_typical((x, y), P, TypicalSetParams(0.1, 8))
    assert not is_typical((x, y), P, TypicalSetParams(0.05, 8))


def test_joint_counts_shapes():
    c = joint_counts(([0, 1, 1], [2, 0, 2]), (2, 3))
    assert c.shape == (2, 3)
    assert c.sum() == 3
    assert c[0, 2] == 1 and c[1, 0] == 1 and c[1, 2] == 1


def test_typical_type_enumeration_n6():
    # n=6, Bern(1/2), delta=0.17: counts of ones in {2,3,4}; 50 sequences
    p = Distribution([0.5, 0.5])
    params = TypicalSetParams(0.17, 6)
    types, log_sizes = enumerate_typical_types(p, params)
    assert sorted(t[1] for t in types) == [2, 3, 4]
    assert round(2 ** log2_typical_set_size(p, params)) == 50


def test_sample_uniform_typical_always_typical():
    rng = np.random.default_rng(3)
    p = Distribution([0.2, 0.5, 0.3])
    params = TypicalSetParams(0.1, 40)
    for _ in range(300):
        x = sample_uniform_typical(p, params, rng)
        assert is_typical(x, p, params)


def test_sample_uniform_typical_law_chi2():
    # exact law: uniform over the 50 sequences at n=6, delta=0.17
    rng = np.random.default_rng(11)
    p = Distribution([0.5, 0.5])
    params = TypicalSetParams(0.17, 6)
    members = [
        x for x in itertools.product([0, 1], repeat=6) if 2 <= sum(x) <= 4
    ]
    assert len(members) == 50
    index = {x: i for i, x in enumerate(members)}
    draws = 50_000
    counts = np.zeros(50)
    for _ in range(draws):
        x = tuple(int(v) for v in sample_uniform_typical(p, params, rng))
        counts[index[x]] += 1
    _, pval = chisquare(counts)
    assert pval > 0.01


def test_sample_uniform_typical_empty_raises():
    p = Distribution([1.0, 0.0])
    with pytest.raises(EmptyTypicalSet):
        # delta=0 requires 2.5 ones at n=5 with p=(0.5,0.5): impossible
        sample_uniform_typical(Distribution([0.5, 0.5]), TypicalSetParams(0.0, 5),
                               np.random.default_rng(0))
    # but a point mass at delta=0 is fine
    x = sample_uniform_typical(p, TypicalSetParams(0.0, 5), np.random.default_rng(0))
    assert list(x) == [0] * 5


def test_sample_conditional_type_always_jointly_typical():
    rng = np.random.default_rng(5)
    joint = Distribution([[0.35, 0.15], [0.1, 0.4]])
    params = TypicalSetParams(0.12, 60)
    y = sample_uniform_typical(joint.marginal(0), params, rng)
    for _ in range(200):
        z = sample_conditional_type(y, joint, params, rng)
        assert is_typical((y, z), joint, params)


def test_sample_conditional_type_uniform_law_n8():
    # exhaustive oracle: all z with ||T_{y,z} - P||_inf <= delta for fixed y
    rng = np.random.default_rng(13)
    joint = Distribution([[0.3, 0.2], [0.2, 0.3]])
    delta = 0.13
    y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    params = TypicalSetParams(delta, 8)
    members = []
    for z in itertools.product([0, 1], repeat=8):
        if is_typical((y, np.array(z)), joint, params):
            members.append(z)
    assert len(members) > 1
    index = {z: i for i, z in enumerate(members)}
    draws = 40_000
    counts = np.zeros(len(members))
    for _ in range(draws):
        z = tuple(int(v) for v in sample_conditional_type(y, joint, params, rng))
        counts[index[z]] += 1
    _, pval = chisquare(counts)
    assert pval > 0.01


def test_sample_conditional_type_counts_fixed_given_type():
    # per-symbol counts only depend on the selected conditional type
    rng = np.random.default_rng(17)
    joint = Distribution([[0.5, 0.0], [0.0, 0.5]])
    y = np.array([0, 1, 0, 1, 0, 1])
    z = sample_conditional_type(y, joint, TypicalSetParams(0.0, 6), rng)
    assert np.array_equal(z, y)  # diagonal joint forces z = y


def test_sample_conditional_type_empty():
    joint = Distribution([[0.5, 0.0], [0.0, 0.5]])
    y = np.array([0, 0, 0, 0, 0, 0])  # symbol 1 absent but joint needs mass there
    with pytest.raises(EmptyTypicalSet):
        sample_conditional_type(y, joint, TypicalSetParams(0.0, 6),
                                np.random.default_rng(0))
