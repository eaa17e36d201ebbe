import numpy as np
import pytest
from scipy.stats import chisquare

from avcjam.capacity import GpChannelSpec, ShannonStrategy, worst_memoryless_jammer
from avcjam.errors import CodebookTooLarge, ConfigError
from avcjam.gp_codec import (
    DiscreteBinnedCodebook,
    GpDecoderParams,
    GpEncoderParams,
    GpSimParams,
    ListGeometry,
    calibrate_gamma,
    generate_discrete_codebook,
    gp_decode,
    gp_encode,
    impostor_type_bound,
    joint_type_with_output,
    list_membership,
    permuted_message_layer,
    simulate_gp,
)
from avcjam.jammers import (
    JammerStrategy,
    PublicCodeParams,
    memoryless_jammer,
    zero_jammer,
)
from avcjam.probability import (
    ConditionalKernel,
    Distribution,
    TypicalSetParams,
    is_typical,
    mutual_information,
)

HALF = Distribution(np.array([0.5, 0.5]))


def identity_channel():
    """Noiseless binary channel, single state, single jamming symbol."""
    w = np.zeros((2, 1, 1, 2))
    w[0, 0, 0, 0] = 1.0
    w[1, 0, 0, 1] = 1.0
    spec = GpChannelSpec(ConditionalKernel(w), Distribution(np.array([1.0])))
    strategy = ShannonStrategy(np.array([[0], [1]]))
    pus = ConditionalKernel(np.array([[0.5, 0.5]]))
    return spec, strategy, pus


def flip_channel():
    """y = x xor j; two equally likely states that the channel ignores."""
    w = np.zeros((2, 2, 2, 2))
    for x in range(2):
        for s in range(2):
            for j in range(2):
                w[x, s, j, x ^ j] = 1.0
    spec = GpChannelSpec(ConditionalKernel(w), HALF)
    strategy = ShannonStrategy(np.array([[0, 0], [1, 1]]))
    pus = ConditionalKernel(np.array([[0.5, 0.5], [0.5, 0.5]]))
    return spec, strategy, pus


def additive_channel():
    """y = x xor s xor j."""
    w = np.zeros((2, 2, 2, 2))
    for x in range(2):
        for s in range(2):
            for j in range(2):
                w[x, s, j, x ^ s ^ j] = 1.0
    spec = GpChannelSpec(ConditionalKernel(w), HALF)
    strategy = ShannonStrategy(np.array([[0, 0], [1, 1]]))
    pus = ConditionalKernel(np.array([[0.5, 0.5], [0.5, 0.5]]))
    return spec, strategy, pus


def bsc_pair_channel(p0: float, p1: float):
    """Jammer picks between two crossover probabilities; states ignored."""
    w = np.zeros((2, 2, 2, 2))
    for x in range(2):
        for s in range(2):
            for j, p in enumerate((p0, p1)):
                w[x, s, j, x] = 1 - p
                w[x, s, j, 1 - x] = p
    spec = GpChannelSpec(ConditionalKernel(w), HALF)
    strategy = ShannonStrategy(np.array([[0, 0], [1, 1]]))
    pus = ConditionalKernel(np.array([[0.5, 0.5], [0.5, 0.5]]))
    return spec, strategy, pus


def bsc_channel(p: float):
    """Plain binary symmetric channel, single state, single jamming symbol."""
    w = np.zeros((2, 1, 1, 2))
    w[0, 0, 0] = [1 - p, p]
    w[1, 0, 0] = [p, 1 - p]
    spec = GpChannelSpec(ConditionalKernel(w), Distribution(np.array([1.0])))
    strategy = ShannonStrategy(np.array([[0], [1]]))
    pus = ConditionalKernel(np.array([[0.5, 0.5]]))
    return spec, strategy, pus


def test_codebook_typical_deterministic_and_seed_sensitive():
    book = generate_discrete_codebook(32, 3 / 32, 2 / 32, HALF, 0.2, seed=5)
    assert book.codewords.shape == (8, 4, 32)
    params = TypicalSetParams(delta=0.2, n=32)
    for row in book.flat():
        assert is_typical(row, HALF, params)
    again = generate_discrete_codebook(32, 3 / 32, 2 / 32, HALF, 0.2, seed=5)
    assert np.array_equal(book.codewords, again.codewords)

    a = generate_discrete_codebook(64, 4 / 64, 2 / 64, HALF, 0.2, seed=1)
    b = generate_discrete_codebook(64, 4 / 64, 2 / 64, HALF, 0.2, seed=2)
    same = np.all(a.flat() == b.flat(), axis=1).mean()
    assert same <= 0.01


def test_codebook_rate_floor_and_guard():
    book = generate_discrete_codebook(32, 0.1, 0.0, HALF, 0.3, seed=0)
    assert book.n_bins == 9  # floor(2^3.2)
    assert book.per_bin == 1
    assert book.rate == pytest.approx(np.log2(9) / 32)
    with pytest.raises(CodebookTooLarge):
        generate_discrete_codebook(64, 0.5, 0.0, HALF, 0.3, seed=0)


def test_encode_vacuous_radius_never_falls_back():
    _, strategy, _ = identity_channel()
    book = generate_discrete_codebook(16, 2 / 16, 2 / 16, HALF, 0.3, seed=3)
    p_joint = np.array([[0.5], [0.5]])
    rng = np.random.default_rng(0)
    for _ in range(50):
        s = np.zeros(16, dtype=np.int64)
        res = gp_encode(2, s, book, strategy, p_joint, GpEncoderParams(1.0), rng)
        assert not res.fallback
        assert res.bin == 2
        assert np.array_equal(res.x, res.u)


def test_encode_uniform_among_satisfiers():
    _, strategy, _ = identity_channel()
    book = generate_discrete_codebook(16, 1 / 16, 2 / 16, HALF, 0.3, seed=3)
    p_joint = np.array([[0.5], [0.5]])
    rng = np.random.default_rng(1)
    s = np.zeros(16, dtype=np.int64)
    picks = [gp_encode(1, s, book, strategy, p_joint, GpEncoderParams(1.0), rng).index
             for _ in range(2000)]
    counts = np.bincount(picks, minlength=4)
    assert chisquare(counts).pvalue > 0.01


def test_encode_falls_back_to_first_codeword():
    _, strategy, _ = flip_channel()
    book = generate_discrete_codebook(16, 2 / 16, 2 / 16, HALF, 0.3, seed=7)
    p_joint = np.array([[0.25, 0.25], [0.25, 0.25]])
    s = np.zeros(16, dtype=np.int64)  # state type (1, 0) is far from (0.5, 0.5)
    res = gp_encode(3, s, book, strategy, p_joint, GpEncoderParams(0.05),
                    np.random.default_rng(2))
    assert res.fallback
    assert res.bin == 1 and res.index == 0
    assert np.array_equal(res.u, book.codewords[0, 0])


def test_encode_rare_fallback_with_spare_bin_rate():
    # binning rate well above the state correlation it must absorb
    p_joint = np.array([[0.3, 0.2], [0.2, 0.3]])
    _, strategy, _ = flip_channel()
    book = generate_discrete_codebook(32, 2 / 32, 8 / 32, HALF, 0.2, seed=11)
    rng = np.random.default_rng(4)
    falls = 0
    for _ in range(1000):
        s = rng.integers(0, 2, size=32)
        m = int(rng.integers(0, book.n_bins)) + 1
        res = gp_encode(m, s, book, strategy, p_joint, GpEncoderParams(0.15), rng)
        falls += res.fallback
    assert falls / 1000 < 0.05


def test_list_membership_vertex_match_and_vacuous_radius():
    spec, strategy, pus = flip_channel()
    u = np.tile([0, 1], 8)
    y = u.copy()
    assert list_membership(u, y, spec, strategy, pus, gamma=0.0)
    y_bad = np.concatenate([np.zeros(8, np.int64), np.ones(8, np.int64)])
    assert list_membership(np.zeros(16, np.int64), y_bad, spec, strategy, pus, gamma=1.0)


def test_list_membership_margin_case_against_grid():
    spec, strategy, pus = flip_channel()
    # joint counts [[14, 1], [1, 4]] at n=20: off-affine by l-inf margin 0.25
    u = np.array([0] * 15 + [1] * 5)
    y = np.array([0] * 14 + [1] + [0] + [1] * 4)
    geo = ListGeometry(spec, strategy, pus)
    t_joint = joint_type_with_output(u, y, 2, 2)

    grid = np.linspace(0.0, 1.0, 65)
    best = np.inf
    for q0 in grid:
        for q1 in grid:
            pq = np.empty((2, 2))
            for uu in range(2):
                for yy in range(2):
                    e = uu ^ yy
                    pq[uu, yy] = 0.25 * ((q0 if e else 1 - q0) + (q1 if e else 1 - q1))
            best = min(best, np.abs(t_joint - pq).max())
    lp = geo.min_deviation(t_joint)
    assert lp == pytest.approx(0.25, abs=1e-9)
    assert lp <= best + 1e-12
    assert best - lp <= 0.02
    assert not list_membership(u, y, spec, strategy, pus, gamma=0.05)
    assert list_membership(u, y, spec, strategy, pus, gamma=0.26)


def test_min_deviation_matches_dense_grid_on_random_instances():
    rng = np.random.default_rng(9)
    grid = np.linspace(0.0, 1.0, 65)
    for _ in range(5):
        w = rng.dirichlet(np.ones(2), size=(2, 2, 2))
        spec = GpChannelSpec(ConditionalKernel(w), HALF)
        pus = ConditionalKernel(rng.dirichlet(np.ones(2), size=2))
        strategy = ShannonStrategy(rng.integers(0, 2, size=(2, 2)))
        geo = ListGeometry(spec, strategy, pus)
        u = rng.integers(0, 2, size=24)
        y = rng.integers(0, 2, size=24)
        t_joint = joint_type_with_output(u, y, 2, 2)
        best = np.inf
        for q0 in grid:
            for q1 in grid:
                q = np.array([[1 - q0, q0], [1 - q1, q1]])
                pq = np.einsum("uysj,sj->uy", geo.a, q)
                best = min(best, np.abs(t_joint - pq).max())
        lp = geo.min_deviation(t_joint)
        assert lp <= best + 1e-10
        assert best - lp <= 0.03


def _manual_book(rows_by_bin, n, delta=0.25):
    words = np.array(rows_by_bin, dtype=np.int64)[:, None, :]
    return DiscreteBinnedCodebook(
        n=n, rate=np.log2(words.shape[0]) / n, rate_bin=0.0,
        codewords=words, seed=0, p_u=HALF, delta=delta,
    )


def test_decode_singleton_mixed_and_empty_lists():
    spec, strategy, pus = identity_channel()
    a = np.tile([0, 1], 4)
    b = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    params = GpDecoderParams(gamma=0.1)

    book = _manual_book([a, b], 8)
    out = gp_decode(a, book, spec, strategy, pus, params)
    assert out.mhat == 1
    assert out.members == [(1, 0)]

    book_dup = _manual_book([a, a], 8)
    out = gp_decode(a, book_dup, spec, strategy, pus, params)
    assert out.mhat == 0
    assert sorted(out.members) == [(1, 0), (2, 0)]

    out = gp_decode(np.ones(8, np.int64), book, spec, strategy, pus, params)
    assert out.mhat == 0 and out.members == []


def test_decode_soundness_recheck():
    spec, strategy, pus = bsc_pair_channel(0.05, 0.15)
    n, gamma = 64, 0.15
    book = generate_discrete_codebook(n, 2 / n, 1 / n, HALF, 0.25, seed=21)
    geo = ListGeometry(spec, strategy, pus)
    params = GpDecoderParams(gamma=gamma)
    p_joint = np.array([[0.25, 0.25], [0.25, 0.25]])
    rng = np.random.default_rng(5)
    seen_nonzero = 0
    for _ in range(12):
        s = rng.integers(0, 2, size=n)
        m = int(rng.integers(0, book.n_bins)) + 1
        res = gp_encode(m, s, book, strategy, p_joint, GpEncoderParams(0.5), rng)
        j = rng.integers(0, 2, size=n)
        probs = spec.w.t[res.x, s, j]
        y = (rng.random(n)[:, None] > np.cumsum(probs, axis=1)).sum(axis=1)
        out = gp_decode(y, book, spec, strategy, pus, params, geo)
        for b, k in out.members:
            assert list_membership(book.codewords[b - 1, k], y, spec, strategy,
                                   pus, gamma, geometry=geo)
        if out.mhat:
            seen_nonzero += 1
            assert {b for b, _ in out.members} == {out.mhat}
    assert seen_nonzero > 0


def test_permutation_layer_roundtrip_and_uniformity():
    fwd, inv = permuted_message_layer(8, seed=4)
    assert [inv(fwd(m)) for m in range(1, 9)] == list(range(1, 9))
    fwd2, _ = permuted_message_layer(8, seed=4)
    assert [fwd(m) for m in range(1, 9)] == [fwd2(m) for m in range(1, 9)]

    hits = np.zeros(8, dtype=np.int64)
    for seed in range(10_000):
        f, _ = permuted_message_layer(8, seed=seed)
        hits[f(1) - 1] += 1
    assert chisquare(hits).pvalue > 0.01


def test_simulate_redraws_permutation_each_trial():
    spec, strategy, pus = identity_channel()
    params = GpSimParams(n=64, rate=4 / 64, rate_bin=0.0,
                         use_permutation=True)
    recs, summ = simulate_gp(spec, strategy, pus, params, zero_jammer(),
                             trials=60, seed=21)
    # the inverse layer must track the per-trial draw exactly
    assert summ.err_rate == 0.0
    assert all(r.mhat == r.m for r in recs)
    # distinct trials see distinct relabelings almost surely at 16 bins
    perms = {tuple(permuted_message_layer(16, (21, t))[0](m)
                   for m in range(1, 17)) for t in range(20)}
    assert len(perms) > 1


def test_simulate_noiseless_identity_zero_errors():
    spec, strategy, pus = identity_channel()
    params = GpSimParams(n=64, rate=6 / 64, rate_bin=0.0,
                         delta=0.05, delta1=0.2, gamma=0.08)
    records, summary = simulate_gp(spec, strategy, pus, params,
                                   zero_jammer(), trials=1000, seed=31)
    assert summary.trials == 1000
    assert summary.errors == 0
    assert all(r.error_type == "" for r in records)


def test_simulate_above_capacity_fails_under_worst_jammer():
    spec, strategy, pus = additive_channel()
    q = ConditionalKernel(np.full((2, 2), 0.5))
    jam = memoryless_jammer(q)
    params = GpSimParams(n=128, rate=5 / 128, rate_bin=0.0,
                         calibration_trials=100)
    _, summary = simulate_gp(spec, strategy, pus, params, jam,
                             trials=200, seed=17)
    assert summary.err_rate >= 0.5


def test_simulate_error_rate_non_increasing_in_blocklength():
    # At half capacity these blocklengths sit above the finite-n reliability
    # threshold of the list decoder, so the curve saturates; the check is
    # that it never rises significantly as n grows.
    p = 0.252
    spec, strategy, pus = bsc_channel(p)
    capacity = 1 + p * np.log2(p) + (1 - p) * np.log2(1 - p)
    rate = capacity / 2
    summaries = []
    for n in (32, 64, 128):
        params = GpSimParams(n=n, rate=rate, rate_bin=0.0, calibration_trials=150)
        _, summary = simulate_gp(spec, strategy, pus, params, zero_jammer(),
                                 trials=300, seed=13)
        summaries.append(summary)
    for prev, nxt in zip(summaries, summaries[1:]):
        assert nxt.ci_lo <= prev.ci_hi  # no significant increase with n


def test_membership_frequency_of_transmitted_codeword():
    spec, strategy, pus = flip_channel()
    q = ConditionalKernel(np.array([[0.7, 0.3], [0.8, 0.2]]))
    jam = memoryless_jammer(q)
    p_joint = np.array([[0.25, 0.25], [0.25, 0.25]])
    rates = []
    for n in (64, 128, 256):
        delta = float(n) ** (-1 / 3)
        book = generate_discrete_codebook(n, 2 / n, 2 / n, HALF, delta, seed=n)
        geo = ListGeometry(spec, strategy, pus)
        enc = GpEncoderParams(delta1=2 * delta)
        misses = 0
        rng = np.random.default_rng(n + 1)
        for _ in range(150):
            s = rng.integers(0, 2, size=n)
            m = int(rng.integers(0, book.n_bins)) + 1
            res = gp_encode(m, s, book, strategy, p_joint, enc, rng)
            j = jam.emit(m, s, PublicCodeParams(n=n, n_jam=2), rng)
            y = res.x ^ j.astype(np.int64)
            if not list_membership(res.u, y, spec, strategy, pus, delta,
                                   geometry=geo):
                misses += 1
        rates.append(misses / 150)
    assert rates[2] <= 0.02
    assert rates[1] <= rates[0] + 0.03
    assert rates[2] <= rates[1] + 0.03


def test_impostor_type_bound_matches_small_enumeration():
    spec, strategy, pus = bsc_pair_channel(0.05, 0.15)
    geo = ListGeometry(spec, strategy, pus)
    n, delta, gamma = 8, 0.25, 0.15
    y = np.array([0, 0, 1, 0, 1, 1, 0, 1])
    log2_bound = impostor_type_bound(spec, strategy, pus, y, delta, gamma,
                                     geometry=geo)
    params = TypicalSetParams(delta=delta, n=n)
    total = hits = 0
    for code in range(2 ** n):
        u = np.array([(code >> i) & 1 for i in range(n)], dtype=np.int64)
        if not is_typical(u, HALF, params):
            continue
        total += 1
        if list_membership(u, y, spec, strategy, pus, gamma, geometry=geo):
            hits += 1
    assert hits > 0
    assert hits / total == pytest.approx(2.0 ** log2_bound, rel=1e-9)


def test_impostor_rate_below_exact_bound_at_n64():
    spec, strategy, pus = bsc_pair_channel(0.05, 0.15)
    geo = ListGeometry(spec, strategy, pus)
    n, delta, gamma = 64, 64.0 ** (-1 / 3), 0.15
    book = generate_discrete_codebook(n, 2 / n, 1 / n, HALF, delta, seed=8)
    rng = np.random.default_rng(23)
    s = rng.integers(0, 2, size=n)
    p_joint = np.array([[0.25, 0.25], [0.25, 0.25]])
    res = gp_encode(1, s, book, strategy, p_joint, GpEncoderParams(0.5), rng)
    j = rng.integers(0, 2, size=n)
    probs = spec.w.t[res.x, s, j]
    y = (rng.random(n)[:, None] > np.cumsum(probs, axis=1)).sum(axis=1)

    assert list_membership(res.u, y, spec, strategy, pus, gamma, geometry=geo)

    log2_bound = impostor_type_bound(spec, strategy, pus, y, delta, gamma,
                                     geometry=geo)
    worst_q, inner_value, _ = worst_memoryless_jammer(pus, strategy, spec)
    joint_su = HALF.p[:, None] * pus.t
    min_i_uy = inner_value + mutual_information(joint_su)
    gamma_tilde = min_i_uy + log2_bound / n
    assert gamma_tilde < min_i_uy  # the bound decays exponentially

    params = TypicalSetParams(delta=delta, n=n)
    from avcjam.probability import sample_uniform_typical
    trials = 10_000
    fresh = sample_uniform_typical(HALF, params, np.random.default_rng(29),
                                   size=trials)
    joins = sum(
        list_membership(fresh[i], y, spec, strategy, pus, gamma, geometry=geo)
        for i in range(trials)
    )
    assert joins / trials <= 4 * 2.0 ** (-n * (min_i_uy - gamma_tilde))


def test_calibrate_gamma_identity_channel_scale():
    spec, strategy, pus = identity_channel()
    book = generate_discrete_codebook(32, 2 / 32, 0.0, HALF, 0.1, seed=2)
    gamma = calibrate_gamma(spec, strategy, pus, book, delta1=0.5,
                            trials=100, seed=1)
    assert 0.0 <= gamma <= 0.1 + 1e-9


def test_simulate_rejects_alien_jammer_symbols():
    spec, strategy, pus = flip_channel()
    bad = JammerStrategy(id="alien", knows_message=False, knows_state=False,
                         power=None,
                         generator=lambda m, s, p, r: np.full(s.size, 7))
    params = GpSimParams(n=16, rate=1 / 16, rate_bin=0.0, gamma=0.2)
    with pytest.raises(ConfigError):
        simulate_gp(spec, strategy, pus, params, bad, trials=2, seed=0)
