import io

import numpy as np
import pytest

from motef.errors import ParseError, ValidationError
from motef.problems import (
    LibSVMDataset,
    accuracy,
    logreg_oracles,
    parse_libsvm,
    shard,
    synth_new,
    synth_xstar,
)


def central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def random_logreg(n=3, m=15, d=6, reg=0.1, seed=0):
    rng = np.random.default_rng(seed)
    lines = []
    for _ in range(n * m):
        y = rng.choice(["+1", "-1"])
        feats = " ".join(f"{j + 1}:{rng.normal():.6f}" for j in range(d) if rng.random() < 0.7)
        lines.append(f"{y} {feats}")
    data = parse_libsvm("\n".join(lines) + "\n")
    return logreg_oracles(shard(data, n), reg, d=d), data


# ---------------------------------------------------------------------------
# synthetic least squares


def test_zeta_zero_is_centered():
    p = synth_new(5, 4, 0.0, 1.0, seed=3)
    assert not np.any(p.b_vectors)
    np.testing.assert_array_equal(p.x_star, 0)
    assert p.f_star == 0
    for i in range(5):
        np.testing.assert_array_equal(p.exact_grad(i, np.zeros(4)), 0)


def test_single_client_optimum_is_b():
    p = synth_new(1, 3, 2.0, 0.0, seed=1)
    np.testing.assert_allclose(p.x_star, p.b_vectors[:, 0])
    assert p.f_star == pytest.approx(0, abs=1e-15)


def test_synthetic_gradient_formula_and_fd():
    p = synth_new(6, 5, 10.0, 0.0, seed=2)
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = rng.standard_normal(5)
        for i in range(6):
            g = p.exact_grad(i, x)
            expected = ((i + 1) ** 2 / 6) * x - ((i + 1) / np.sqrt(6)) * p.b_vectors[:, i]
            np.testing.assert_allclose(g, expected, rtol=1e-12)
            fd = central_diff(lambda z: p.local_loss(i, z), x)
            assert np.linalg.norm(fd - g) <= 1e-6 * max(1.0, np.linalg.norm(g))


def test_xstar_is_stationary():
    p = synth_new(8, 20, 10.0, 10.0, seed=5)
    assert np.linalg.norm(p.global_grad(p.x_star)) < 1e-10
    x, f = synth_xstar(p)
    np.testing.assert_array_equal(x, p.x_star)
    assert f == p.loss(p.x_star)


def test_b_variance_scales_as_zeta_over_i():
    p = synth_new(3, 20000, 6.0, 0.0, seed=0)
    np.testing.assert_allclose(p.b_vectors.std(axis=0), [6.0, 3.0, 2.0], rtol=0.02)


def test_suboptimality_matches_loss_gap():
    p = synth_new(4, 6, 3.0, 0.0, seed=1)
    x = np.random.default_rng(2).standard_normal(6)
    assert p.suboptimality(x) == pytest.approx(p.loss(x) - p.f_star, rel=1e-10)


def test_noise_total_variance_is_sigma_squared():
    p = synth_new(4, 20, 10.0, 10.0, seed=0)
    rng = np.random.default_rng(0)
    draws = np.stack([p.sample(1, rng)[:, 0] for _ in range(20000)])
    sq = np.sum(draws**2, axis=1)
    se = sq.std(ddof=1) / np.sqrt(len(sq))
    assert abs(sq.mean() - 100.0) <= 3 * se
    # batching divides the variance
    sq4 = np.sum(np.stack([p.sample(4, rng)[:, 0] for _ in range(20000)]) ** 2, axis=1)
    assert abs(sq4.mean() - 25.0) <= 3 * sq4.std(ddof=1) / np.sqrt(len(sq4))


def test_synthetic_unbiased():
    p = synth_new(3, 5, 10.0, 4.0, seed=0)
    x = np.ones(5)
    rng = np.random.default_rng(1)
    draws = np.stack([p.stoch_grad(1, x, 1, rng) for _ in range(10000)])
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - p.exact_grad(1, x)) <= 4 * se)


def test_heterogeneity_grows_with_zeta():
    levels = []
    for zeta in (0.0, 10.0, 100.0):
        p = synth_new(6, 8, zeta, 0.0, seed=7)
        X = np.repeat(p.x_star[:, None], 6, axis=1)
        levels.append(np.mean(np.sum(p.exact_grad_matrix(X) ** 2, axis=0)))
    assert levels[0] == 0
    assert levels[0] < levels[1] < levels[2]


def test_smoothness_witness():
    p = synth_new(5, 4, 3.0, 0.0, seed=0)
    assert p.smoothness == pytest.approx(5, rel=1e-14)
    rng = np.random.default_rng(3)
    for _ in range(20):
        x, y = rng.standard_normal(4), rng.standard_normal(4)
        for i in range(5):
            lhs = np.linalg.norm(p.exact_grad(i, x) - p.exact_grad(i, y))
            assert lhs <= ((i + 1) ** 2 / 5) * np.linalg.norm(x - y) * (1 + 1e-12)


def test_paired_sample_noise_cancels():
    p = synth_new(3, 4, 1.0, 5.0, seed=0)
    xi = p.sample(1, np.random.default_rng(0))
    X, Y = np.ones((4, 3)), -np.ones((4, 3))
    np.testing.assert_allclose(
        p.stoch_grad_matrix(X, xi) - p.stoch_grad_matrix(Y, xi), p.exact_grad_matrix(X) - p.exact_grad_matrix(Y)
    )


@pytest.mark.parametrize("args", [(0, 3, 1.0, 1.0), (2, 0, 1.0, 1.0), (2, 3, -1.0, 1.0), (2, 3, 1.0, -1.0)])
def test_synth_invalid(args):
    with pytest.raises(ValidationError):
        synth_new(*args)


# ---------------------------------------------------------------------------
# logistic regression


def test_logreg_loss_at_zero():
    p, _ = random_logreg()
    assert p.loss(np.zeros(p.d)) == pytest.approx(np.log(2))


def test_logreg_regularizer_gradient_at_one():
    data = parse_libsvm("+1 1:0\n-1 1:0\n")
    p = logreg_oracles([data], reg_lambda=0.3)
    # data gradient at x = 1 with zero features vanishes
    assert p.exact_grad(0, np.ones(1))[0] == pytest.approx(0.3 / 2)


def test_logreg_finite_differences():
    p, _ = random_logreg(seed=4)
    rng = np.random.default_rng(5)
    for _ in range(5):
        x = rng.standard_normal(p.d)
        for i in range(p.n):
            g = p.exact_grad(i, x)
            fd = central_diff(lambda z: p.local_loss(i, z), x)
            assert np.linalg.norm(fd - g) <= 1e-5 * max(1.0, np.linalg.norm(g))


def test_logreg_unbiased_minibatch():
    p, _ = random_logreg(n=2, m=10, seed=1)
    x = np.random.default_rng(0).standard_normal(p.d)
    rng = np.random.default_rng(2)
    draws = np.stack([p.stoch_grad(0, x, 2, rng) for _ in range(10000)])
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - p.exact_grad(0, x)) <= 4 * se + 1e-15)


def test_logreg_rejects_empty_and_negative():
    data = parse_libsvm("+1 1:1\n-1 2:1\n")
    with pytest.raises(ValidationError):
        logreg_oracles([data], -0.1)
    with pytest.raises(ValidationError):
        logreg_oracles([data.rows(0, 0)], 0.1)
    with pytest.raises(ValidationError):
        logreg_oracles([], 0.1)


def test_accuracy():
    data = parse_libsvm("+1 1:1\n-1 1:-1\n-1 1:2\n+1 2:1\n")
    assert accuracy(np.array([1.0, 0.0]), data) == pytest.approx(0.75)


# ---------------------------------------------------------------------------
# LibSVM parsing and sharding


def test_parse_basic():
    ds = parse_libsvm("+1 1:0.5 3:-2\n")
    assert ds.m == 1 and ds.d == 3
    np.testing.assert_array_equal(ds.labels, [1])
    np.testing.assert_array_equal(ds.dense(), [[0.5, 0, -2]])


@pytest.mark.parametrize("label,expected", [("+1", 1), ("1", 1), ("-1", -1), ("0", -1), ("2", -1), ("1.0", 1)])
def test_label_mapping(label, expected):
    assert parse_libsvm(f"{label} 2:1\n").labels[0] == expected


def test_comments_and_blank_lines():
    ds = parse_libsvm(io.StringIO("# header\n\n+1 1:1 # trailing\n   \n-1 2:3\n"))
    assert ds.m == 2 and ds.d == 2


@pytest.mark.parametrize(
    "text,line",
    [
        ("1 3:1 2:5\n", 1),
        ("+1 1:1\n-1 2:1 2:3\n", 2),
        ("+1 1:1\n3 1:1\n", 2),
        ("+1 a:1\n", 1),
        ("+1 1:x\n", 1),
        ("+1 1\n", 1),
        ("+1 0:1\n", 1),
        ("yes 1:1\n", 1),
    ],
)
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as err:
        parse_libsvm(text)
    assert err.value.line == line
    assert str(err.value).startswith(f"line {line}:")


@pytest.mark.parametrize("text", ["", "# only a comment\n\n"])
def test_parse_empty(text):
    with pytest.raises(ParseError):
        parse_libsvm(text)


def test_shard_sizes():
    ds = parse_libsvm("".join(f"+1 1:{i}\n" for i in range(10)))
    parts = shard(ds, 2)
    assert [p.dense()[:, 0].tolist() for p in parts] == [[0, 1, 2, 3, 4], [5, 6, 7, 8, 9]]
    assert [p.m for p in shard(ds, 3)] == [3, 3, 4]
    with pytest.raises(ValidationError):
        shard(ds.rows(0, 5), 10)


def test_shard_shuffle_is_seeded_permutation():
    ds = parse_libsvm("".join(f"+1 1:{i + 1}\n" for i in range(12)))
    a = shard(ds, 3, shuffle=True, seed=4)
    b = shard(ds, 3, shuffle=True, seed=4)
    va = np.concatenate([p.dense()[:, 0] for p in a])
    assert np.array_equal(va, np.concatenate([p.dense()[:, 0] for p in b]))
    assert sorted(va.tolist()) == list(range(1, 13))
    assert va.tolist() != list(range(1, 13))


def test_dense_padding():
    ds = parse_libsvm("+1 2:1\n")
    assert ds.dense(4).shape == (1, 4)
    with pytest.raises(ValidationError):
        ds.dense(1)
    assert isinstance(ds.rows(0, 1), LibSVMDataset)
