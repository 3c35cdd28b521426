import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ggepi.genotype import GenotypeMatrix, GeneIndex, Phenotype
from ggepi.interactions import (DegeneratePairError, Method, build_interaction_design, dump_block,
                                ggee_component, ggee_weights, pair_product, pca_basis, pca_interaction,
                                pls_components, pls_interaction)
from ggepi.simulation import GenotypeSimConfig, block_latent, simulate_genotypes

from .conftest import random_genotypes


def top_eigvec(w, y):
    v = w.T @ (y - y.mean())
    _, vecs = np.linalg.eigh(np.outer(v, v))
    return vecs[:, -1]


def test_pair_product_shapes_and_order():
    xr = np.array([[1.0, 2.0], [3.0, 4.0]])
    xs = np.array([[5.0, 6.0, 7.0], [8.0, 9.0, 10.0]])
    w = pair_product(xr, xs)
    assert w.w.shape == (2, 6)
    assert [k for k, _ in sorted(w.column_index.items(), key=lambda kv: kv[1])] == [
        (0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]
    one = pair_product(xr[:, :1], xs[:, :1])
    np.testing.assert_array_equal(one.w[:, 0], xr[:, 0] * xs[:, 0])


def test_pair_product_exhaustive(rng):
    xr = rng.integers(-5, 6, (5, 2)).astype(float)
    xs = rng.integers(-5, 6, (5, 2)).astype(float)
    w = pair_product(xr, xs)
    for i in range(5):
        for j in range(2):
            for k in range(2):
                assert w.w[i, w.col(j, k)] == xr[i, j] * xs[i, k]


def test_pair_product_row_mismatch():
    with pytest.raises(ValueError):
        pair_product(np.ones((3, 1)), np.ones((4, 1)))


class CountingArray(np.ndarray):
    """Tallies the number of scalar products formed by ``np.multiply``."""

    products = 0

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        args = [np.asarray(a) if isinstance(a, CountingArray) else a for a in inputs]
        out = getattr(ufunc, method)(*args, **kwargs)
        if ufunc is np.multiply:
            CountingArray.products += np.size(out)
        return out


def test_pair_product_touches_each_product_once(rng):
    n, p_r, p_s = 7, 3, 4
    xr = rng.normal(size=(n, p_r)).view(CountingArray)
    xs = rng.normal(size=(n, p_s)).view(CountingArray)
    CountingArray.products = 0
    pair_product(xr, xs)
    assert CountingArray.products == n * p_r * p_s


def test_ggee_one_column():
    w = np.array([[1.0], [2.0], [-1.0]])
    y = np.array([0.0, 1.0, 2.0])
    u = ggee_weights(w, y)
    assert abs(abs(u[0]) - 1) < 1e-15
    z = w @ u
    assert np.cov(z, y)[0, 1] >= 0


def test_ggee_zero_phenotype():
    with pytest.raises(DegeneratePairError):
        ggee_weights(np.ones((4, 2)) + np.arange(8).reshape(4, 2), np.zeros(4))


def test_ggee_matches_eigen_oracle(rng):
    w = rng.normal(size=(8, 4))
    y = rng.normal(size=8)
    u = ggee_weights(w, y)
    assert abs(abs(u @ top_eigvec(w, y)) - 1) < 1e-8


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 40), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_ggee_closed_form_and_optimality(n, p_r, p_s, seed):
    rng = np.random.default_rng(seed)
    w = pair_product(rng.normal(size=(n, p_r)), rng.normal(size=(n, p_s)))
    y = rng.normal(size=n)
    blk = ggee_component(w, Phenotype(y))
    yc = y - y.mean()
    analytic = w.w.T @ yc / np.linalg.norm(w.w.T @ yc)
    assert abs(abs(blk.u @ analytic) - 1) <= 1e-10
    assert abs(np.linalg.norm(blk.u) - 1) <= 1e-10
    np.testing.assert_allclose(blk.z[:, 0], w.w @ blk.u)
    best = (blk.u @ w.w.T @ yc) ** 2
    v = rng.normal(size=(100, w.w.shape[1]))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    assert np.all((v @ w.w.T @ yc) ** 2 <= best * (1 + 1e-12) + 1e-12)
    # scale equivariance and sign flip
    np.testing.assert_allclose(ggee_weights(w.w, 3.5 * y), blk.u, atol=1e-10)
    neg = ggee_weights(w.w, -y)
    np.testing.assert_allclose(w.w @ neg, -(w.w @ blk.u), atol=1e-9)


def test_pca_single_snp_is_standardized_column(rng):
    x = rng.integers(1, 4, (30, 1)).astype(float)
    b = pca_basis(x, 1)
    std = (x[:, 0] - x.mean()) / x[:, 0].std(ddof=1)
    np.testing.assert_allclose(np.abs(b.scores[:, 0]), np.abs(std), atol=1e-12)


def test_pca_rank_clamp_warns(rng, caplog):
    a = rng.normal(size=20)
    x = np.column_stack([a, 2 * a + 1])
    with caplog.at_level(logging.WARNING, logger="ggepi.interactions"):
        b = pca_basis(x, 2)
    assert b.q == 1
    assert "clamped" in caplog.text


def test_pca_explained_share_matches_eigensolver():
    latent = block_latent(np.random.default_rng(7), 2000, 6, 0.8)
    b = pca_basis(latent, 3)
    evals = np.linalg.eigvalsh(np.corrcoef(latent, rowvar=False))[::-1]
    assert abs(b.explained_share[0] - evals[0] / evals.sum()) < 1e-8
    np.testing.assert_allclose(b.components.T @ b.components, np.eye(3), atol=1e-8)
    for c in range(3):
        assert b.components[np.argmax(np.abs(b.components[:, c])), c] > 0
    np.testing.assert_allclose(b.scores, b.scaler.transform(latent) @ b.components, atol=1e-10)


def test_pca_interaction_columns(rng):
    xr, xs = rng.normal(size=(25, 4)), rng.normal(size=(25, 3))
    b1 = pca_interaction(pca_basis(xr, 1), pca_basis(xs, 1))
    assert b1.m == 1
    br, bs = pca_basis(xr, 2), pca_basis(xs, 2)
    b2 = pca_interaction(br, bs)
    assert b2.m == 4
    np.testing.assert_array_equal(b2.z, pair_product(br.scores, bs.scores).w)
    np.testing.assert_array_equal(b2.z[:, 1], br.scores[:, 0] * bs.scores[:, 1])


def _std(x):
    return (x - x.mean(axis=0)) / x.std(axis=0, ddof=1)


def test_pls_matches_svd_oracle(rng):
    xr, xs, y = _std(rng.normal(size=(10, 3))), _std(rng.normal(size=(10, 2))), rng.normal(size=10)
    t = np.column_stack([_std(y), xs])
    fit = pls_components(xr, t, 1)
    s = np.linalg.svd(xr.T @ (t - t.mean(axis=0)) / 9, compute_uv=False)
    assert abs(fit.cov2[0] - s[0] ** 2) < 1e-8
    # the achieved criterion, evaluated directly
    u = fit.weights[:, 0]
    m = xr.T @ (t - t.mean(axis=0)) / 9
    v = m.T @ u / np.linalg.norm(m.T @ u)
    assert abs((u @ m @ v) ** 2 - s[0] ** 2) < 1e-8


def test_pls_single_snp_gene(rng):
    xr, xs, y = _std(rng.normal(size=(12, 1))), _std(rng.normal(size=(12, 3))), rng.normal(size=12)
    blk = pls_interaction(xr, xs, y, q=3)
    assert blk.m == 1
    assert abs(abs(np.corrcoef(blk.z[:, 0], xr[:, 0])[0, 1]) - 1) < 1e-12


def test_pls_degenerate():
    with pytest.raises(DegeneratePairError):
        pls_interaction(np.zeros((6, 2)), np.zeros((6, 2)), np.arange(6.0))


def test_pls_q_components_and_rotations(rng):
    xr, xs, y = _std(rng.normal(size=(40, 4))), _std(rng.normal(size=(40, 2))), rng.normal(size=40)
    blk = pls_interaction(xr, xs, y, q=2)
    assert blk.m == 2
    t = np.column_stack([_std(y), xs])
    fit = pls_components(xr, t, 2)
    np.testing.assert_allclose(blk.z, (xr - xr.mean(axis=0)) @ fit.rotations, atol=1e-10)
    np.testing.assert_allclose(fit.scores, blk.z, atol=1e-10)
    # successive components are orthogonal
    assert abs(fit.scores[:, 0] @ fit.scores[:, 1]) < 1e-8


@pytest.mark.parametrize("method", ["ggee", "pca", "pls"])
def test_design_block_count_and_standardization(method, rng):
    g, idx = random_genotypes(rng, 60, [3, 2, 4, 1, 2, 3])
    y = rng.normal(size=60)
    d = build_interaction_design(g, idx, Phenotype(y), method)
    assert len(d) == 15
    assert [b.pair for b in d] == [(idx.ids[r], idx.ids[s]) for r, s in idx.pairs()]
    for b in d.usable:
        assert b.m == 1
        assert np.all(np.abs(b.z.mean(axis=0)) < 1e-10)
        assert np.all(np.abs(b.z.std(axis=0, ddof=1) - 1) < 1e-10)
    g2, idx2 = random_genotypes(rng, 10, [1, 1])
    assert len(build_interaction_design(g2, idx2, rng.normal(size=10), method)) == 1


def test_design_is_permutation_equivariant(rng):
    g, idx = random_genotypes(rng, 50, [2, 3, 1, 2], ids=["A", "B", "C", "D"])
    y = rng.normal(size=50)
    order = [2, 0, 3, 1]
    cols = np.concatenate([np.arange(idx[k].start, idx[k].stop) for k in order])
    g2 = GenotypeMatrix(g.values[:, cols], tuple(g.snp_ids[c] for c in cols))
    idx2 = GeneIndex.from_sizes([idx[k].p_g for k in order], [idx.ids[k] for k in order])
    for method in (Method.GGEE, Method.PCA):
        a = {frozenset(b.pair): b.z for b in build_interaction_design(g, idx, y, method)}
        b = {frozenset(b.pair): b.z for b in build_interaction_design(g2, idx2, y, method)}
        assert a.keys() == b.keys()
        for key in a:
            # swapped pair order may flip the PCA orientation but never the span
            corr = np.corrcoef(a[key][:, 0], b[key][:, 0])[0, 1]
            assert abs(abs(corr) - 1) < 1e-9, (method, key)
    # PLS components live in the first gene of the pair; pairs whose relative
    # order survives the shuffle are reproduced exactly
    a = {b.pair: b.z for b in build_interaction_design(g, idx, y, "pls")}
    b = {b.pair: b.z for b in build_interaction_design(g2, idx2, y, "pls")}
    kept = set(a) & set(b)
    assert kept == {("A", "D"), ("C", "D"), ("A", "B")}
    for key in kept:
        np.testing.assert_allclose(a[key], b[key], atol=1e-10)
    assert set(b) - kept == {("C", "A"), ("C", "B"), ("D", "B")}


def test_degenerate_pairs_are_recorded(caplog):
    # gene C is constant, so every pair with it has no usable products
    vals = np.column_stack([np.tile([1, 2, 3], 4), np.repeat([1, 2, 3, 1], 3), np.full(12, 2)])
    g = GenotypeMatrix(vals)
    idx = GeneIndex.from_sizes([1, 1, 1], ["A", "B", "C"])
    y = np.arange(12.0)
    with caplog.at_level(logging.WARNING):
        d = build_interaction_design(g, idx, y, "pca")
    assert len(d) == 3
    assert d.degenerate == [("A", "C"), ("B", "C")]


def test_ggee_products_toggle(rng):
    g, idx = random_genotypes(rng, 40, [2, 2])
    y = rng.normal(size=40)
    raw = build_interaction_design(g, idx, y, "ggee", products="raw").blocks[0]
    std = build_interaction_design(g, idx, y, "ggee", products="standardized").blocks[0]
    assert raw.meta["products"] == "raw" and std.meta["products"] == "standardized"
    assert not np.allclose(raw.z, std.z)


def test_weights_from_subset_of_rows(rng):
    g, idx = random_genotypes(rng, 40, [2, 2])
    y = rng.normal(size=40)
    rows = np.arange(20)
    blk = build_interaction_design(g, idx, y, "ggee", rows=rows).blocks[0]
    w = pair_product(g.values[:, :2].astype(float), g.values[:, 2:].astype(float)).w
    u = ggee_weights(w[rows], y[rows])
    np.testing.assert_allclose(blk.u, u)
    assert blk.z.shape == (40, 1)


def test_dump_block(tmp_path, rng):
    g, idx = random_genotypes(rng, 10, [2, 1])
    blk = build_interaction_design(g, idx, rng.normal(size=10), "ggee").blocks[0]
    tsv, side = dump_block(blk, tmp_path / "blk.tsv")
    back = np.loadtxt(tsv, skiprows=1, ndmin=2)
    np.testing.assert_array_equal(back, blk.z)
    assert '"method": "ggee"' in side.read_text()


def test_simulated_genotypes_feed_the_engine():
    geno, idx = simulate_genotypes(GenotypeSimConfig(n=80, G=3, p_g=3, seed=1))
    d = build_interaction_design(geno, idx, np.random.default_rng(0).normal(size=80), "pls")
    assert len(d.usable) == 3
