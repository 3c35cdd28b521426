import json

import numpy as np
import pytest
from scipy.stats import norm

from ggepi.corpus import corpus_dir, load_manifest, load_standin_corpus, make_standin_corpus
from ggepi.genotype import GenotypeMatrix, GeneIndex
from ggepi.simulation import (EffectConfig, GenotypeSimConfig, InteractionEffect, MainEffect, PhenotypeModel,
                              SETTINGS, build_signal, discretize, empirical_r2, hw_probabilities, hw_thresholds,
                              interaction_regressor, partial_r2, resample_real_genotypes, setting_effects,
                              setting_name, sigma2_from_r2, simulate, simulate_genotypes, simulate_phenotype,
                              target_pair, true_regressors)


def test_hw_probabilities_and_thresholds():
    assert np.allclose(hw_probabilities(0.2), (0.04, 0.32, 0.64))
    lo, hi = hw_thresholds(0.2)
    assert abs(lo - norm.ppf(0.04)) < 1e-12 and abs(lo + 1.7507) < 1e-4
    assert abs(hi - norm.ppf(0.36)) < 1e-12 and abs(hi + 0.3585) < 1e-4


@pytest.mark.parametrize("p", [0.05, 0.2, 0.35, 0.5])
def test_discretization_marginals(p):
    codes = discretize(np.random.default_rng(1).standard_normal(100_000), p)
    freq = np.array([np.mean(codes == c) for c in (1, 2, 3)])
    assert np.all(np.abs(freq - np.array(hw_probabilities(p))) <= 0.01)


def test_rho_zero_gives_uncorrelated_snps():
    geno, idx = simulate_genotypes(GenotypeSimConfig(n=10_000, G=2, p_g=6, rho=0.0, seed=4))
    vals = geno.values.astype(float)
    corrs = []
    for gene in idx:
        c = np.corrcoef(vals[:, gene.columns], rowvar=False)
        corrs.extend(c[np.triu_indices_from(c, 1)])
    assert abs(np.mean(corrs)) < 0.05


def test_latent_block_correlation():
    from ggepi.simulation import block_latent

    latent = block_latent(np.random.default_rng(5), 10_000, 6, 0.8)
    c = np.corrcoef(latent, rowvar=False)[np.triu_indices(6, 1)]
    assert np.all((c >= 0.75) & (c <= 0.85))


def test_config_validation():
    with pytest.raises(ValueError):
        GenotypeSimConfig(rho=1.0)
    with pytest.raises(ValueError):
        GenotypeSimConfig(maf_range=(0.1, 0.6))
    with pytest.raises(ValueError):
        GenotypeSimConfig(causal_maf=0.0)
    with pytest.raises(ValueError):
        GenotypeSimConfig(G=2, p_g=2, causal_snps=((1, 2),))
    with pytest.raises(ValueError):
        EffectConfig(r2_target=1.0)
    with pytest.raises(ValueError):
        EffectConfig((MainEffect(0, ()),))


def test_causal_snps_get_causal_maf():
    cfg = GenotypeSimConfig(n=20_000, G=2, p_g=3, causal_snps=((1, 0),), seed=3)
    geno, idx = simulate_genotypes(cfg)
    col = geno.values[:, idx[1].start]
    freq = [np.mean(col == c) for c in (1, 2, 3)]
    assert np.allclose(freq, hw_probabilities(0.2), atol=0.01)


def test_genotype_seed_determinism():
    a = simulate_genotypes(GenotypeSimConfig(seed=9))
    b = simulate_genotypes(GenotypeSimConfig(seed=9))
    assert a[0] == b[0] and a[1] == b[1]
    assert a[0].n == 600 and a[0].p == 36 and len(a[1]) == 6


def test_null_signal_is_zero():
    geno, idx = simulate_genotypes(GenotypeSimConfig(n=50, seed=1))
    assert np.all(build_signal(geno, idx, EffectConfig()) == 0.0)


def test_single_main_effect_signal():
    geno, idx = simulate_genotypes(GenotypeSimConfig(n=500, seed=2, causal_snps=((0, 0), (0, 1))))
    q = build_signal(geno, idx, EffectConfig((MainEffect(0, (0, 1), 2.0),)))
    s = geno.values[:, :2].sum(axis=1).astype(float)
    np.testing.assert_allclose(q, 2 * (s - s.mean()) / s.std(ddof=1))
    assert abs(q.var(ddof=1) - 4) < 1e-10


def test_setting_a_regression_recovers_coefficients():
    ds = simulate("simplified", 1, "wang", 0.5, seed=11)
    mains, inter = true_regressors(ds.genotypes, ds.index, ds.truth)
    x = np.column_stack([np.ones(ds.genotypes.n)] + mains + inter)
    coef = np.linalg.lstsq(x, ds.q_phi, rcond=None)[0]
    np.testing.assert_allclose(coef[1:], [2.0, 2.0, 2.0], atol=1e-10)
    noisy = np.linalg.lstsq(x, ds.y.y, rcond=None)[0]
    assert np.all(np.abs(noisy[1:] - 2.0) < 1.0)


def test_sigma2_formula():
    q = np.random.default_rng(0).normal(size=100)
    S = np.sum((q - q.mean()) ** 2)
    assert abs(sigma2_from_r2(q, 0.5) - S / 98) < 1e-12
    vals = [sigma2_from_r2(q, r) for r in (0.1, 0.5, 0.9, 0.999)]
    assert all(a > b > 0 for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        sigma2_from_r2(np.ones(10), 0.5)
    with pytest.raises(ValueError):
        sigma2_from_r2(q, 1.0)


def test_noise_calibration_setting_a():
    ds = simulate("simplified", 1, "wang", 0.3, seed=5)
    rng = np.random.default_rng(6)
    sd = np.sqrt(sigma2_from_r2(ds.q_phi, 0.3))
    r2 = [empirical_r2(ds.q_phi + rng.normal(0, sd, ds.q_phi.size), ds.q_phi) for _ in range(500)]
    assert abs(np.mean(r2) - 0.3) <= 0.02


def test_partial_r2_shapes():
    ds = simulate("simplified", 2, "wang", 0.5, seed=1)
    p_i, p_m, undefined = partial_r2(ds.y, ds.genotypes, ds.index, ds.truth)
    assert not undefined and 0 < p_i < 1 and 0 < p_m < 1
    e = simulate("simplified", 3, "pca", 0.5, seed=1)
    assert partial_r2(e.y, e.genotypes, e.index, e.truth)[:2] == (1.0, 0.0)
    o = simulate("simplified", 4, "wang", 0.5, seed=1)
    assert partial_r2(o.y, o.genotypes, o.index, o.truth)[:2] == (0.0, 1.0)
    ne = simulate("simplified", 5, "wang", 0.5, seed=1)
    assert partial_r2(ne.y, ne.genotypes, ne.index, ne.truth) == (0.0, 0.0, True)
    assert ne.sigma2 == 1.0 and ne.realized_r2 is None


def test_single_snp_genes_pca_term_is_centered_product():
    # with one SNP per gene the first component is the SNP itself, so the PCA
    # term is the standardized product of centered codes; the Wang term uses
    # raw codes and differs from it by the two main-effect columns
    geno, idx = simulate_genotypes(GenotypeSimConfig(n=300, G=2, p_g=1, seed=8))
    e = InteractionEffect(0, 1, (0,), (0,))
    a = interaction_regressor(geno, idx, e, PhenotypeModel.WANG)
    b = interaction_regressor(geno, idx, e, PhenotypeModel.PCA)
    x = geno.values.astype(float)
    xc = x - x.mean(axis=0)
    prod = xc[:, 0] * xc[:, 1]
    assert abs(abs(np.corrcoef(b, prod)[0, 1]) - 1) < 1e-12
    raw = np.column_stack([np.ones(300), x, x[:, 0] * x[:, 1]])
    cen = np.column_stack([np.ones(300), x, prod])
    fit_a = raw @ np.linalg.lstsq(raw, a, rcond=None)[0]
    fit_b = cen @ np.linalg.lstsq(cen, b, rcond=None)[0]
    np.testing.assert_allclose(fit_a, a, atol=1e-10)
    np.testing.assert_allclose(fit_b, b, atol=1e-10)
    # same span once main effects are included
    both = np.column_stack([np.ones(300), x, a])
    np.testing.assert_allclose(both @ np.linalg.lstsq(both, b, rcond=None)[0], b, atol=1e-10)


def test_setting_names_and_effects():
    table = {(1, "wang"): "A", (1, "pca"): "B", (2, "wang"): "C", (2, "pca"): "D", (3, "wang"): "E",
             (3, "pca"): "F", (4, "wang"): "OME", (4, "pca"): "OME", (5, "wang"): "NE", (5, "pca"): "NE"}
    for (s, m), name in table.items():
        assert setting_name(s, m) == name
    assert SETTINGS[2] == ((0, 1), ((2, 3),))
    assert target_pair(2) == (2, 3) and target_pair(4) == (0, 1)
    eff = setting_effects(1, "wang", 0.4, [6] * 6)
    assert [m.beta for m in eff.main_genes] == [2.0, 2.0] and eff.interaction_pairs[0].gamma == 2.0
    assert eff.main_genes[0].snps == (0, 1)
    with pytest.raises(ValueError):
        setting_effects(6, "wang", 0.4, [6] * 6)


def test_dataset_determinism_and_write(tmp_path):
    a = simulate("simplified", 1, "pca", 0.4, seed=21)
    b = simulate("simplified", 1, "pca", 0.4, seed=21)
    pa, pb = a.write(tmp_path / "a"), b.write(tmp_path / "b")
    for key in pa:
        assert pa[key].read_bytes() == pb[key].read_bytes()
    truth = json.loads(pa["truth"].read_text())
    assert truth["r2_target"] == 0.4 and truth["sigma2"] == a.sigma2
    assert truth["interactions"][0]["group_id"] == "gene1xgene2"
    assert truth["main_effects"][0]["causal_snps"] == ["gene1_snp1", "gene1_snp2"]


def test_resample_real_genotypes():
    geno, idx = load_standin_corpus()
    s1 = resample_real_genotypes(geno, idx, 6, seed=3)
    s2 = resample_real_genotypes(geno, idx, 6, seed=3)
    assert s1[0] == s2[0] and s1[1] == s2[1]
    sizes = {g["gene_id"]: g["n_snps"] for g in load_manifest()["genes"]}
    assert len(set(s1[1].ids)) == 6
    assert all(s1[1][k].p_g == sizes[g] for k, g in enumerate(s1[1].ids))
    assert s1[0].n == geno.n
    full, fidx = resample_real_genotypes(geno, idx, len(idx), seed=1)
    assert sorted(fidx.ids) == sorted(idx.ids)
    with pytest.raises(ValueError):
        resample_real_genotypes(geno, idx, len(idx) + 1, seed=1)


def test_standin_corpus_matches_regeneration():
    geno, idx = load_standin_corpus()
    g2, i2 = make_standin_corpus()
    assert geno == g2 and idx == i2
    man = load_manifest()
    assert man["n_genes"] == 30 and man["median_size"] == 2.0
    assert max(g["n_snps"] for g in man["genes"]) == 60 and min(g["n_snps"] for g in man["genes"]) >= 1
    assert (corpus_dir() / "genotypes.tsv").is_file()


def test_realistic_replicate():
    ds = simulate("realistic", 1, "wang", 0.5, seed=2)
    assert len(ds.index) == 6 and ds.genotypes.n == 763
    assert ds.meta["genes"] == ds.index.ids


def test_empty_causal_set_rejected():
    geno = GenotypeMatrix(np.array([[1, 2], [2, 3], [3, 1]]))
    idx = GeneIndex.from_sizes([1, 1])
    with pytest.raises(ValueError):
        build_signal(geno, idx, EffectConfig(interaction_pairs=(InteractionEffect(0, 1, (), (0,)),)))


def test_noise_is_gaussian_with_sigma2():
    geno, idx = simulate_genotypes(GenotypeSimConfig(n=20_000, seed=1, causal_snps=((0, 0), (0, 1))))
    eff = EffectConfig((MainEffect(0, (0, 1)),), r2_target=0.5)
    y, s2, q = simulate_phenotype(geno, idx, eff, np.random.default_rng(2))
    resid = y.y - q
    assert abs(resid.var() / s2 - 1) < 0.03
