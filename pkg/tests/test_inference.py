import json
import logging

import numpy as np
import pytest

from ggepi.grouplasso import Group, GroupedDesign
from ggepi.inference import (DetectConfig, InferenceReport, SplitPlan, bh_adjust, clean, derive_seeds, detect,
                             ridge_gcv, screen, split)
from ggepi.simulation import EffectConfig, GenotypeSimConfig, MainEffect, simulate_genotypes, simulate_phenotype

from .conftest import random_genotypes


def design_from(x, sizes):
    groups, pos = [], 0
    for k, m in enumerate(sizes):
        groups.append(Group(f"g{k}", "main", tuple(range(pos, pos + m)), float(np.sqrt(m))))
        pos += m
    return GroupedDesign(np.asarray(x, float), tuple(groups), tuple(f"c{j}" for j in range(pos)))


def test_split_examples():
    p = split(6, 3)
    assert len(p.screen_rows) == len(p.clean_rows) == 3
    assert split(6, 3) == p
    q = split(7, 1)
    assert (len(q.screen_rows), len(q.clean_rows)) == (3, 4)
    assert sorted(q.screen_rows + q.clean_rows) == list(range(7))
    with pytest.raises(ValueError):
        split(3, 0)
    with pytest.raises(ValueError):
        SplitPlan((0, 1), (1, 2), 0)


def test_bh_example():
    np.testing.assert_allclose(bh_adjust([0.01, 0.02, 0.2, 0.9]), [0.04, 0.04, 0.8 / 3, 0.9])
    np.testing.assert_allclose(bh_adjust([0.9, 0.01]), [0.9, 0.02])
    assert bh_adjust([]).size == 0
    assert np.all(bh_adjust([0.5, 0.6, 0.7]) <= 1.0)


def test_bh_matches_scipy():
    from scipy.stats import false_discovery_control

    p = np.random.default_rng(0).uniform(size=40) ** 2
    np.testing.assert_allclose(bh_adjust(p), false_discovery_control(p, method="bh"))


def test_empty_selection_gives_all_ones(rng):
    d = design_from(rng.normal(size=(40, 4)), [2, 2])
    rep = clean(d, rng.normal(size=40), split(40, 1), set(), permutations=99)
    assert all(e.p_value == 1.0 and not e.significant and not e.selected for e in rep.entries)
    assert rep.significant == []


def test_p_value_floor_with_99_permutations(rng):
    x = rng.normal(size=(80, 3))
    y = 5 * x[:, 0] + 0.01 * rng.normal(size=80)
    d = design_from(x, [1, 2])
    rep = clean(d, y, split(80, 2), {"g0", "g1"}, permutations=99)
    assert rep.entry("g0").p_value == 0.01
    assert rep.entry("g0").significant
    assert rep.entry("g1").p_value > 0.01


def test_clean_is_deterministic_and_order_free(rng):
    x = rng.normal(size=(60, 4))
    y = x[:, 0] + x[:, 3] + rng.normal(size=60)
    d = design_from(x, [2, 2])
    plan = split(60, 4)
    a = clean(d, y, plan, {"g0", "g1"}, permutations=199, seed=9)
    b = clean(d, y, plan, {"g1", "g0"}, permutations=199, seed=9)
    assert a.to_dict() == b.to_dict()


def test_constant_group_on_clean_half(rng, caplog):
    x = rng.normal(size=(20, 2))
    plan = split(20, 0)
    x[list(plan.clean_rows), 1] = 1.0
    d = design_from(x, [1, 1])
    with caplog.at_level(logging.WARNING, logger="ggepi.inference"):
        rep = clean(d, rng.normal(size=20), plan, {"g0", "g1"}, permutations=99)
    assert rep.entry("g1").p_value == 1.0
    assert "constant on the clean half" in caplog.text


def test_clean_rejects_bad_arguments(rng):
    d = design_from(rng.normal(size=(20, 2)), [1, 1])
    y = rng.normal(size=20)
    with pytest.raises(ValueError):
        clean(d, y, split(20, 0), {"g0"}, permutations=10)
    with pytest.raises(KeyError):
        clean(d, y, split(20, 0), {"nope"}, permutations=99)


def test_ridge_gcv_returns_positive_penalty(rng):
    x = rng.normal(size=(50, 5))
    y = x @ np.ones(5) + rng.normal(size=50)
    alpha, _ = ridge_gcv(x - x.mean(0), y - y.mean(), np.ones(5))
    assert alpha > 0


def test_screen_perfect_signal(rng):
    x = rng.normal(size=(60, 5))
    d = design_from(x, [2, 2, 1])
    assert "g1" in screen(d, x[:, 2].copy(), split(60, 0), grid_size=30)


def test_derived_seeds_are_distinct():
    s = derive_seeds(7)
    assert len(set(s)) == 3 and derive_seeds(7) == s


def test_detect_constant_phenotype_rejected(rng):
    g, idx = random_genotypes(rng, 30, [2, 2])
    with pytest.raises(ValueError):
        detect(g, idx, np.ones(30))


def test_detect_deterministic_with_provenance():
    geno, idx = simulate_genotypes(GenotypeSimConfig(n=200, G=4, p_g=3, seed=2, causal_snps=((0, 0), (0, 1))))
    y, _, _ = simulate_phenotype(geno, idx, EffectConfig((MainEffect(0, (0, 1)),), r2_target=0.7),
                                 np.random.default_rng(3))
    cfg = DetectConfig(seed=5, permutations=99, grid_size=30)
    a = detect(geno, idx, y, "ggee", cfg)
    b = detect(geno, idx, y, "ggee", cfg)
    assert a.to_json() == b.to_json()
    prov = a.provenance
    assert prov["method"] == "ggee" and prov["q"] == 1 and prov["seed"] == 5 and prov["lambda"] > 0
    assert a.permutations == 99 and len(a.plan.screen_rows) == 100
    assert "gene1" in a.significant
    again = InferenceReport.from_dict(json.loads(a.to_json()))
    assert again.to_dict() == a.to_dict()
    assert a.to_tsv().splitlines()[0].split("\t")[0] == "group_id"


@pytest.mark.parametrize("method", ["ggee", "pca", "pls"])
def test_detect_runs_every_method(method):
    geno, idx = simulate_genotypes(GenotypeSimConfig(n=120, G=3, p_g=2, seed=4))
    y = np.random.default_rng(1).normal(size=120)
    rep = detect(geno, idx, y, method, DetectConfig(permutations=99, grid_size=20))
    assert len(rep.entries) == 6
    assert all(0 < e.p_value <= 1 for e in rep.entries)
