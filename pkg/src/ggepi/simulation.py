"""Synthetic genotypes and phenotypes for power studies.

Genotypes are thresholded Gaussians: each gene is a block of latent
variables with equal within-gene correlation, and each SNP column is cut at
standard-normal quantiles so that codes 1/2/3 (minor homozygote, heterozygote,
major homozygote) occur with Hardy-Weinberg frequencies for its MAF.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .genotype import GeneIndex, GenotypeMatrix, Phenotype, standardize_columns, write_dataset
from .interactions import pca_basis

logger = logging.getLogger(__name__)


class PhenotypeModel(str, Enum):
    WANG = "wang"
    PCA = "pca"

    @classmethod
    def parse(cls, value) -> "PhenotypeModel":
        if isinstance(value, cls):
            return value
        v = str(value).lower().replace("_", "").replace("-", "")
        if v in ("wang", "wangpathway"):
            return cls.WANG
        if v in ("pca", "pcamodel"):
            return cls.PCA
        raise ValueError(f"unknown phenotype model {value!r}")


@dataclass(frozen=True)
class GenotypeSimConfig:
    n: int = 600
    G: int = 6
    p_g: int | tuple[int, ...] = 6
    rho: float = 0.8
    maf_range: tuple[float, float] = (0.05, 0.5)
    causal_maf: float = 0.2
    causal_snps: tuple[tuple[int, int], ...] = ()  # (gene position, SNP position in gene)
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.G < 1:
            raise ValueError("need n >= 2 and G >= 1")
        sizes = self.sizes
        if len(sizes) != self.G or min(sizes) < 1:
            raise ValueError("p_g must be a positive int or one positive size per gene")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        lo, hi = self.maf_range
        if not 0 < lo <= hi <= 0.5:
            raise ValueError("maf_range must satisfy 0 < low <= high <= 0.5")
        if not 0 < self.causal_maf <= 0.5:
            raise ValueError("causal_maf must lie in (0, 0.5]")
        for g, j in self.causal_snps:
            if not (0 <= g < self.G and 0 <= j < sizes[g]):
                raise ValueError(f"causal SNP {(g, j)} outside the gene layout")

    @property
    def sizes(self) -> list[int]:
        if isinstance(self.p_g, int):
            return [self.p_g] * self.G
        return list(self.p_g)


def hw_probabilities(p: float) -> tuple[float, float, float]:
    """Genotype code probabilities (1, 2, 3) for minor allele frequency ``p``."""
    return p * p, 2 * p * (1 - p), (1 - p) ** 2


def hw_thresholds(p) -> tuple[np.ndarray, np.ndarray]:
    """Standard-normal cut points ``(q_{p^2}, q_{1-(1-p)^2})``."""
    p = np.asarray(p, dtype=float)
    return norm.ppf(p * p), norm.ppf(1 - (1 - p) ** 2)


def discretize(latent: np.ndarray, maf) -> np.ndarray:
    lo, hi = hw_thresholds(maf)
    codes = np.full(latent.shape, 3, dtype=np.int8)
    codes[latent < hi] = 2
    codes[latent < lo] = 1
    return codes


def block_latent(rng: np.random.Generator, n: int, size: int, rho: float) -> np.ndarray:
    """n draws of a zero-mean Gaussian with equicorrelation ``rho``."""
    corr = np.full((size, size), rho)
    np.fill_diagonal(corr, 1.0)
    chol = np.linalg.cholesky(corr)
    return rng.standard_normal((n, size)) @ chol.T


def simulate_genotypes(cfg: GenotypeSimConfig, rng: np.random.Generator | None = None):
    """Draw a genotype matrix and its gene index.

    Returns
    -------
    (GenotypeMatrix, GeneIndex)
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    sizes = cfg.sizes
    idx = GeneIndex.from_sizes(sizes)
    latent = np.hstack([block_latent(rng, cfg.n, s, cfg.rho) for s in sizes])
    maf = rng.uniform(cfg.maf_range[0], cfg.maf_range[1], size=idx.p)
    for g, j in cfg.causal_snps:
        maf[idx[g].start + j] = cfg.causal_maf
    values = discretize(latent, maf)
    snp_ids = tuple(f"{gene.gene_id}_snp{j + 1}" for gene in idx for j in range(gene.p_g))
    return GenotypeMatrix(values, snp_ids), idx


def resample_real_genotypes(genotypes: GenotypeMatrix, index: GeneIndex, G: int, seed=None,
                            rng: np.random.Generator | None = None):
    """Keep ``G`` genes chosen uniformly without replacement, all their SNPs and all subjects."""
    if G > len(index):
        raise ValueError(f"asked for {G} genes but only {len(index)} are available")
    rng = np.random.default_rng(seed) if rng is None else rng
    pick = rng.choice(len(index), size=G, replace=False)
    genes = [index[int(i)] for i in pick]
    cols = np.concatenate([np.arange(g.start, g.stop) for g in genes])
    geno = GenotypeMatrix(genotypes.values[:, cols], tuple(genotypes.snp_ids[j] for j in cols))
    return geno, GeneIndex.from_sizes([g.p_g for g in genes], [g.gene_id for g in genes])


# --------------------------------------------------------------------------
# effects and phenotypes


@dataclass(frozen=True)
class MainEffect:
    gene: int
    snps: tuple[int, ...]
    beta: float = 2.0


@dataclass(frozen=True)
class InteractionEffect:
    r: int
    s: int
    snps_r: tuple[int, ...]
    snps_s: tuple[int, ...]
    gamma: float = 2.0


@dataclass(frozen=True)
class EffectConfig:
    main_genes: tuple[MainEffect, ...] = ()
    interaction_pairs: tuple[InteractionEffect, ...] = ()
    phenotype_model: PhenotypeModel = PhenotypeModel.WANG
    r2_target: float = 0.5

    def __post_init__(self):
        if not 0 < self.r2_target < 1:
            raise ValueError("r2_target must lie in (0, 1)")
        object.__setattr__(self, "phenotype_model", PhenotypeModel.parse(self.phenotype_model))
        for e in self.main_genes:
            if not e.snps:
                raise ValueError(f"main effect on gene {e.gene} has no causal SNP")
        for e in self.interaction_pairs:
            if not e.snps_r or not e.snps_s:
                raise ValueError(f"interaction {e.r}x{e.s} has an empty causal SNP set")

    @property
    def is_null(self) -> bool:
        return not self.main_genes and not self.interaction_pairs

    def causal_snps(self) -> tuple[tuple[int, int], ...]:
        out = set()
        for e in self.main_genes:
            out.update((e.gene, j) for j in e.snps)
        for e in self.interaction_pairs:
            out.update((e.r, j) for j in e.snps_r)
            out.update((e.s, j) for j in e.snps_s)
        return tuple(sorted(out))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["phenotype_model"] = self.phenotype_model.value
        return d


def _std(v: np.ndarray, what: str) -> np.ndarray:
    sd = standardize_columns(v)
    if sd.dropped:
        raise ValueError(f"{what} is constant and cannot be standardized")
    return sd.columns[:, 0]


def main_regressor(genotypes: GenotypeMatrix, index: GeneIndex, e: MainEffect) -> np.ndarray:
    gene = index[e.gene]
    cols = [gene.start + j for j in e.snps]
    for c in cols:
        if not gene.start <= c < gene.stop:
            raise ValueError(f"causal SNP {c} outside gene {gene.gene_id}")
    return _std(genotypes.values[:, cols].astype(float).sum(axis=1), f"causal SNP sum of {gene.gene_id}")


def interaction_regressor(genotypes: GenotypeMatrix, index: GeneIndex, e: InteractionEffect,
                          model: PhenotypeModel) -> np.ndarray:
    gr, gs = index[e.r], index[e.s]
    if model is PhenotypeModel.WANG:
        xr = genotypes.values[:, [gr.start + j for j in e.snps_r]].astype(float)
        xs = genotypes.values[:, [gs.start + k for k in e.snps_s]].astype(float)
        raw = (xr[:, :, None] * xs[:, None, :]).sum(axis=(1, 2))
    else:
        cr = pca_basis(genotypes.values[:, gr.columns].astype(float), 1)
        cs = pca_basis(genotypes.values[:, gs.columns].astype(float), 1)
        if cr.q == 0 or cs.q == 0:
            raise ValueError(f"gene {gr.gene_id} or {gs.gene_id} has no variable SNP")
        raw = cr.scores[:, 0] * cs.scores[:, 0]
    return _std(raw, f"interaction {gr.gene_id}x{gs.gene_id}")


def build_signal(genotypes: GenotypeMatrix, index: GeneIndex, effects: EffectConfig) -> np.ndarray:
    """Noiseless signal: coefficient times standardized regressor, summed over effects."""
    q_phi = np.zeros(genotypes.n)
    for e in effects.main_genes:
        q_phi += e.beta * main_regressor(genotypes, index, e)
    for e in effects.interaction_pairs:
        q_phi += e.gamma * interaction_regressor(genotypes, index, e, effects.phenotype_model)
    return q_phi


def sigma2_from_r2(q_phi, r2: float) -> float:
    """Noise variance giving an expected coefficient of determination ``r2``.

    ``sigma2 = (r2 - 1) * S / (r2 * (2 - n))`` with ``S`` the centered sum of
    squares of the signal.
    """
    q_phi = np.asarray(q_phi, dtype=float)
    n = q_phi.shape[0]
    if not 0 < r2 < 1:
        raise ValueError("r2 must lie in (0, 1)")
    if n <= 2:
        raise ValueError("need n > 2")
    S = float(np.sum((q_phi - q_phi.mean()) ** 2))
    if not S > 1e-12 * max(1.0, float(np.sum(q_phi ** 2))):
        raise ValueError("signal is constant; R^2 is undefined")
    return (r2 - 1.0) * S / (r2 * (2.0 - n))


def empirical_r2(y, q_phi) -> float:
    y = np.asarray(y, dtype=float)
    q_phi = np.asarray(q_phi, dtype=float)
    ybar = y.mean()
    return float(np.sum((q_phi - ybar) ** 2) / np.sum((y - ybar) ** 2))


def ols_r2(y, regressors) -> float:
    """R^2 of an intercept-plus-regressors least squares fit."""
    y = np.asarray(y, dtype=float)
    if not regressors:
        return 0.0
    x = np.column_stack([np.ones_like(y)] + list(regressors))
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    r = y - x @ beta
    yc = y - y.mean()
    return float(1.0 - (r @ r) / (yc @ yc))


def true_regressors(genotypes, index, effects: EffectConfig):
    mains = [main_regressor(genotypes, index, e) for e in effects.main_genes]
    inter = [interaction_regressor(genotypes, index, e, effects.phenotype_model) for e in effects.interaction_pairs]
    return mains, inter


def partial_r2(y, genotypes: GenotypeMatrix, index: GeneIndex, truth: EffectConfig):
    """Shares ``(p_I, p_M)`` of the full-model R^2 reached by the interaction-only
    and main-only models. ``(0, 0, True)`` flags the no-effect case.

    Returns
    -------
    (p_I, p_M, undefined)
    """
    y = np.asarray(getattr(y, "y", y), dtype=float)
    if truth.is_null:
        return 0.0, 0.0, True
    mains, inter = true_regressors(genotypes, index, truth)
    r2_t = ols_r2(y, mains + inter)
    r2_i = ols_r2(y, inter)
    r2_m = ols_r2(y, mains)
    if r2_t <= 0:
        return 0.0, 0.0, True
    return r2_i / r2_t, r2_m / r2_t, False


@dataclass
class SimulatedDataset:
    genotypes: GenotypeMatrix
    index: GeneIndex
    y: Phenotype
    truth: EffectConfig
    sigma2: float
    q_phi: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def realized_r2(self) -> float | None:
        if self.truth.is_null:
            return None
        return empirical_r2(self.y.y, self.q_phi)

    def manifest(self) -> dict:
        ids = self.index.ids
        return {
            "main_effects": [
                {"gene": ids[e.gene], "causal_snps": [self.genotypes.snp_ids[self.index[e.gene].start + j] for j in e.snps],
                 "beta": e.beta}
                for e in self.truth.main_genes
            ],
            "interactions": [
                {"pair": [ids[e.r], ids[e.s]], "group_id": f"{ids[e.r]}x{ids[e.s]}",
                 "causal_snps_r": [self.genotypes.snp_ids[self.index[e.r].start + j] for j in e.snps_r],
                 "causal_snps_s": [self.genotypes.snp_ids[self.index[e.s].start + k] for k in e.snps_s],
                 "gamma": e.gamma}
                for e in self.truth.interaction_pairs
            ],
            "phenotype_model": self.truth.phenotype_model.value,
            "r2_target": None if self.truth.is_null else self.truth.r2_target,
            "realized_r2": self.realized_r2,
            "sigma2": self.sigma2,
            **self.meta,
        }

    def write(self, directory) -> dict[str, Path]:
        paths = write_dataset(directory, self.genotypes, self.index, self.y)
        paths["truth"] = Path(directory) / "truth.json"
        paths["truth"].write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return paths


def simulate_phenotype(genotypes, index, effects: EffectConfig, rng: np.random.Generator,
                       null_sigma2: float = 1.0):
    """``y = q_phi + eps`` with the noise variance calibrated to ``effects.r2_target``.

    Without declared effects ``q_phi`` is zero and ``null_sigma2`` is used.
    """
    q_phi = build_signal(genotypes, index, effects)
    sigma2 = null_sigma2 if effects.is_null else sigma2_from_r2(q_phi, effects.r2_target)
    y = q_phi + rng.normal(0.0, np.sqrt(sigma2), size=genotypes.n)
    return Phenotype(y), sigma2, q_phi


# --------------------------------------------------------------------------
# study settings


SETTING_NAMES = {
    (1, PhenotypeModel.WANG): "A", (1, PhenotypeModel.PCA): "B",
    (2, PhenotypeModel.WANG): "C", (2, PhenotypeModel.PCA): "D",
    (3, PhenotypeModel.WANG): "E", (3, PhenotypeModel.PCA): "F",
    (4, PhenotypeModel.WANG): "OME", (4, PhenotypeModel.PCA): "OME",
    (5, PhenotypeModel.WANG): "NE", (5, PhenotypeModel.PCA): "NE",
}

# (main-effect gene positions, interaction pairs) per setting id
SETTINGS = {
    1: ((0, 1), ((0, 1),)),
    2: ((0, 1), ((2, 3),)),
    3: ((), ((0, 1),)),
    4: ((0, 1), ()),
    5: ((), ()),
}


def setting_name(setting: int, model) -> str:
    return SETTING_NAMES[(int(setting), PhenotypeModel.parse(model))]


def target_pair(setting: int) -> tuple[int, int]:
    """Gene pair whose detection counts as the setting's interaction 'power'.

    Settings without a simulated interaction use genes 1 and 2, so the figure
    reports the false-positive rate for that pair.
    """
    pairs = SETTINGS[int(setting)][1]
    return pairs[0] if pairs else (0, 1)


def causal_positions(size: int, k: int = 2) -> tuple[int, ...]:
    return tuple(range(min(k, size)))


def setting_effects(setting: int, model, r2: float, sizes: Sequence[int], coef: float = 2.0,
                    n_causal: int = 2) -> EffectConfig:
    if int(setting) not in SETTINGS:
        raise ValueError(f"unknown setting {setting}; expected 1..5")
    mains, pairs = SETTINGS[int(setting)]
    need = max([g for g in mains] + [g for p in pairs for g in p], default=-1)
    if need >= len(sizes):
        raise ValueError(f"setting {setting} needs at least {need + 1} genes")
    main = tuple(MainEffect(g, causal_positions(sizes[g], n_causal), coef) for g in mains)
    inter = tuple(
        InteractionEffect(r, s, causal_positions(sizes[r], n_causal), causal_positions(sizes[s], n_causal), coef)
        for r, s in pairs
    )
    return EffectConfig(main, inter, PhenotypeModel.parse(model), r2)


def simulate_simplified(setting: int, model, r2: float, seed, n: int = 600, G: int = 6, p_g: int = 6,
                        rho: float = 0.8, maf_range=(0.05, 0.5), causal_maf: float = 0.2,
                        coef: float = 2.0) -> SimulatedDataset:
    """One replicate of the fully simulated study (block-correlated genotypes)."""
    rng = np.random.default_rng(seed)
    sizes = [p_g] * G
    effects = setting_effects(setting, model, r2, sizes, coef)
    cfg = GenotypeSimConfig(n=n, G=G, p_g=p_g, rho=rho, maf_range=tuple(maf_range), causal_maf=causal_maf,
                            causal_snps=effects.causal_snps())
    geno, idx = simulate_genotypes(cfg, rng)
    y, sigma2, q_phi = simulate_phenotype(geno, idx, effects, rng)
    return SimulatedDataset(geno, idx, y, effects, sigma2, q_phi,
                            {"study": "simplified", "setting": int(setting), "name": setting_name(setting, model)})


def simulate_realistic(setting: int, model, r2: float, seed, corpus=None, G: int = 6,
                       coef: float = 2.0) -> SimulatedDataset:
    """One replicate of the resampled-genotype study: ``G`` random genes from ``corpus``."""
    from .corpus import load_standin_corpus

    rng = np.random.default_rng(seed)
    geno_all, idx_all = load_standin_corpus() if corpus is None else corpus
    geno, idx = resample_real_genotypes(geno_all, idx_all, G, rng=rng)
    effects = setting_effects(setting, model, r2, idx.sizes, coef)
    y, sigma2, q_phi = simulate_phenotype(geno, idx, effects, rng)
    return SimulatedDataset(geno, idx, y, effects, sigma2, q_phi,
                            {"study": "realistic", "setting": int(setting), "name": setting_name(setting, model),
                             "genes": idx.ids})


def simulate(study: str, setting: int, model, r2: float, seed, **kw) -> SimulatedDataset:
    if study == "simplified":
        return simulate_simplified(setting, model, r2, seed, **kw)
    if study == "realistic":
        return simulate_realistic(setting, model, r2, seed, **kw)
    raise ValueError(f"unknown study {study!r}")
