"""Bundled synthetic genotype corpus used by the resampled-genotype study.

30 genes on 763 subjects. Gene sizes are heavy-tailed (median 2, 1 to 60
SNPs) and LD decays with SNP distance inside a gene. The files under
``data/standin`` are produced by :func:`make_standin_corpus` with
``CORPUS_SEED`` and are checked against a fresh regeneration in the tests.
"""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .genotype import GeneIndex, GenotypeMatrix, assemble, read_gene_map, read_genotypes, write_dataset
from .simulation import discretize

CORPUS_SEED = 20170512
N_SUBJECTS = 763
N_GENES = 30
MAX_GENE_SIZE = 60


def corpus_sizes(rng: np.random.Generator) -> list[int]:
    raw = np.exp(rng.normal(np.log(2.0), 1.2, size=N_GENES))
    sizes = np.clip(np.round(raw), 1, MAX_GENE_SIZE).astype(int)
    sizes[np.argmax(sizes)] = MAX_GENE_SIZE
    # pin the median at 2 SNPs
    order = np.argsort(sizes, kind="stable")
    sizes[order[N_GENES // 2 - 1]] = 2
    sizes[order[N_GENES // 2]] = 2
    return [int(s) for s in sizes]


def make_standin_corpus(seed: int = CORPUS_SEED, n: int = N_SUBJECTS):
    rng = np.random.default_rng(seed)
    sizes = corpus_sizes(rng)
    blocks = []
    for size in sizes:
        rho = rng.uniform(0.5, 0.95)
        lag = np.abs(np.subtract.outer(np.arange(size), np.arange(size)))
        chol = np.linalg.cholesky(rho ** lag)
        blocks.append(rng.standard_normal((n, size)) @ chol.T)
    latent = np.hstack(blocks)
    maf = rng.uniform(0.05, 0.5, size=latent.shape[1])
    values = discretize(latent, maf)
    ids = [f"G{g + 1:02d}" for g in range(N_GENES)]
    idx = GeneIndex.from_sizes(sizes, ids)
    snp_ids = tuple(f"rs{g + 1:02d}{j + 1:03d}" for g in range(N_GENES) for j in range(sizes[g]))
    return GenotypeMatrix(values, snp_ids), idx


def manifest(index: GeneIndex) -> dict:
    sizes = index.sizes
    return {
        "n_genes": len(index),
        "genes": [{"gene_id": g.gene_id, "n_snps": g.p_g} for g in index],
        "total_snps": int(sum(sizes)),
        "median_size": float(np.median(sizes)),
        "seed": CORPUS_SEED,
    }


def write_standin_corpus(directory) -> dict[str, Path]:
    geno, idx = make_standin_corpus()
    paths = write_dataset(directory, geno, idx)
    paths["manifest"] = Path(directory) / "manifest.json"
    paths["manifest"].write_text(json.dumps(manifest(idx), indent=2) + "\n", encoding="utf-8")
    return paths


def corpus_dir() -> Path:
    return Path(str(resources.files("ggepi") / "data" / "standin"))


@lru_cache(maxsize=1)
def load_standin_corpus():
    """(GenotypeMatrix, GeneIndex) of the bundled corpus."""
    d = corpus_dir()
    if not (d / "genotypes.tsv").exists():
        return make_standin_corpus()
    geno = read_genotypes(d / "genotypes.tsv")
    return assemble(geno, read_gene_map(d / "gene_map.tsv"), d / "gene_map.tsv")


def load_manifest() -> dict:
    return json.loads((corpus_dir() / "manifest.json").read_text(encoding="utf-8"))
