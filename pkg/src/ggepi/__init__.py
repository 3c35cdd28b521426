"""Gene-gene interaction detection with group-lasso screening and
permutation-based cleaning.

Interaction variables between two genes are built by one of three methods
(``ggee``, ``pca``, ``pls``), main effects and interactions are screened
together by a group lasso on one half of the subjects, and the selected
groups are tested on the other half.
"""
__version__ = "0.1.0"

from .genotype import (DatasetError, Gene, GeneIndex, GenotypeMatrix, Phenotype, assemble, load_dataset,
                       read_gene_map, read_genotypes, read_phenotype, standardize_columns, write_dataset)
from .grouplasso import (ConvergenceError, FitResult, GroupedDesign, build_grouped_design, cv_select_lambda, fit,
                         kkt_violation, lambda_max)
from .inference import DetectConfig, InferenceReport, bh_adjust, clean, detect, screen, split
from .interactions import Method, build_interaction_design, ggee_component, pca_interaction, pls_interaction
from .simulation import (EffectConfig, GenotypeSimConfig, PhenotypeModel, SimulatedDataset, build_signal,
                         partial_r2, resample_real_genotypes, sigma2_from_r2, simulate, simulate_genotypes)

__all__ = [
    "DatasetError", "Gene", "GeneIndex", "GenotypeMatrix", "Phenotype", "assemble", "load_dataset",
    "read_gene_map", "read_genotypes", "read_phenotype", "standardize_columns", "write_dataset",
    "ConvergenceError", "FitResult", "GroupedDesign", "build_grouped_design", "cv_select_lambda", "fit",
    "kkt_violation", "lambda_max",
    "DetectConfig", "InferenceReport", "bh_adjust", "clean", "detect", "screen", "split",
    "Method", "build_interaction_design", "ggee_component", "pca_interaction", "pls_interaction",
    "EffectConfig", "GenotypeSimConfig", "PhenotypeModel", "SimulatedDataset", "build_signal", "partial_r2",
    "resample_real_genotypes", "sigma2_from_r2", "simulate", "simulate_genotypes",
]
