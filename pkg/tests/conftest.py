import logging

import numpy as np
import pytest

from ggepi.genotype import GeneIndex, GenotypeMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_genotypes(rng, n, sizes, ids=None):
    p = int(sum(sizes))
    values = rng.integers(1, 4, size=(n, p)).astype(np.int8)
    snp_ids = tuple(f"s{j}" for j in range(p))
    return GenotypeMatrix(values, snp_ids), GeneIndex.from_sizes(sizes, ids)


@pytest.fixture(autouse=True)
def _quiet_solver_logs(caplog):
    caplog.set_level(logging.ERROR, logger="ggepi.grouplasso")
