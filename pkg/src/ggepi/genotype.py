"""Genotype, gene grouping and phenotype containers plus TSV ingestion.

Genotypes are additively coded in {1, 2, 3} and stored as ``int8``. All
containers are frozen and their arrays are flagged read-only so they can be
shared across worker processes without defensive copies.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

GENOTYPE_CODES = (1, 2, 3)
STD_TOL = 1e-10


class DatasetError(ValueError):
    """Raised when an input file does not conform to the documented format."""

    def __init__(self, message: str, path=None, line: int | None = None, column=None):
        self.path = None if path is None else str(path)
        self.line = line
        self.column = column
        where = []
        if self.path is not None:
            where.append(self.path)
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GenotypeMatrix:
    """n x p matrix of additive genotype codes with SNP identifiers."""

    values: np.ndarray
    snp_ids: tuple[str, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise ValueError("genotype matrix must be 2-dimensional")
        n, p = v.shape
        if n < 2 or p < 1:
            raise ValueError(f"genotype matrix needs n >= 2 and p >= 1, got {v.shape}")
        if not np.isin(v, GENOTYPE_CODES).all():
            bad = np.argwhere(~np.isin(v, GENOTYPE_CODES))[0]
            raise ValueError(
                f"genotype code {v[bad[0], bad[1]]!r} outside {{1,2,3}} at row {bad[0]}, column {bad[1]}"
            )
        object.__setattr__(self, "values", _frozen(v.astype(np.int8)))
        ids = tuple(self.snp_ids) if self.snp_ids else tuple(f"snp{j + 1}" for j in range(p))
        if len(ids) != p:
            raise ValueError(f"{len(ids)} SNP ids for {p} columns")
        if len(set(ids)) != p:
            raise ValueError("SNP ids must be unique")
        object.__setattr__(self, "snp_ids", ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, GenotypeMatrix):
            return NotImplemented
        return self.snp_ids == other.snp_ids and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class Gene:
    gene_id: str
    start: int
    stop: int

    @property
    def p_g(self) -> int:
        return self.stop - self.start

    @property
    def columns(self) -> slice:
        return slice(self.start, self.stop)


@dataclass(frozen=True)
class GeneIndex:
    """Ordered contiguous column ranges, one per gene."""

    genes: tuple[Gene, ...]

    def __post_init__(self):
        genes = tuple(self.genes)
        if not genes:
            raise ValueError("gene index is empty")
        pos = 0
        for g in genes:
            if g.start != pos:
                raise ValueError(f"gene {g.gene_id!r} range does not start at column {pos}")
            if g.p_g < 1:
                raise ValueError(f"gene {g.gene_id!r} has no SNPs")
            pos = g.stop
        ids = [g.gene_id for g in genes]
        if len(set(ids)) != len(ids):
            raise ValueError("gene ids must be unique")
        object.__setattr__(self, "genes", genes)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], ids: Sequence[str] | None = None) -> "GeneIndex":
        if ids is None:
            ids = [f"gene{g + 1}" for g in range(len(sizes))]
        bounds = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        return cls(tuple(Gene(str(i), int(a), int(b)) for i, a, b in zip(ids, bounds[:-1], bounds[1:])))

    @property
    def p(self) -> int:
        return self.genes[-1].stop

    @property
    def sizes(self) -> list[int]:
        return [g.p_g for g in self.genes]

    @property
    def ids(self) -> list[str]:
        return [g.gene_id for g in self.genes]

    def __len__(self):
        return len(self.genes)

    def __iter__(self):
        return iter(self.genes)

    def __getitem__(self, key) -> Gene:
        if isinstance(key, str):
            for g in self.genes:
                if g.gene_id == key:
                    return g
            raise KeyError(key)
        return self.genes[key]

    def pairs(self) -> list[tuple[int, int]]:
        """Gene-pair positions ``(r, s)`` with ``r < s`` in lexicographic order."""
        G = len(self.genes)
        return [(r, s) for r in range(G) for s in range(r + 1, G)]


@dataclass(frozen=True)
class Phenotype:
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 1:
            raise ValueError("phenotype must be a vector")
        if not np.isfinite(y).all():
            raise ValueError("phenotype has non-finite entries")
        object.__setattr__(self, "y", _frozen(y))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def check_variance(self):
        if self.n < 2 or np.var(self.y) <= 0.0:
            raise ValueError("phenotype has zero variance")


@dataclass(frozen=True)
class StandardizedDesign:
    """Centered, unit-sd columns. ``kept`` indexes the retained input columns."""

    columns: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    kept: np.ndarray
    dropped: tuple[int, ...] = field(default=())

    def transform(self, m: np.ndarray) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        return (m[:, self.kept] - self.means) / self.sds


def standardize_columns(m) -> StandardizedDesign:
    """Center and scale each column to unit sample sd (ddof=1).

    Columns whose sample sd is zero (relative to their magnitude) are not
    divided; they are left out of ``columns`` and their indices are listed in
    ``dropped``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if m.shape[0] < 2:
        raise ValueError("need at least 2 rows to standardize")
    means = m.mean(axis=0)
    centered = m - means
    sds = centered.std(axis=0, ddof=1)
    scale = np.maximum(np.abs(means), 1.0)
    constant = sds <= 1e-12 * scale
    kept = np.flatnonzero(~constant)
    cols = centered[:, kept] / sds[kept]
    # a second pass pins mean/sd to rounding level
    cols -= cols.mean(axis=0)
    cols /= cols.std(axis=0, ddof=1)
    return StandardizedDesign(
        columns=_frozen(cols),
        means=_frozen(means[kept]),
        sds=_frozen(sds[kept]),
        kept=_frozen(kept),
        dropped=tuple(int(j) for j in np.flatnonzero(constant)),
    )


def _read_tsv(path: Path) -> list[list[str]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return [row for row in csv.reader(fh, delimiter="\t")]
    except FileNotFoundError:
        raise DatasetError("file not found", path) from None


def read_genotypes(path) -> GenotypeMatrix:
    path = Path(path)
    rows = _read_tsv(path)
    if not rows:
        raise DatasetError("empty genotype file", path)
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise DatasetError("duplicate SNP id in header", path, 1)
    p = len(header)
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != p:
            raise DatasetError(f"expected {p} fields, found {len(row)}", path, lineno)
        codes = []
        for col, cell in enumerate(row, start=1):
            cell = cell.strip()
            if cell not in ("1", "2", "3"):
                what = "missing genotype" if cell in ("", "NA", "nan", ".", "-9") else f"genotype code {cell!r} outside {{1,2,3}}"
                raise DatasetError(what, path, lineno, col)
            codes.append(int(cell))
        values.append(codes)
    if len(values) < 2:
        raise DatasetError("need at least 2 subjects", path)
    return GenotypeMatrix(np.array(values, dtype=np.int8), tuple(header))


def read_gene_map(path, drop_duplicates: bool = False) -> list[tuple[str, str]]:
    """Return ``(snp_id, gene_id)`` pairs in file order."""
    path = Path(path)
    rows = _read_tsv(path)
    if not rows:
        raise DatasetError("empty gene map", path)
    header = [h.strip() for h in rows[0]]
    try:
        i_snp, i_gene = header.index("snp_id"), header.index("gene_id")
    except ValueError:
        raise DatasetError("header must contain 'snp_id' and 'gene_id'", path, 1) from None
    out: list[tuple[str, str]] = []
    seen: dict[str, int] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise DatasetError(f"expected {len(header)} fields, found {len(row)}", path, lineno)
        snp, gene = row[i_snp].strip(), row[i_gene].strip()
        if not snp or not gene:
            raise DatasetError("empty snp_id or gene_id", path, lineno)
        if snp in seen:
            if drop_duplicates:
                logger.warning("%s line %d: SNP %s already mapped at line %d, dropped", path, lineno, snp, seen[snp])
                continue
            raise DatasetError(f"SNP {snp!r} mapped more than once (first at line {seen[snp]})", path, lineno)
        seen[snp] = lineno
        out.append((snp, gene))
    return out


def read_phenotype(path) -> Phenotype:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise DatasetError("file not found", path) from None
    vals = []
    for lineno, line in enumerate(lines, start=1):
        s = line.strip()
        if not s:
            continue
        try:
            v = float(s)
        except ValueError:
            raise DatasetError(f"not a number: {s!r}", path, lineno) from None
        if not math.isfinite(v):
            raise DatasetError("non-finite phenotype value", path, lineno)
        vals.append(v)
    return Phenotype(np.array(vals))


def assemble(genotypes: GenotypeMatrix, gene_map: Iterable[tuple[str, str]], gene_map_path=None):
    """Reorder genotype columns so each gene's SNPs are contiguous.

    Gene order is the order of first appearance in ``gene_map``; within-gene
    order follows the map.
    """
    col_of = {s: j for j, s in enumerate(genotypes.snp_ids)}
    by_gene: dict[str, list[str]] = {}
    for snp, gene in gene_map:
        if snp not in col_of:
            raise DatasetError(f"SNP {snp!r} listed in gene map but absent from genotype matrix", gene_map_path)
        by_gene.setdefault(gene, []).append(snp)
    mapped = {s for snps in by_gene.values() for s in snps}
    missing = [s for s in genotypes.snp_ids if s not in mapped]
    if missing:
        raise DatasetError(
            f"{len(missing)} genotype SNP(s) absent from gene map, first {missing[0]!r} "
            f"(column {col_of[missing[0]] + 1})",
            gene_map_path,
        )
    order = [col_of[s] for snps in by_gene.values() for s in snps]
    g = GenotypeMatrix(genotypes.values[:, order], tuple(genotypes.snp_ids[j] for j in order))
    idx = GeneIndex.from_sizes([len(v) for v in by_gene.values()], list(by_gene))
    return g, idx


def load_dataset(genotype_path, gene_map_path, phenotype_path, drop_duplicates: bool = False):
    """Load and cross-validate the three dataset files.

    Returns
    -------
    (GenotypeMatrix, GeneIndex, Phenotype)
    """
    geno = read_genotypes(genotype_path)
    gmap = read_gene_map(gene_map_path, drop_duplicates=drop_duplicates)
    geno, idx = assemble(geno, gmap, gene_map_path)
    pheno = read_phenotype(phenotype_path)
    if pheno.n != geno.n:
        raise DatasetError(f"phenotype has {pheno.n} values but genotype file has {geno.n} subjects", phenotype_path)
    return geno, idx, pheno


def write_dataset(directory, genotypes: GenotypeMatrix, index: GeneIndex, y: Phenotype | None = None) -> dict[str, Path]:
    """Write ``genotypes.tsv``, ``gene_map.tsv`` and optionally ``phenotype.txt``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {"genotypes": d / "genotypes.tsv", "gene_map": d / "gene_map.tsv"}
    with open(paths["genotypes"], "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(genotypes.snp_ids) + "\n")
        for row in genotypes.values:
            fh.write("\t".join(str(int(c)) for c in row) + "\n")
    with open(paths["gene_map"], "w", encoding="utf-8", newline="") as fh:
        fh.write("snp_id\tgene_id\n")
        for gene in index:
            for j in range(gene.start, gene.stop):
                fh.write(f"{genotypes.snp_ids[j]}\t{gene.gene_id}\n")
    if y is not None:
        paths["phenotype"] = d / "phenotype.txt"
        with open(paths["phenotype"], "w", encoding="utf-8") as fh:
            for v in y.y:
                fh.write(f"{float(v)!r}\n")
    return paths
