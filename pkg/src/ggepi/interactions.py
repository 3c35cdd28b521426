"""Gene-pair interaction variables.

Three constructions are available for each pair of genes ``(r, s)``:

* ``GGEE``: project the matrix of all SNP-SNP products on the unit direction
  maximizing its squared covariance with the phenotype. The maximizer is
  ``W'y / ||W'y||`` so no eigensolver is needed.
* ``PCA``: pairwise products of the leading principal component scores of
  each gene.
* ``PLS``: leading PLS components of gene ``r`` against ``[y | X_s]``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .genotype import GeneIndex, GenotypeMatrix, Phenotype, StandardizedDesign, standardize_columns

logger = logging.getLogger(__name__)


class Method(str, Enum):
    GGEE = "ggee"
    PCA = "pca"
    PLS = "pls"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown method {value!r}; expected one of ggee, pca, pls") from None


class DegeneratePairError(ValueError):
    """The phenotype carries no covariance with any candidate interaction direction."""


@dataclass(frozen=True)
class PairProductMatrix:
    w: np.ndarray
    pair: tuple[str, str] = ("r", "s")
    shape_rs: tuple[int, int] = (0, 0)

    def col(self, j: int, k: int) -> int:
        p_r, p_s = self.shape_rs
        if not (0 <= j < p_r and 0 <= k < p_s):
            raise IndexError((j, k))
        return j * p_s + k

    @property
    def column_index(self) -> dict[tuple[int, int], int]:
        p_r, p_s = self.shape_rs
        return {(j, k): j * p_s + k for j in range(p_r) for k in range(p_s)}


@dataclass(frozen=True)
class InteractionBlock:
    """Interaction variables for one gene pair.

    A degenerate pair keeps its slot with an empty ``z`` and ``degenerate``
    holding the reason, so a design always has one block per pair.
    """

    z: np.ndarray
    method: Method
    pair: tuple[str, str]
    u: np.ndarray | None = None
    q: int | None = None
    degenerate: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.z.shape[1]

    @property
    def group_id(self) -> str:
        return f"{self.pair[0]}x{self.pair[1]}"


@dataclass(frozen=True)
class PcaBasis:
    components: np.ndarray
    scores: np.ndarray
    explained_variance: np.ndarray
    total_variance: float
    scaler: StandardizedDesign

    @property
    def q(self) -> int:
        return self.components.shape[1]

    @property
    def explained_share(self) -> np.ndarray:
        return self.explained_variance / self.total_variance


def pair_product(xr, xs, pair=("r", "s")) -> PairProductMatrix:
    """All column products ``xr[:, j] * xs[:, k]``, column ``j * p_s + k``."""
    if xr.ndim != 2 or xs.ndim != 2:
        raise ValueError("gene submatrices must be 2-dimensional")
    n, p_r = xr.shape
    if xs.shape[0] != n:
        raise ValueError(f"row-count mismatch: {n} vs {xs.shape[0]}")
    p_s = xs.shape[1]
    w = np.empty((n, p_r * p_s), dtype=float)
    for j in range(p_r):
        w[:, j * p_s:(j + 1) * p_s] = xr[:, j:j + 1] * xs
    return PairProductMatrix(w, tuple(pair), (p_r, p_s))


def _center(y) -> np.ndarray:
    y = np.asarray(y.y if isinstance(y, Phenotype) else y, dtype=float)
    return y - y.mean()


def ggee_weights(w: np.ndarray, y) -> np.ndarray:
    """Unit vector ``u`` maximizing ``(u' W' y)^2`` for centered ``y``."""
    yc = _center(y)
    if w.shape[0] != yc.shape[0]:
        raise ValueError("W and y have different row counts")
    v = w.T @ yc
    norm = np.linalg.norm(v)
    scale = np.linalg.norm(w) * np.linalg.norm(yc)
    if not norm > 1e-12 * max(scale, 1e-300):
        raise DegeneratePairError("phenotype is orthogonal to every pair product")
    u = v / norm
    # u'W'y = ||W'y|| > 0 already; guard the convention explicitly anyway
    if np.dot(w @ u, yc) < 0:
        u = -u
    return u


def ggee_component(w: PairProductMatrix, y) -> InteractionBlock:
    u = ggee_weights(w.w, y)
    return InteractionBlock(z=(w.w @ u)[:, None], method=Method.GGEE, pair=w.pair, u=u)


def _orient(vec: np.ndarray) -> float:
    i = np.argmax(np.abs(vec))
    return -1.0 if vec[i] < 0 else 1.0


def pca_basis(xg, q: int = 1) -> PcaBasis:
    """Leading principal axes of the column-standardized gene matrix.

    ``q`` is clamped to the numerical rank with a logged warning. Each axis is
    signed so that its largest-magnitude loading is positive.
    """
    xg = np.asarray(xg, dtype=float)
    if xg.ndim != 2 or xg.shape[0] < 2:
        raise ValueError("gene matrix needs at least 2 rows")
    if q < 1:
        raise ValueError("q must be positive")
    sd = standardize_columns(xg)
    xs = sd.columns
    p_g = xg.shape[1]
    if xs.shape[1] == 0:
        s = np.zeros(0)
        vt = np.zeros((0, 0))
    else:
        _, s, vt = np.linalg.svd(xs, full_matrices=False)
    rank = int(np.sum(s > s[0] * max(xs.shape) * np.finfo(float).eps)) if s.size else 0
    q_eff = min(q, rank)
    if q_eff < q:
        logger.warning("PCA: requested %d components, clamped to %d (p_g=%d, rank=%d)", q, q_eff, p_g, rank)
    axes = vt[:q_eff].T
    for c in range(q_eff):
        axes[:, c] *= _orient(axes[:, c])
    components = np.zeros((p_g, q_eff))
    components[sd.kept] = axes
    scores = xs @ axes
    ev = s[:q_eff] ** 2 / (xg.shape[0] - 1)
    total = float(xs.shape[1])  # trace of a correlation matrix
    return PcaBasis(components, scores, ev, total, sd)


def pca_interaction(cr: PcaBasis, cs: PcaBasis, pair=("r", "s")) -> InteractionBlock:
    if cr.scores.shape[0] != cs.scores.shape[0]:
        raise ValueError("score matrices have different row counts")
    if cr.q == 0 or cs.q == 0:
        raise DegeneratePairError("a gene has no non-constant SNP column")
    w = pair_product(cr.scores, cs.scores, pair)
    return InteractionBlock(z=w.w, method=Method.PCA, pair=tuple(pair), q=max(cr.q, cs.q),
                            meta={"q_r": cr.q, "q_s": cs.q})


@dataclass(frozen=True)
class PlsFit:
    scores: np.ndarray        # n x q components
    weights: np.ndarray       # p_r x q, in successively deflated spaces
    rotations: np.ndarray     # p_r x q, maps the undeflated matrix to scores
    cov2: np.ndarray          # squared covariance achieved by each component


def pls_components(xr, t, q: int = 1) -> PlsFit:
    """PLS components of ``xr`` maximizing ``cov^2(xr u, t v)``.

    After each component only ``xr`` is deflated (regressed on the component);
    ``t`` is kept fixed.
    """
    xr = np.asarray(xr, dtype=float)
    t = np.asarray(t, dtype=float)
    n, p_r = xr.shape
    if t.shape[0] != n:
        raise ValueError("row-count mismatch")
    if q < 1:
        raise ValueError("q must be positive")
    x = xr - xr.mean(axis=0)
    tc = t - t.mean(axis=0)
    scale = np.linalg.norm(x) * np.linalg.norm(tc) / (n - 1)
    n_comp = min(q, p_r)
    weights, loadings, scores, cov2 = [], [], [], []
    for c in range(n_comp):
        m = x.T @ tc / (n - 1)
        uu, s, vt = np.linalg.svd(m, full_matrices=False)
        if not s[0] > 1e-12 * max(scale, 1e-300):
            if c == 0:
                raise DegeneratePairError("zero cross-covariance between gene and [y | partner gene]")
            logger.warning("PLS: stopped after %d of %d components (deflated matrix exhausted)", c, n_comp)
            break
        u = uu[:, 0]
        comp = x @ u
        # orient towards the phenotype (first column of t) when possible
        c_y = comp @ tc[:, 0]
        if c_y < 0 or (c_y == 0 and _orient(u) < 0):
            u = -u
            comp = -comp
        load = x.T @ comp / (comp @ comp)
        x = x - np.outer(comp, load)
        weights.append(u)
        loadings.append(load)
        scores.append(comp)
        cov2.append(s[0] ** 2)
    W = np.column_stack(weights)
    P = np.column_stack(loadings)
    R = W @ np.linalg.inv(P.T @ W)
    return PlsFit(np.column_stack(scores), W, R, np.array(cov2))


def pls_interaction(xr, xs, y, q: int = 1, pair=("r", "s"), rows=None) -> InteractionBlock:
    """PLS interaction variables for ``(r, s)``.

    ``xr`` and ``xs`` are expected column-standardized. The phenotype enters
    ``T = [y | xs]`` standardized to unit variance so that it carries the same
    weight as one SNP. With ``rows`` the weights are estimated on those rows
    only and then applied to every row.
    """
    xr = np.asarray(xr, dtype=float)
    xs = np.asarray(xs, dtype=float)
    yv = np.asarray(y.y if isinstance(y, Phenotype) else y, dtype=float)
    if xr.shape[0] != xs.shape[0] or xr.shape[0] != yv.shape[0]:
        raise ValueError("row-count mismatch")
    sel = slice(None) if rows is None else np.asarray(rows)
    ys = yv[sel]
    sd = ys.std(ddof=1)
    if not sd > 0:
        raise DegeneratePairError("phenotype is constant")
    t = np.column_stack([(ys - ys.mean()) / sd, xs[sel]])
    fit = pls_components(xr[sel], t, q)
    z = (xr - xr[sel].mean(axis=0)) @ fit.rotations
    return InteractionBlock(z=z, method=Method.PLS, pair=tuple(pair), q=z.shape[1],
                            meta={"cov2": fit.cov2.tolist()})


@dataclass
class InteractionDesign:
    """One block per gene pair in lexicographic ``(r, s)`` order."""

    blocks: list[InteractionBlock]
    method: Method
    q: int

    @property
    def degenerate(self) -> list[tuple[str, str]]:
        return [b.pair for b in self.blocks if b.degenerate]

    @property
    def usable(self) -> list[InteractionBlock]:
        return [b for b in self.blocks if not b.degenerate]

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)


def gene_matrices(g: GenotypeMatrix, idx: GeneIndex, standardized: bool = True) -> list[np.ndarray]:
    """Per-gene float submatrices; constant columns become zero when standardized."""
    out = []
    for gene in idx:
        x = g.values[:, gene.columns].astype(float)
        if standardized:
            sd = standardize_columns(x)
            full = np.zeros_like(x)
            full[:, sd.kept] = sd.columns
            x = full
        out.append(x)
    return out


def build_interaction_design(
    g: GenotypeMatrix,
    idx: GeneIndex,
    y,
    method="ggee",
    q: int = 1,
    products: str = "raw",
    rows=None,
) -> InteractionDesign:
    """Construct interaction variables for every gene pair.

    Parameters
    ----------
    method : {"ggee", "pca", "pls"}
    q : int
        Component count for PCA (``q**2`` columns per pair) and PLS.
    products : {"raw", "standardized"}
        Coding of the SNP columns multiplied for G-GEE. ``"raw"`` keeps the
        additive {1,2,3} codes.
    rows : index array, optional
        Rows used to estimate phenotype-driven weights (G-GEE, PLS). The
        resulting weights are applied to all rows.

    Every usable block's columns are returned standardized. Pairs that turn
    out degenerate keep their slot with an empty ``z``.
    """
    method = Method.parse(method)
    if products not in ("raw", "standardized"):
        raise ValueError("products must be 'raw' or 'standardized'")
    yv = np.asarray(y.y if isinstance(y, Phenotype) else y, dtype=float)
    if yv.shape[0] != g.n:
        raise ValueError("phenotype length differs from genotype rows")
    sel = np.arange(g.n) if rows is None else np.asarray(rows)
    ids = idx.ids
    std_mats = gene_matrices(g, idx, standardized=True)
    if method is Method.GGEE:
        prod_mats = std_mats if products == "standardized" else gene_matrices(g, idx, standardized=False)
    if method is Method.PCA:
        bases = [pca_basis(x, q) for x in std_mats]

    blocks = []
    for r, s in idx.pairs():
        pair = (ids[r], ids[s])
        try:
            if method is Method.GGEE:
                w = pair_product(prod_mats[r], prod_mats[s], pair)
                u = ggee_weights(w.w[sel], yv[sel])
                blk = InteractionBlock(z=(w.w @ u)[:, None], method=method, pair=pair, u=u, meta={"products": products})
            elif method is Method.PCA:
                blk = pca_interaction(bases[r], bases[s], pair)
            else:
                blk = pls_interaction(std_mats[r], std_mats[s], yv, q, pair, rows=sel)
            sd = standardize_columns(blk.z)
            if sd.columns.shape[1] == 0:
                raise DegeneratePairError("constructed interaction variable is constant")
            if sd.dropped:
                logger.warning("pair %s: dropped %d constant interaction column(s)", pair, len(sd.dropped))
            blk = InteractionBlock(z=sd.columns, method=blk.method, pair=pair, u=blk.u, q=blk.q, meta=blk.meta)
        except DegeneratePairError as exc:
            logger.warning("pair %s x %s is degenerate and is left out: %s", pair[0], pair[1], exc)
            blk = InteractionBlock(z=np.zeros((g.n, 0)), method=method, pair=pair, q=q, degenerate=str(exc))
        blocks.append(blk)
    if blocks and all(b.degenerate for b in blocks):
        raise DegeneratePairError("every gene pair is degenerate")
    return InteractionDesign(blocks, method, q)


def dump_block(block: InteractionBlock, path) -> tuple[Path, Path]:
    """Write ``block.z`` as TSV plus a JSON sidecar with its metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = "\t".join(f"z{c + 1}" for c in range(block.m))
    np.savetxt(path, block.z, delimiter="\t", header=header, comments="", fmt="%.17g")
    side = path.with_suffix(path.suffix + ".json")
    meta = {
        "method": block.method.value,
        "pair": list(block.pair),
        "u": None if block.u is None else block.u.tolist(),
        "q": block.q,
        "degenerate": block.degenerate,
    }
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path, side
