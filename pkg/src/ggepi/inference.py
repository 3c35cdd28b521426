"""Screen-and-clean inference for grouped effects.

The rows are split in two halves. The group lasso (lambda by CV) screens
candidate groups on the first half. On the second half a ridge regression
restricted to the candidates, with group ``g`` penalized in proportion to
``w_g^2``, gives for each candidate the drop in residual sum of squares when
the group is added to the others. Its null distribution comes from permuting
the rows of the group's own columns, jointly. Benjamini-Hochberg adjustment
runs over the candidates only; unscreened groups report ``p = 1``.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .genotype import GeneIndex, GenotypeMatrix, Phenotype
from .grouplasso import FitResult, GroupedDesign, build_grouped_design, cv_select_lambda
from .interactions import Method, build_interaction_design

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitPlan:
    screen_rows: tuple[int, ...]
    clean_rows: tuple[int, ...]
    seed: int

    def __post_init__(self):
        a, b = set(self.screen_rows), set(self.clean_rows)
        if a & b:
            raise ValueError("screen and clean rows overlap")
        if a | b != set(range(len(a) + len(b))):
            raise ValueError("split does not cover every row")
        if abs(len(a) - len(b)) > 1:
            raise ValueError("split halves differ by more than one row")


def split(n: int, seed: int) -> SplitPlan:
    """Uniformly random balanced split of ``range(n)``; the screening half gets
    ``n // 2`` rows."""
    if n < 4:
        raise ValueError("need at least 4 rows to split")
    perm = np.random.default_rng(seed).permutation(n)
    h = n // 2
    return SplitPlan(tuple(sorted(int(i) for i in perm[:h])), tuple(sorted(int(i) for i in perm[h:])), int(seed))


def screen_fit(design: GroupedDesign, y, plan: SplitPlan, folds: int = 10, grid_size: int = 100,
               seed: int = 0, rule: str = "min", min_ratio: float = 0.01) -> FitResult:
    yv = np.asarray(getattr(y, "y", y), dtype=float)
    rows = np.asarray(plan.screen_rows)
    return cv_select_lambda(design.subset_rows(rows), yv[rows], folds=folds, grid_size=grid_size,
                            seed=seed, rule=rule, min_ratio=min_ratio)


def screen(design: GroupedDesign, y, plan: SplitPlan, **kw) -> frozenset:
    """Group ids kept by the CV-tuned group lasso on the screening half."""
    return screen_fit(design, y, plan, **kw).selected_groups


def bh_adjust(p) -> np.ndarray:
    """Benjamini-Hochberg adjusted p-values (step-up, monotone, capped at 1)."""
    p = np.asarray(p, dtype=float)
    m = p.size
    if m == 0:
        return p.copy()
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    adj = np.minimum.accumulate(ranked[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.minimum(adj, 1.0)
    return out


def ridge_gcv(x: np.ndarray, y: np.ndarray, pen: np.ndarray, n_grid: int = 81):
    """Scale ``alpha`` of the penalty ``alpha * sum pen_j b_j^2`` by generalized CV.

    ``x`` and ``y`` must be centered. Returns ``(alpha, gcv_curve)``.
    """
    n = x.shape[0]
    xt = x / np.sqrt(pen)
    u, s, _ = np.linalg.svd(xt, full_matrices=False)
    s2 = s ** 2
    if s2.size == 0 or s2[0] <= 0:
        return 1.0, []
    uy = u.T @ y
    resid0 = y @ y - uy @ uy
    alphas = s2[0] * np.logspace(-6, 2, n_grid)
    best, curve = None, []
    for a in alphas:
        shrink = s2 / (s2 + a)
        rss = resid0 + np.sum(((1 - shrink) * uy) ** 2)
        df = shrink.sum()
        g = n * rss / max(n - df, 1e-12) ** 2
        curve.append((float(a), float(g)))
        if best is None or g < best[1]:
            best = (float(a), g)
    return best[0], curve


def _ridge_rss(xtx: np.ndarray, xty: np.ndarray, yy: float, pen: np.ndarray) -> float:
    m = xtx + np.diag(pen)
    b = np.linalg.solve(m, xty)
    return float(yy - b @ xty - b @ (pen * b))


def _perm_rss(a, b, y, ata, aty, btb, pen_a, pen_b, yy, perms):
    """Full-model ridge RSS for each row permutation of the tested block ``b``."""
    P = perms.shape[0]
    ka, kb = a.shape[1], b.shape[1]
    bp = b[perms]                                   # P x n x kb
    atb = np.einsum("ni,pnj->pij", a, bp)           # P x ka x kb
    bty = np.einsum("pnj,n->pj", bp, y)             # P x kb
    k = ka + kb
    M = np.zeros((P, k, k))
    M[:, :ka, :ka] = ata + np.diag(pen_a)
    M[:, :ka, ka:] = atb
    M[:, ka:, :ka] = np.transpose(atb, (0, 2, 1))
    M[:, ka:, ka:] = btb + np.diag(pen_b)
    rhs = np.concatenate([np.broadcast_to(aty, (P, ka)), bty], axis=1)
    beta = np.linalg.solve(M, rhs[..., None])[..., 0]
    pen = np.concatenate([pen_a, pen_b])
    return yy - np.einsum("pk,pk->p", beta, rhs) - np.einsum("pk,k,pk->p", beta, pen, beta)


@dataclass(frozen=True)
class ReportEntry:
    group_id: str
    kind: str
    statistic: float
    p_value: float
    fdr_adjusted_p: float
    significant: bool
    selected: bool


@dataclass
class InferenceReport:
    entries: list[ReportEntry]
    alpha: float
    permutations: int
    plan: SplitPlan
    provenance: dict = field(default_factory=dict)

    def entry(self, group_id: str) -> ReportEntry:
        for e in self.entries:
            if e.group_id == group_id:
                return e
        raise KeyError(group_id)

    @property
    def significant(self) -> list[str]:
        return [e.group_id for e in self.entries if e.significant]

    def to_dict(self, include_rows: bool = True) -> dict:
        d = {
            "alpha": self.alpha,
            "permutations": self.permutations,
            "entries": [asdict(e) for e in self.entries],
            "provenance": self.provenance,
            "split": {"seed": self.plan.seed, "n_screen": len(self.plan.screen_rows),
                      "n_clean": len(self.plan.clean_rows)},
        }
        if include_rows:
            d["split"]["screen_rows"] = list(self.plan.screen_rows)
            d["split"]["clean_rows"] = list(self.plan.clean_rows)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_tsv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter="\t", lineterminator="\n")
        w.writerow(["group_id", "kind", "selected", "statistic", "p_value", "fdr_adjusted_p", "significant"])
        for e in self.entries:
            w.writerow([e.group_id, e.kind, int(e.selected), repr(e.statistic), repr(e.p_value),
                        repr(e.fdr_adjusted_p), int(e.significant)])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d: dict) -> "InferenceReport":
        sp = d["split"]
        plan = SplitPlan(tuple(sp["screen_rows"]), tuple(sp["clean_rows"]), sp["seed"])
        return cls([ReportEntry(**e) for e in d["entries"]], d["alpha"], d["permutations"], plan,
                   d.get("provenance", {}))


def _seed_for(seed: int, position: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(position)]))


def clean(design: GroupedDesign, y, plan: SplitPlan, selected, permutations: int = 999,
          alpha: float = 0.05, seed: int = 0) -> InferenceReport:
    """Permutation p-values for the screened groups on the held-out half.

    Each tested group draws its permutations from its own stream seeded by
    ``(seed, group position)`` so results do not depend on evaluation order.
    """
    if permutations < 99:
        raise ValueError("need at least 99 permutations")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    yv = np.asarray(getattr(y, "y", y), dtype=float)
    selected = set(selected)
    unknown = selected - {g.group_id for g in design.groups}
    if unknown:
        raise KeyError(f"unknown group(s): {sorted(unknown)}")
    rows = np.asarray(plan.clean_rows)
    x = design.design[rows]
    yc = yv[rows] - yv[rows].mean()
    xc = x - x.mean(axis=0)
    n = xc.shape[0]

    # columns and groups usable on this half
    tested: list[tuple[int, object, np.ndarray]] = []
    stats: dict[str, float] = {}
    pvals: dict[str, float] = {}
    for pos, g in enumerate(design.groups):
        if g.group_id not in selected:
            continue
        cols = np.asarray(g.columns)
        sd = xc[:, cols].std(axis=0, ddof=1)
        keep = cols[sd > 1e-12]
        if keep.size == 0:
            logger.warning("group %s is constant on the clean half; p set to 1", g.group_id)
            stats[g.group_id], pvals[g.group_id] = 0.0, 1.0
            continue
        tested.append((pos, g, keep))

    ridge_alpha = None
    if tested:
        all_cols = np.concatenate([k for _, _, k in tested])
        pen_unit = np.concatenate([np.full(k.size, g.weight ** 2) for _, g, k in tested])
        ridge_alpha, _ = ridge_gcv(xc[:, all_cols], yc, pen_unit)
        pen_all = ridge_alpha * pen_unit
        xtx = xc[:, all_cols].T @ xc[:, all_cols]
        xty = xc[:, all_cols].T @ yc
        yy = float(yc @ yc)
        rss_full = _ridge_rss(xtx, xty, yy, pen_all)
        offs = np.concatenate([[0], np.cumsum([k.size for _, _, k in tested])])
        for i, (pos, g, keep) in enumerate(tested):
            inside = np.zeros(all_cols.size, bool)
            inside[offs[i]:offs[i + 1]] = True
            ia, ib = np.flatnonzero(~inside), np.flatnonzero(inside)
            rss_red = _ridge_rss(xtx[np.ix_(ia, ia)], xty[ia], yy, pen_all[ia])
            t_obs = rss_red - rss_full
            a, b = xc[:, all_cols[ia]], xc[:, all_cols[ib]]
            rng = _seed_for(seed, pos)
            perms = np.array([rng.permutation(n) for _ in range(permutations)])
            t_null = np.empty(permutations)
            chunk = max(1, int(2e6 // max(1, n * b.shape[1])))
            for c0 in range(0, permutations, chunk):
                sl = slice(c0, c0 + chunk)
                t_null[sl] = rss_red - _perm_rss(a, b, yc, xtx[np.ix_(ia, ia)], xty[ia], xtx[np.ix_(ib, ib)],
                                                 pen_all[ia], pen_all[ib], yy, perms[sl])
            exceed = int(np.sum(t_null >= t_obs - 1e-10 * abs(t_obs)))
            stats[g.group_id] = float(t_obs)
            pvals[g.group_id] = (1 + exceed) / (permutations + 1)

    cand = [g.group_id for g in design.groups if g.group_id in selected]
    adj = dict(zip(cand, bh_adjust([pvals[c] for c in cand]))) if cand else {}
    entries = []
    for g in design.groups:
        if g.group_id in selected:
            p = pvals[g.group_id]
            a = float(adj[g.group_id])
            entries.append(ReportEntry(g.group_id, g.kind, stats[g.group_id], float(p), a, bool(a <= alpha), True))
        else:
            entries.append(ReportEntry(g.group_id, g.kind, 0.0, 1.0, 1.0, False, False))
    prov = {"ridge_alpha": ridge_alpha, "permutation_seed": int(seed)}
    return InferenceReport(entries, float(alpha), int(permutations), plan, prov)


@dataclass(frozen=True)
class DetectConfig:
    """Knobs of the end-to-end detection pipeline.

    ``weights_rows`` chooses the rows used to fit phenotype-driven
    construction weights (G-GEE direction, PLS weights): ``"screen"`` keeps the
    clean half untouched by the phenotype before testing, ``"all"`` uses every
    row.
    """

    q: int = 1
    products: str = "raw"
    interaction_weight: str = "size"
    standardize: bool = True
    folds: int = 10
    grid_size: int = 100
    min_ratio: float = 0.01
    cv_rule: str = "min"
    permutations: int = 999
    alpha: float = 0.05
    seed: int = 0
    weights_rows: str = "screen"

    def replace(self, **kw) -> "DetectConfig":
        return replace(self, **kw)


def derive_seeds(seed: int) -> tuple[int, int, int]:
    """Independent integer seeds for (split, CV folds, permutations)."""
    a, b, c = np.random.SeedSequence(int(seed)).generate_state(3)
    return int(a), int(b), int(c)


def detect(genotypes: GenotypeMatrix, index: GeneIndex, y, method="ggee", config: DetectConfig | None = None,
           design_out: list | None = None) -> InferenceReport:
    """Build interactions, split, screen and clean. Deterministic given ``config.seed``."""
    cfg = config or DetectConfig()
    method = Method.parse(method)
    pheno = y if isinstance(y, Phenotype) else Phenotype(np.asarray(y, dtype=float))
    if pheno.n != genotypes.n:
        raise ValueError("phenotype length differs from genotype rows")
    pheno.check_variance()
    s_split, s_cv, s_perm = derive_seeds(cfg.seed)
    plan = split(genotypes.n, s_split)
    if cfg.weights_rows not in ("screen", "all"):
        raise ValueError("weights_rows must be 'screen' or 'all'")
    rows = np.asarray(plan.screen_rows) if cfg.weights_rows == "screen" else None
    inter = build_interaction_design(genotypes, index, pheno, method, cfg.q, cfg.products, rows=rows)
    design = build_grouped_design(genotypes, index, inter, cfg.standardize, cfg.interaction_weight)
    if design_out is not None:
        design_out.append(design)
    sfit = screen_fit(design, pheno, plan, folds=cfg.folds, grid_size=cfg.grid_size, seed=s_cv,
                      rule=cfg.cv_rule, min_ratio=cfg.min_ratio)
    report = clean(design, pheno, plan, sfit.selected_groups, cfg.permutations, cfg.alpha, s_perm)
    report.provenance.update({
        "method": method.value,
        "q": cfg.q,
        "products": cfg.products,
        "interaction_weight": cfg.interaction_weight,
        "lambda": sfit.lam,
        "cv_rule": cfg.cv_rule,
        "folds": cfg.folds,
        "grid_size": cfg.grid_size,
        "seed": int(cfg.seed),
        "screened": sorted(sfit.selected_groups),
        "degenerate_pairs": [f"{a}x{b}" for a, b in inter.degenerate],
    })
    return report
