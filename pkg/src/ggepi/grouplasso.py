"""Group lasso over gene main-effect groups and gene-pair interaction groups.

The solver minimizes::

    1/(2n) ||y_c - X_c b||^2 + lam * sum_g w_g ||b_g||_2

with ``y_c`` and ``X_c`` centered (the intercept is unpenalized). Each group
block is solved exactly during block coordinate descent, using the
eigendecomposition of the block's Gram matrix.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .genotype import GeneIndex, GenotypeMatrix, standardize_columns
from .interactions import InteractionDesign

logger = logging.getLogger(__name__)

SELECT_TOL = 1e-8


class ConvergenceError(RuntimeError):
    def __init__(self, message, duality_gap=None, sweeps=None):
        super().__init__(message)
        self.duality_gap = duality_gap
        self.sweeps = sweeps


@dataclass(frozen=True)
class Group:
    group_id: str
    kind: str  # "main" or "interaction"
    columns: tuple[int, ...]
    weight: float

    @property
    def size(self) -> int:
        return len(self.columns)


@dataclass(frozen=True)
class GroupedDesign:
    design: np.ndarray
    groups: tuple[Group, ...]
    column_ids: tuple[str, ...] = ()

    def __post_init__(self):
        x = np.asarray(self.design, dtype=float)
        if x.ndim != 2:
            raise ValueError("design must be 2-dimensional")
        k = x.shape[1]
        cols = np.sort(np.concatenate([np.asarray(g.columns, dtype=int) for g in self.groups])) if self.groups else np.array([], int)
        if not np.array_equal(cols, np.arange(k)):
            raise ValueError("group column sets must partition the design columns")
        for g in self.groups:
            if not g.weight > 0:
                raise ValueError(f"group {g.group_id!r} needs a positive weight")
        if len({g.group_id for g in self.groups}) != len(self.groups):
            raise ValueError("group ids must be unique")
        x = np.array(x, copy=True)
        x.flags.writeable = False
        object.__setattr__(self, "design", x)
        object.__setattr__(self, "groups", tuple(self.groups))
        ids = tuple(self.column_ids) if self.column_ids else tuple(f"x{j}" for j in range(k))
        object.__setattr__(self, "column_ids", ids)

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def k(self) -> int:
        return self.design.shape[1]

    def group(self, group_id: str) -> Group:
        for g in self.groups:
            if g.group_id == group_id:
                return g
        raise KeyError(group_id)

    def subset_rows(self, rows) -> "GroupedDesign":
        return GroupedDesign(self.design[np.asarray(rows)], self.groups, self.column_ids)

    def subset_groups(self, group_ids) -> "GroupedDesign":
        """Design restricted to ``group_ids`` (kept in design order)."""
        keep = set(group_ids)
        groups, cols, pos = [], [], 0
        for g in self.groups:
            if g.group_id in keep:
                groups.append(Group(g.group_id, g.kind, tuple(range(pos, pos + g.size)), g.weight))
                cols.extend(g.columns)
                pos += g.size
        return GroupedDesign(self.design[:, cols], tuple(groups), tuple(self.column_ids[j] for j in cols))


@dataclass
class FitResult:
    coefficients: np.ndarray
    intercept: float
    lam: float
    selected_groups: frozenset
    cv_path: list = field(default_factory=list)
    sweeps: int = 0
    objective_history: np.ndarray | None = None

    def to_dict(self, design: GroupedDesign) -> dict:
        coefs = {
            g.group_id: {design.column_ids[j]: float(self.coefficients[j]) for j in g.columns}
            for g in design.groups
        }
        return {
            "lambda": float(self.lam),
            "intercept": float(self.intercept),
            "coefficients": coefs,
            "selected_groups": sorted(self.selected_groups),
            "cv_path": [{"lambda": float(l), "cv_error": float(m), "se": float(s)} for l, m, s in self.cv_path],
        }


def interaction_weight_literal(p_r: int, p_s: int) -> float:
    return float(np.sqrt(p_r * p_s))


def build_grouped_design(
    g: GenotypeMatrix,
    idx: GeneIndex,
    interactions: InteractionDesign | None,
    standardize: bool = True,
    interaction_weight: str = "size",
) -> GroupedDesign:
    """Assemble ``[X | Z]`` with one group per gene and one per usable gene pair.

    ``interaction_weight="size"`` uses sqrt(number of constructed columns);
    ``"literal"`` uses sqrt(p_r * p_s) from the SNP counts of the pair.
    """
    blocks, groups, ids, pos = [], [], [], 0
    for gene in idx:
        x = g.values[:, gene.columns].astype(float)
        names = list(g.snp_ids[gene.columns])
        if standardize:
            sd = standardize_columns(x)
            if sd.dropped:
                logger.warning("gene %s: %d constant SNP column(s) left out", gene.gene_id, len(sd.dropped))
            x = sd.columns
            names = [names[j] for j in sd.kept]
        if x.shape[1] == 0:
            logger.warning("gene %s has no usable SNP column; main-effect group omitted", gene.gene_id)
            continue
        m = x.shape[1]
        blocks.append(x)
        groups.append(Group(gene.gene_id, "main", tuple(range(pos, pos + m)), float(np.sqrt(m))))
        ids.extend(names)
        pos += m
    if interactions is not None:
        size_of = {gene.gene_id: gene.p_g for gene in idx}
        for blk in interactions.usable:
            m = blk.m
            if interaction_weight == "literal":
                w = interaction_weight_literal(size_of[blk.pair[0]], size_of[blk.pair[1]])
            elif interaction_weight == "size":
                w = float(np.sqrt(m))
            else:
                raise ValueError("interaction_weight must be 'size' or 'literal'")
            blocks.append(blk.z)
            groups.append(Group(blk.group_id, "interaction", tuple(range(pos, pos + m)), w))
            ids.extend(f"{blk.group_id}:{c + 1}" for c in range(m))
            pos += m
    design = np.column_stack(blocks) if blocks else np.zeros((g.n, 0))
    return GroupedDesign(design, tuple(groups), tuple(ids))


# --------------------------------------------------------------------------
# numerical kernel


@njit(cache=True)
def _block_solve(b, V, d, m, thr):
    """argmin 0.5 x'Hx - b'x + thr ||x||, H = V diag(d) V' (m x m leading part)."""
    nb = 0.0
    for i in range(m):
        nb += b[i] * b[i]
    nb = np.sqrt(nb)
    out = np.zeros(m)
    if nb <= thr:
        return out
    bt = np.zeros(m)
    dmax = 0.0
    for i in range(m):
        acc = 0.0
        for j in range(m):
            acc += V[j, i] * b[j]
        bt[i] = acc
        if d[i] > dmax:
            dmax = d[i]
    nu = 0.0
    if thr > 0.0:
        lo = 0.0
        hi = thr * dmax / (nb - thr) * (1.0 + 1e-12) + 1e-300
        nu = hi
        t2 = thr * thr
        for _ in range(200):
            h = 0.0
            dh = 0.0
            for i in range(m):
                den = d[i] + nu
                r = nu / den
                h += bt[i] * bt[i] * r * r
                dh += 2.0 * bt[i] * bt[i] * nu * d[i] / (den * den * den)
            f = h - t2
            if f > 0.0:
                hi = nu
            else:
                lo = nu
            step_ok = False
            if dh > 0.0:
                cand = nu - f / dh
                if lo < cand < hi:
                    step_ok = True
                    nxt = cand
            if not step_ok:
                nxt = 0.5 * (lo + hi)
            if abs(nxt - nu) <= 1e-15 * max(nu, 1e-300) or hi - lo <= 1e-15 * hi:
                nu = nxt
                break
            nu = nxt
    tiny = 1e-12 * dmax
    for i in range(m):
        den = d[i] + nu
        if den > tiny:
            bt[i] = bt[i] / den
        else:
            bt[i] = 0.0
    for j in range(m):
        acc = 0.0
        for i in range(m):
            acc += V[j, i] * bt[i]
        out[j] = acc
    return out


@njit(cache=True)
def _objective(G, c, yy, beta, Gb, starts, sizes, weights, lam):
    quad = 0.0
    lin = 0.0
    for j in range(beta.shape[0]):
        quad += beta[j] * Gb[j]
        lin += c[j] * beta[j]
    pen = 0.0
    for gi in range(starts.shape[0]):
        s = starts[gi]
        acc = 0.0
        for j in range(s, s + sizes[gi]):
            acc += beta[j] * beta[j]
        pen += weights[gi] * np.sqrt(acc)
    return 0.5 * (yy - 2.0 * lin + quad) + lam * pen


@njit(cache=True)
def _bcd(G, c, yy, starts, sizes, weights, V, D, lam, beta, tol, max_iter, obj_hist):
    k = G.shape[0]
    ng = starts.shape[0]
    Gb = np.zeros(k)
    active = np.zeros(ng, dtype=np.bool_)
    full = True
    it = 0
    converged = False
    b = np.zeros(k)
    while it < max_iter:
        if full:
            for i in range(k):
                acc = 0.0
                for j in range(k):
                    acc += G[i, j] * beta[j]
                Gb[i] = acc
        maxdelta = 0.0
        for gi in range(ng):
            if not full and not active[gi]:
                continue
            s = starts[gi]
            m = sizes[gi]
            for i in range(m):
                acc = c[s + i] - Gb[s + i]
                for j in range(m):
                    acc += G[s + i, s + j] * beta[s + j]
                b[i] = acc
            new = _block_solve(b, V[gi], D[gi], m, lam * weights[gi])
            dm = 0.0
            nz = False
            for i in range(m):
                delta = new[i] - beta[s + i]
                if abs(delta) > dm:
                    dm = abs(delta)
                if new[i] != 0.0:
                    nz = True
            if dm > 0.0:
                for i in range(m):
                    delta = new[i] - beta[s + i]
                    if delta != 0.0:
                        for r in range(k):
                            Gb[r] += G[r, s + i] * delta
                        beta[s + i] = new[i]
            if dm > maxdelta:
                maxdelta = dm
            active[gi] = nz
        obj_hist[it] = _objective(G, c, yy, beta, Gb, starts, sizes, weights, lam)
        it += 1
        if maxdelta < tol:
            if full:
                converged = True
                break
            full = True
        else:
            full = False
    return it, converged


@njit(cache=True)
def _prox(v, starts, sizes, weights, thr, out):
    for gi in range(starts.shape[0]):
        s = starts[gi]
        m = sizes[gi]
        nv = 0.0
        for j in range(s, s + m):
            nv += v[j] * v[j]
        nv = np.sqrt(nv)
        t = thr * weights[gi]
        if nv <= t:
            for j in range(s, s + m):
                out[j] = 0.0
        else:
            f = 1.0 - t / nv
            for j in range(s, s + m):
                out[j] = v[j] * f


@njit(cache=True)
def _matvec(G, x, out):
    k = G.shape[0]
    for i in range(k):
        acc = 0.0
        for j in range(k):
            acc += G[i, j] * x[j]
        out[i] = acc


@njit(cache=True)
def _mfista(G, c, yy, starts, sizes, weights, lam, beta, L, n_iter, obj_hist):
    """Monotone accelerated proximal gradient; used when block descent stalls
    on exactly collinear groups. Updates ``beta`` in place."""
    k = G.shape[0]
    x = beta.copy()
    x_old = beta.copy()
    yv = beta.copy()
    z = np.zeros(k)
    g = np.zeros(k)
    Gx = np.zeros(k)
    tk = 1.0
    _matvec(G, x, Gx)
    fx = _objective(G, c, yy, x, Gx, starts, sizes, weights, lam)
    it = 0
    while it < n_iter:
        _matvec(G, yv, g)
        for j in range(k):
            g[j] = yv[j] - (g[j] - c[j]) / L
        _prox(g, starts, sizes, weights, lam / L, z)
        _matvec(G, z, Gx)
        fz = _objective(G, c, yy, z, Gx, starts, sizes, weights, lam)
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        for j in range(k):
            x_old[j] = x[j]
        if fz <= fx:
            for j in range(k):
                x[j] = z[j]
            fx = fz
        for j in range(k):
            yv[j] = x[j] + (tk / tn) * (z[j] - x[j]) + ((tk - 1.0) / tn) * (x[j] - x_old[j])
        tk = tn
        obj_hist[it] = fx
        it += 1
    for j in range(k):
        beta[j] = x[j]
    return it


class _Problem:
    """Centered Gram-form data for one design/row subset, groups contiguous."""

    def __init__(self, design: GroupedDesign, y: np.ndarray, rows=None):
        x = design.design if rows is None else design.design[rows]
        yv = np.asarray(y, dtype=float)
        if rows is not None:
            yv = yv[rows]
        if x.shape[0] != yv.shape[0]:
            raise ValueError("design and phenotype row counts differ")
        if not np.isfinite(yv).all():
            raise ValueError("phenotype has non-finite entries")
        self.n = x.shape[0]
        order = np.concatenate([np.asarray(g.columns, dtype=np.int64) for g in design.groups]) if design.groups else np.zeros(0, np.int64)
        self.order = order
        x = x[:, order]
        self.xmean = x.mean(axis=0)
        self.ymean = float(yv.mean())
        xc = x - self.xmean
        yc = yv - self.ymean
        self.xc = xc
        self.yc = yc
        self.G = np.ascontiguousarray(xc.T @ xc / self.n)
        self.c = xc.T @ yc / self.n
        self.yy = float(yc @ yc / self.n)
        sizes = np.array([g.size for g in design.groups], dtype=np.int64)
        self.sizes = sizes
        self.starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64) if sizes.size else np.zeros(0, np.int64)
        self.weights = np.array([g.weight for g in design.groups], dtype=float)
        self.L = None
        mmax = int(sizes.max()) if sizes.size else 1
        ng = sizes.size
        self.V = np.zeros((ng, mmax, mmax))
        self.D = np.zeros((ng, mmax))
        for gi in range(ng):
            s, m = self.starts[gi], sizes[gi]
            d, v = np.linalg.eigh(self.G[s:s + m, s:s + m])
            self.D[gi, :m] = np.maximum(d, 0.0)
            self.V[gi, :m, :m] = v

    def lambda_max(self) -> float:
        if self.sizes.size == 0:
            return 0.0
        vals = [np.linalg.norm(self.c[s:s + m]) / w for s, m, w in zip(self.starts, self.sizes, self.weights)]
        return float(max(vals))

    def solve(self, lam, beta0=None, tol=1e-7, max_iter=10_000, bcd_chunk=100, fista_chunk=1500):
        """Block coordinate descent, interleaved with accelerated proximal
        gradient chunks whenever a chunk of sweeps ends unconverged. Only a
        full block sweep moving no coefficient by ``tol`` or more ends the run.
        """
        k = self.G.shape[0]
        beta = np.zeros(k) if beta0 is None else np.array(beta0, dtype=float)
        hist = np.zeros(max_iter)
        if k == 0:
            return beta, 0, True, hist[:0]
        used, ok = 0, False
        while used < max_iter:
            it, ok = _bcd(self.G, self.c, self.yy, self.starts, self.sizes, self.weights,
                          self.V, self.D, float(lam), beta, float(tol), int(min(bcd_chunk, max_iter - used)),
                          hist[used:])
            used += it
            if ok or used >= max_iter:
                break
            if self._newton_polish(float(lam), beta):
                continue
            if self.L is None:
                self.L = float(np.linalg.eigvalsh(self.G)[-1]) * (1 + 1e-10) + 1e-300
            used += _mfista(self.G, self.c, self.yy, self.starts, self.sizes, self.weights, float(lam), beta,
                            self.L, int(min(fista_chunk, max_iter - used)), hist[used:])
        return beta, used, ok, hist[:used]

    def _newton_polish(self, lam, beta, max_steps=50) -> bool:
        """Damped Newton on the current active groups, where the objective is
        smooth. Rank-deficient designs (exactly collinear groups) make block
        descent crawl along near-flat directions; a few Newton steps land on
        the optimum and the next sweep then confirms convergence. Returns
        False, leaving ``beta`` untouched, when no improvement was found.
        """
        ends = self.starts + self.sizes
        act = [gi for gi in range(self.sizes.size) if np.any(beta[self.starts[gi]:ends[gi]] != 0.0)]
        if not act:
            return False
        idx = np.concatenate([np.arange(self.starts[g], ends[g]) for g in act])
        G = self.G[np.ix_(idx, idx)]
        c = self.c[idx]
        sizes = self.sizes[act]
        w = lam * self.weights[act]
        seg = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        # inactive coordinates stay at zero, so the objective restricted to
        # the active block differs from the full one by a constant
        def norms(v):
            return np.sqrt(np.add.reduceat(v * v, seg))

        def f_of(v):
            return 0.5 * v @ (G @ v) - c @ v + w @ norms(v)

        b = beta[idx].copy()
        f0 = f = f_of(b)
        for _ in range(max_steps):
            nb = norms(b)
            unit = b / np.repeat(nb, sizes)
            grad = G @ b - c + np.repeat(w, sizes) * unit
            if np.max(np.abs(grad)) < 1e-13:
                break
            H = G.copy()
            for k, (s, m) in enumerate(zip(seg, sizes)):
                u = unit[s:s + m]
                H[s:s + m, s:s + m] += w[k] * (np.eye(m) - np.outer(u, u)) / nb[k]
            step = np.linalg.lstsq(H, -grad, rcond=None)[0]
            t, moved = 1.0, False
            while t > 1e-6:
                cand = b + t * step
                if np.all(norms(cand) > 0):
                    fc = f_of(cand)
                    if fc <= f:
                        b, f, moved = cand, fc, True
                        break
                t *= 0.5
            if not moved:
                break
        if f < f0:
            beta[idx] = b
            return True
        return False

    def to_design_order(self, beta_internal):
        out = np.zeros_like(beta_internal)
        out[self.order] = beta_internal
        return out

    def duality_gap(self, beta, lam) -> float:
        r = self.yc - self.xc @ beta
        primal = 0.5 * (r @ r) / self.n
        scale = 1.0
        for s, m, w in zip(self.starts, self.sizes, self.weights):
            primal += lam * w * np.linalg.norm(beta[s:s + m])
            nrm = np.linalg.norm(self.xc[:, s:s + m].T @ r) / (self.n * lam * w) if lam > 0 else 0.0
            scale = max(scale, nrm)
        rho = r / scale
        dual = 0.5 * ((self.yc @ self.yc) - np.sum((self.yc - rho) ** 2)) / self.n
        return float(primal - dual)

    def result(self, beta, lam, sweeps, hist) -> FitResult:
        coef = self.to_design_order(beta)
        selected = set()
        for gi, s in enumerate(self.starts):
            if np.linalg.norm(beta[s:s + self.sizes[gi]]) > SELECT_TOL:
                selected.add(gi)
        intercept = self.ymean - float(self.xmean @ beta)
        return FitResult(coef, intercept, float(lam), frozenset(selected), [], sweeps, hist)


def _named(result: FitResult, design: GroupedDesign) -> FitResult:
    result.selected_groups = frozenset(design.groups[i].group_id for i in result.selected_groups)
    return result


def lambda_max(design: GroupedDesign, y) -> float:
    """Smallest penalty at which every group is zero."""
    yv = np.asarray(getattr(y, "y", y), dtype=float)
    return _Problem(design, yv).lambda_max()


def fit(design: GroupedDesign, y, lam: float, tol: float = 1e-7, max_iter: int = 10_000, beta0=None) -> FitResult:
    """Fit the group lasso at a fixed penalty.

    Raises
    ------
    ConvergenceError
        When ``max_iter`` sweeps pass without a full sweep moving every
        coefficient by less than ``tol``.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    yv = np.asarray(getattr(y, "y", y), dtype=float)
    prob = _Problem(design, yv)
    b0 = None if beta0 is None else np.asarray(beta0, dtype=float)[prob.order]
    beta, it, ok, hist = prob.solve(lam, b0, tol, max_iter)
    if not ok:
        gap = prob.duality_gap(beta, lam)
        raise ConvergenceError(f"group lasso did not converge in {max_iter} sweeps (duality gap {gap:.3e})", gap, it)
    return _named(prob.result(beta, lam, it, hist), design)


def kkt_violation(design: GroupedDesign, y, result: FitResult) -> float:
    """Largest violation of the group lasso optimality conditions.

    Zero groups need ``||X_g' r|| / n <= lam w_g``; nonzero groups need
    ``X_g' r / n = lam w_g b_g / ||b_g||``.
    """
    yv = np.asarray(getattr(y, "y", y), dtype=float)
    x = design.design - design.design.mean(axis=0)
    r = (yv - yv.mean()) - x @ result.coefficients
    n = x.shape[0]
    worst = 0.0
    for g in design.groups:
        cols = list(g.columns)
        grad = x[:, cols].T @ r / n
        b = result.coefficients[cols]
        nb = np.linalg.norm(b)
        if nb > SELECT_TOL:
            v = np.linalg.norm(grad - result.lam * g.weight * b / nb)
        else:
            v = max(0.0, np.linalg.norm(grad) - result.lam * g.weight)
        worst = max(worst, v)
    return float(worst)


def objective(design: GroupedDesign, y, coefficients, lam: float) -> float:
    yv = np.asarray(getattr(y, "y", y), dtype=float)
    x = design.design - design.design.mean(axis=0)
    r = (yv - yv.mean()) - x @ coefficients
    pen = sum(g.weight * np.linalg.norm(coefficients[list(g.columns)]) for g in design.groups)
    return float(0.5 * (r @ r) / x.shape[0] + lam * pen)


def lambda_grid(lmax: float, grid_size: int = 100, min_ratio: float = 0.01) -> np.ndarray:
    if grid_size < 1:
        raise ValueError("grid_size must be >= 1")
    if grid_size == 1:
        return np.array([lmax])
    return lmax * np.logspace(0.0, np.log10(min_ratio), grid_size)


def fold_ids(n: int, folds: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    ids = np.arange(n) % folds
    rng.shuffle(ids)
    return ids


def cv_select_lambda(
    design: GroupedDesign,
    y,
    folds: int = 10,
    grid_size: int = 100,
    seed=0,
    min_ratio: float = 0.01,
    tol: float = 1e-7,
    max_iter: int = 10_000,
    rule: str = "min",
) -> FitResult:
    """Pick lambda on a log grid by K-fold CV, then refit on all rows.

    ``rule="min"`` takes the grid point with the smallest mean held-out MSE;
    ``rule="1se"`` takes the largest lambda whose mean error is within one
    standard error of that minimum.
    """
    if rule not in ("min", "1se"):
        raise ValueError("rule must be 'min' or '1se'")
    yv = np.asarray(getattr(y, "y", y), dtype=float)
    n = design.n
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < 2 * folds:
        raise ValueError(f"n={n} is too small for {folds} folds")
    full = _Problem(design, yv)
    grid = lambda_grid(full.lambda_max(), grid_size, min_ratio)
    fid = fold_ids(n, folds, seed)
    errors = np.full((folds, grid.size), np.nan)
    for f in range(folds):
        train, test = np.flatnonzero(fid != f), np.flatnonzero(fid == f)
        prob = _Problem(design, yv, train)
        xt = design.design[test][:, prob.order]
        beta = np.zeros(prob.G.shape[0])
        for li, lam in enumerate(grid):
            beta_try, _, ok, _ = prob.solve(lam, beta, tol, max_iter)
            if not ok:
                logger.warning("fold %d, lambda %.4g: no convergence", f, lam)
                continue
            beta = beta_try
            pred = prob.ymean + (xt - prob.xmean) @ beta
            errors[f, li] = np.mean((yv[test] - pred) ** 2)
    ok_cols = ~np.all(np.isnan(errors), axis=0)
    if not ok_cols.any():
        raise ConvergenceError("every grid point failed on every fold")
    mean = np.nanmean(np.where(ok_cols, errors, 0.0), axis=0)
    mean[~ok_cols] = np.inf
    counts = np.sum(~np.isnan(errors), axis=0)
    se = np.where(counts > 1, np.nanstd(np.where(ok_cols, errors, 0.0), axis=0, ddof=1) / np.sqrt(np.maximum(counts, 1)), np.nan)
    best = int(np.argmin(mean))
    if rule == "1se" and np.isfinite(se[best]):
        best = int(np.flatnonzero(mean <= mean[best] + se[best])[0])
    beta = np.zeros(full.G.shape[0])
    for lam in grid[:best + 1]:
        beta, it, ok, hist = full.solve(lam, beta, tol, max_iter)
        if not ok:
            raise ConvergenceError(f"refit at lambda {lam:.4g} did not converge", full.duality_gap(beta, lam), it)
    res = _named(full.result(beta, grid[best], it, hist), design)
    res.cv_path = [(float(l), float(m), float(s)) for l, m, s in zip(grid, mean, se)]
    return res
