"""Power-study harness: replicate jobs, per-replicate persistence, aggregation.

A replicate simulates one dataset for a (setting, model, r2) cell and runs
every requested method on it, so methods are compared on paired data. Each
replicate is written to its own JSON file; tables are always rebuilt from
those files, which makes aggregation re-runnable and independent of the
order in which workers finish.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .inference import DetectConfig, detect
from .interactions import Method
from .simulation import PhenotypeModel, partial_r2, setting_name, simulate, target_pair

log = logging.getLogger(__name__)

MODEL_CODES = {PhenotypeModel.WANG: 0, PhenotypeModel.PCA: 1}
FAIL_FRACTION = 0.10


@dataclass(frozen=True)
class StudyConfig:
    """Grid of cells and replicate count for one power study.

    ``simulation`` holds keyword overrides for the dataset generator (``n``,
    ``G``, ``p_g``, ``rho``, ``coef`` for the simplified study; ``G`` and
    ``coef`` for the realistic one).
    """

    study: str = "simplified"
    settings: tuple[int, ...] = (1, 2, 3, 4, 5)
    models: tuple[str, ...] = ("wang", "pca")
    methods: tuple[str, ...] = ("ggee", "pca", "pls")
    r2_grid: tuple[float, ...] = (0.1, 0.2, 0.4, 0.7)
    iterations: int = 100
    seed: int = 0
    output_dir: str = "power-study"
    detect: DetectConfig = field(default_factory=DetectConfig)
    simulation: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.study not in ("simplified", "realistic"):
            raise ValueError(f"study must be 'simplified' or 'realistic', got {self.study!r}")
        if not self.settings:
            raise ValueError("settings must be nonempty")
        bad = [s for s in self.settings if int(s) not in (1, 2, 3, 4, 5)]
        if bad:
            raise ValueError(f"unknown settings {bad}; expected ids 1..5")
        if not self.models:
            raise ValueError("models must be nonempty")
        for m in self.models:
            PhenotypeModel.parse(m)
        if not self.methods:
            raise ValueError("methods must be nonempty")
        for m in self.methods:
            Method.parse(m)
        if not self.r2_grid or any(not 0.0 < float(r) < 1.0 for r in self.r2_grid):
            raise ValueError("r2_grid values must lie in (0, 1)")
        if int(self.iterations) < 1:
            raise ValueError("iterations must be >= 1")
        if int(self.seed) < 0:
            raise ValueError("seed must be a non-negative integer")

    def cells(self) -> list[tuple[int, str, float]]:
        """(setting, model, r2) triples. Settings without interactions do not
        depend on the phenotype model and run once, under the first model."""
        out = []
        for s in sorted({int(x) for x in self.settings}):
            models = [PhenotypeModel.parse(m).value for m in self.models]
            if s in (4, 5):
                models = models[:1]
            for m in dict.fromkeys(models):
                for r2 in self.r2_grid:
                    out.append((s, m, float(r2)))
        return out

    def method_values(self) -> list[str]:
        return list(dict.fromkeys(Method.parse(m).value for m in self.methods))

    def fingerprint(self) -> str:
        """Hash of everything that changes a replicate's result."""
        d = {"study": self.study, "seed": int(self.seed), "detect": asdict(self.detect.replace(seed=0)),
             "simulation": self.simulation}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["detect"] = asdict(self.detect)
        return d


@dataclass(frozen=True)
class ReplicateJob:
    study: str
    setting: int
    model: str
    r2: float
    rep: int
    seed: int
    methods: tuple[str, ...]
    detect: DetectConfig
    simulation: dict
    fingerprint: str

    @property
    def key(self) -> str:
        return f"s{self.setting}_{self.model}_r{self.r2:g}_rep{self.rep:04d}"


def replicate_seeds(seed: int, setting: int, model: str, r2: float, rep: int) -> tuple[int, int]:
    """(data seed, detection seed), an independent stream per replicate."""
    key = [int(seed), int(setting), MODEL_CODES[PhenotypeModel.parse(model)], int(round(r2 * 1e6)), int(rep)]
    a, b = np.random.SeedSequence(key).generate_state(2)
    return int(a), int(b)


def jobs(cfg: StudyConfig) -> list[ReplicateJob]:
    fp = cfg.fingerprint()
    methods = tuple(cfg.method_values())
    return [
        ReplicateJob(cfg.study, s, m, r2, rep, cfg.seed, methods, cfg.detect, dict(cfg.simulation), fp)
        for s, m, r2 in cfg.cells()
        for rep in range(int(cfg.iterations))
    ]


def positional_labels(index) -> dict[str, str]:
    """Map dataset group ids to position labels ``geneK`` / ``geneKxgeneL``.

    Resampled genes carry corpus ids that change between replicates; the
    heatmaps are indexed by the role a gene plays (its position), as in the
    simplified study where ids and positions coincide.
    """
    ids = index.ids
    lab = {gid: f"gene{k + 1}" for k, gid in enumerate(ids)}
    for r in range(len(ids)):
        for s in range(r + 1, len(ids)):
            lab[f"{ids[r]}x{ids[s]}"] = f"gene{r + 1}xgene{s + 1}"
    return lab


def run_replicate(job: ReplicateJob) -> dict:
    """Simulate one dataset and analyse it with every method.

    Method failures are caught and recorded; a failure to simulate marks all
    methods failed.
    """
    data_seed, detect_seed = replicate_seeds(job.seed, job.setting, job.model, job.r2, job.rep)
    rec = {
        "key": job.key, "study": job.study, "setting": job.setting, "model": job.model,
        "name": setting_name(job.setting, job.model), "r2": job.r2, "rep": job.rep,
        "data_seed": data_seed, "detect_seed": detect_seed, "fingerprint": job.fingerprint, "methods": {},
    }
    r, s = target_pair(job.setting)
    rec["target"] = f"gene{r + 1}xgene{s + 1}"
    try:
        ds = simulate(job.study, job.setting, job.model, job.r2, data_seed, **job.simulation)
        p_i, p_m, undefined = partial_r2(ds.y, ds.genotypes, ds.index, ds.truth)
    except Exception as exc:  # noqa: BLE001 - recorded, counted by the aggregator
        log.warning("replicate %s: simulation failed: %s", job.key, exc)
        for m in job.methods:
            rec["methods"][m] = {"status": "failed", "error": f"simulation: {exc}"}
        return rec
    rec.update({"realized_r2": ds.realized_r2, "p_I": p_i, "p_M": p_m, "p_undefined": undefined,
                "genes": list(ds.index.ids)})
    labels = positional_labels(ds.index)
    for m in job.methods:
        try:
            rep = detect(ds.genotypes, ds.index, ds.y, m, job.detect.replace(seed=detect_seed))
        except Exception as exc:  # noqa: BLE001
            log.warning("replicate %s, method %s failed: %s", job.key, m, exc)
            rec["methods"][m] = {"status": "failed", "error": str(exc)}
            continue
        variables = {labels[e.group_id]: {"significant": bool(e.significant), "p_value": e.p_value,
                                          "fdr_adjusted_p": e.fdr_adjusted_p, "selected": bool(e.selected)}
                     for e in rep.entries}
        rec["methods"][m] = {
            "status": "ok",
            "detected": bool(variables.get(rec["target"], {}).get("significant", False)),
            "lambda": rep.provenance.get("lambda"),
            "variables": variables,
        }
    return rec


def replicate_path(directory, key: str) -> Path:
    return Path(directory) / "replicates" / f"{key}.json"


def _load_if_current(path: Path, job: ReplicateJob) -> dict | None:
    try:
        rec = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError):
        return None
    if rec.get("fingerprint") != job.fingerprint or set(rec.get("methods", {})) < set(job.methods):
        return None
    return rec


def _run_and_store(args) -> dict:
    job, directory = args
    rec = run_replicate(job)
    path = replicate_path(directory, job.key)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(rec, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return rec


def run_study(cfg: StudyConfig, directory=None, workers: int = 1, resume: bool = True) -> list[dict]:
    """Run (or resume) every replicate of ``cfg`` and return the records.

    Records already on disk with a matching configuration fingerprint are
    reused. Results do not depend on ``workers``.
    """
    directory = Path(directory or cfg.output_dir)
    (directory / "replicates").mkdir(parents=True, exist_ok=True)
    todo, done = [], []
    for job in jobs(cfg):
        rec = _load_if_current(replicate_path(directory, job.key), job) if resume else None
        if rec is None:
            todo.append(job)
        else:
            done.append(rec)
    log.info("%d replicates to run, %d reused", len(todo), len(done))
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done.extend(pool.map(_run_and_store, [(j, directory) for j in todo], chunksize=1))
    else:
        for k, job in enumerate(todo):
            done.append(_run_and_store((job, directory)))
            if (k + 1) % 25 == 0:
                log.info("%d/%d replicates", k + 1, len(todo))
    return sorted(done, key=lambda r: r["key"])


def load_records(directory) -> list[dict]:
    recs = []
    for p in sorted((Path(directory) / "replicates").glob("*.json")):
        recs.append(json.loads(p.read_text(encoding="utf-8")))
    return recs


# --------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class PowerRow:
    setting: int
    name: str
    phenotype_model: str
    method: str
    r2: float
    power: float
    detected: int
    iterations: int
    failures: int
    mean_p_I: float
    mean_p_M: float
    status: str


@dataclass
class PowerTable:
    rows: list[PowerRow]

    def cell(self, setting: int, model: str, method: str, r2: float) -> PowerRow:
        for r in self.rows:
            if (r.setting, r.phenotype_model, r.method) == (setting, model, method) and abs(r.r2 - r2) < 1e-12:
                return r
        raise KeyError((setting, model, method, r2))


@dataclass
class DiscoveryHeatmap:
    setting: int
    name: str
    phenotype_model: str
    r2: float
    variables: list[str]
    methods: list[str]
    frequency: np.ndarray  # variables x methods
    iterations: list[int]  # successful replicates per method

    def value(self, variable: str, method: str) -> float:
        return float(self.frequency[self.variables.index(variable), self.methods.index(method)])


def _variable_order(labels) -> list[str]:
    def key(v):
        parts = [int(x[4:]) for x in v.split("x")]
        return (len(parts), parts)
    return sorted(labels, key=key)


def aggregate(records: list[dict], methods=None) -> tuple[PowerTable, list[DiscoveryHeatmap]]:
    """Power table and per-cell heatmaps from replicate records.

    A cell is marked ``failed`` when more than 10% of its replicates failed
    for that method; power is then still reported over the successful ones.
    """
    cells: dict[tuple, list[dict]] = {}
    for rec in records:
        cells.setdefault((rec["setting"], rec["model"], rec["r2"]), []).append(rec)
    if methods is None:
        methods = sorted({m for rec in records for m in rec["methods"]},
                         key=lambda m: [x.value for x in Method].index(m))
    rows, maps = [], []
    for (setting, model, r2) in sorted(cells):
        recs = sorted(cells[(setting, model, r2)], key=lambda r: r["rep"])
        name = recs[0]["name"]
        ok_sim = [r for r in recs if "p_I" in r]
        mean_pi = float(np.mean([r["p_I"] for r in ok_sim])) if ok_sim else float("nan")
        mean_pm = float(np.mean([r["p_M"] for r in ok_sim])) if ok_sim else float("nan")
        variables = _variable_order({v for r in recs for res in r["methods"].values()
                                     for v in res.get("variables", {})})
        freq = np.zeros((len(variables), len(methods)))
        counts = []
        for j, m in enumerate(methods):
            res = [r["methods"][m] for r in recs if m in r["methods"]]
            ok = [x for x in res if x["status"] == "ok"]
            fails = len(res) - len(ok)
            det = sum(1 for x in ok if x["detected"])
            status = "failed" if fails > FAIL_FRACTION * len(res) else "ok"
            rows.append(PowerRow(int(setting), name, model, m, float(r2),
                                 det / len(ok) if ok else float("nan"), det, len(ok), fails, mean_pi, mean_pm,
                                 status))
            counts.append(len(ok))
            for i, v in enumerate(variables):
                hits = sum(1 for x in ok if x["variables"].get(v, {}).get("significant", False))
                freq[i, j] = hits / len(ok) if ok else float("nan")
        maps.append(DiscoveryHeatmap(int(setting), name, model, float(r2), variables, list(methods), freq, counts))
    return PowerTable(rows), maps
