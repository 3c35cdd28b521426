"""Request handlers shared by the HTTP service and the in-process CLI path."""
from __future__ import annotations

import json
import logging
import math
from pathlib import Path

from . import __version__
from .genotype import DatasetError, load_dataset
from .inference import detect
from .reporting import write_outputs
from .schemas import (AnalyzeRequest, AnalyzeResponse, CellSummary, HealthResponse, PowerStudyRequest,
                      PowerStudyResponse, ReportRequest, SimulateRequest, SimulateResponse)
from .simulation import simulate
from .study import aggregate, load_records, run_study

log = logging.getLogger(__name__)


class InputError(Exception):
    """Missing or invalid input; maps to exit code 2 / HTTP 422."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


class OutputExistsError(Exception):
    """Output directory is not empty and overwriting was not allowed."""


def prepare_output(path, force: bool) -> Path:
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise OutputExistsError(f"output path {out} exists and is not a directory")
    if out.exists() and any(out.iterdir()) and not force:
        raise OutputExistsError(f"output directory {out} is not empty; pass --force to write into it")
    out.mkdir(parents=True, exist_ok=True)
    return out


def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


def run_simulate(req: SimulateRequest) -> SimulateResponse:
    try:
        kw = req.simulation.kwargs(req.study)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = prepare_output(req.output, req.force)
    ds = simulate(req.study, req.setting, req.model, req.r2, req.seed, **kw)
    files = ds.write(out)
    return SimulateResponse(name=ds.meta["name"], files={k: str(v) for k, v in files.items()}, n=ds.genotypes.n,
                            n_snps=ds.genotypes.p, n_genes=len(ds.index), sigma2=ds.sigma2,
                            realized_r2=ds.realized_r2)


def run_analyze(req: AnalyzeRequest) -> AnalyzeResponse:
    for p in (req.genotypes, req.gene_map, req.phenotype):
        if not Path(p).is_file():
            raise InputError(f"input file not found: {p}", p)
    try:
        geno, index, y = load_dataset(req.genotypes, req.gene_map, req.phenotype, req.drop_duplicate_snps)
        if y.n != geno.n:
            raise InputError(f"{req.phenotype}: {y.n} phenotype values for {geno.n} genotyped subjects",
                             req.phenotype)
        y.check_variance()
    except DatasetError as exc:
        raise InputError(str(exc), getattr(exc, "path", None)) from exc
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = prepare_output(req.output, req.force)
    report = detect(geno, index, y, req.method, req.detect.to_config(req.seed))
    report.provenance["inputs"] = {"genotypes": str(req.genotypes), "gene_map": str(req.gene_map),
                                   "phenotype": str(req.phenotype)}
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.tsv").write_text(report.to_tsv(), encoding="utf-8")
    return AnalyzeResponse(files={"json": str(out / "report.json"), "tsv": str(out / "report.tsv")},
                           method=req.method, significant=report.significant,
                           selected=sorted(e.group_id for e in report.entries if e.selected),
                           n_groups=len(report.entries))


def _summaries(table) -> list[CellSummary]:
    return [CellSummary(setting=r.setting, name=r.name, phenotype_model=r.phenotype_model, method=r.method,
                        r2=r.r2, power=r.power if math.isfinite(r.power) else None, iterations=r.iterations,
                        failures=r.failures, status=r.status)
            for r in table.rows]


def _report(directory: Path, methods=None) -> PowerStudyResponse:
    records = load_records(directory)
    table, maps = aggregate(records, methods)
    files = write_outputs(table, maps, directory)
    cells = _summaries(table)
    return PowerStudyResponse(files={k: str(v) for k, v in files.items()}, cells=cells,
                              failed_cells=sum(c.status != "ok" for c in cells))


def run_power_study(req: PowerStudyRequest) -> PowerStudyResponse:
    try:
        cfg = req.to_study_config()
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = prepare_output(req.output, req.force)
    (out / "config.json").write_text(json.dumps(req.model_dump(), indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    run_study(cfg, out, workers=req.workers)
    return _report(out, cfg.method_values())


def run_report(req: ReportRequest) -> PowerStudyResponse:
    out = Path(req.output)
    if not (out / "replicates").is_dir():
        raise InputError(f"no replicate records under {out / 'replicates'}", str(out))
    methods = None
    cfg_path = out / "config.json"
    if cfg_path.is_file():
        methods = list(dict.fromkeys(json.loads(cfg_path.read_text(encoding="utf-8")).get("methods", []))) or None
    return _report(out, methods)
