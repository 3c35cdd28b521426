"""Command-line interface.

Subcommands ``simulate``, ``analyze``, ``power-study`` and ``report`` build a
request from an optional YAML config plus flags (flags win) and either run
it in-process or, with ``--server URL``, post it to a running service.
``serve`` starts that service.

Exit codes: 0 success, 1 runtime failure, 2 bad input or config,
3 output directory not empty without ``--force``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import yaml
from pydantic import BaseModel, ValidationError

from . import __version__, api
from .grouplasso import ConvergenceError
from .schemas import AnalyzeRequest, PowerStudyRequest, ReportRequest, SimulateRequest

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_EXISTS = 0, 1, 2, 3

COMMANDS = {
    "simulate": (SimulateRequest, api.run_simulate, "/simulate"),
    "analyze": (AnalyzeRequest, api.run_analyze, "/analyze"),
    "power-study": (PowerStudyRequest, api.run_power_study, "/power-study"),
    "report": (ReportRequest, api.run_report, "/report"),
}
SECTION = {"simulate": "simulate", "analyze": "analyze", "power-study": "power_study", "report": "report"}
DATA_FILES = {"genotypes": "genotypes.tsv", "gene_map": "gene_map.tsv", "phenotype": "phenotype.txt"}

log = logging.getLogger("ggepi")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise CliError(f"{p}: invalid YAML: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise CliError(f"{p}: top level must be a mapping")
    return data


def config_for(command: str, data: dict) -> dict:
    """Keys for one subcommand: shared top-level keys that the request knows,
    overlaid by the subcommand's own section (checked strictly)."""
    model = COMMANDS[command][0]
    sections = set(SECTION.values())
    fields = set(model.model_fields)
    out = {k: v for k, v in data.items() if k not in sections and k in fields}
    unknown = sorted(k for k in data if k not in sections and not any(k in c[0].model_fields
                                                                      for c in COMMANDS.values()))
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    section = data.get(SECTION[command]) or {}
    if not isinstance(section, dict):
        raise CliError(f"config section {SECTION[command]!r} must be a mapping")
    for k, v in section.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    return out


def _set_nested(d: dict, dotted: str, value):
    head, _, rest = dotted.partition(".")
    if rest:
        _set_nested(d.setdefault(head, {}), rest, value)
    else:
        d[head] = value


# flag dest -> request key (dotted for nested options)
OVERRIDES = {
    "simulate": {"study": "study", "setting": "setting", "model": "model", "r2": "r2", "n": "simulation.n"},
    "analyze": {"genotypes": "genotypes", "gene_map": "gene_map", "phenotype": "phenotype",
                "method": "method", "drop_duplicate_snps": "drop_duplicate_snps"},
    "power-study": {"study": "study", "settings": "settings", "models": "models", "r2_grid": "r2_grid",
                    "iterations": "iterations", "workers": "workers"},
    "report": {},
}
DETECT_FLAGS = {"permutations": "detect.permutations", "alpha": "detect.alpha", "q": "detect.q",
                "cv_rule": "detect.cv_rule"}


def build_request(args) -> BaseModel:
    model = COMMANDS[args.command][0]
    data = config_for(args.command, load_config(args.config)) if args.config else {}
    flags = dict(OVERRIDES[args.command])
    if args.command in ("analyze", "power-study"):
        flags.update(DETECT_FLAGS)
    for dest, key in flags.items():
        v = getattr(args, dest, None)
        if v is not None and v is not False:
            _set_nested(data, key, v)
    if args.command == "power-study" and args.method:
        data["methods"] = [args.method]
    if args.command == "analyze" and getattr(args, "data", None):
        for key, name in DATA_FILES.items():
            if getattr(args, key, None) is None:
                data[key] = str(Path(args.data) / name)
    if args.seed is not None and "seed" in model.model_fields:
        data["seed"] = args.seed
    if args.output is not None:
        data["output"] = args.output
    if args.force and "force" in model.model_fields:
        data["force"] = True
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise CliError(f"invalid {args.command} configuration:\n{exc}") from exc


def call_local(command: str, req: BaseModel) -> dict:
    fn = COMMANDS[command][1]
    try:
        return fn(req).model_dump()
    except api.InputError as exc:
        raise CliError(str(exc), EXIT_INPUT) from exc
    except api.OutputExistsError as exc:
        raise CliError(str(exc), EXIT_EXISTS) from exc
    except ConvergenceError as exc:
        raise CliError(f"{exc} (duality gap {exc.duality_gap})", EXIT_FAIL) from exc


def call_server(server: str, command: str, req: BaseModel, timeout: float | None = None) -> dict:
    import httpx

    url = server.rstrip("/") + COMMANDS[command][2]
    try:
        resp = httpx.post(url, json=req.model_dump(), timeout=timeout)
    except httpx.HTTPError as exc:
        raise CliError(f"cannot reach {url}: {exc}", EXIT_FAIL) from exc
    if resp.status_code == 200:
        return resp.json()
    detail = resp.json().get("detail", resp.text) if resp.headers.get("content-type", "").startswith(
        "application/json") else resp.text
    code = {422: EXIT_INPUT, 409: EXIT_EXISTS}.get(resp.status_code, EXIT_FAIL)
    msg = detail.get("error", detail) if isinstance(detail, dict) else detail
    raise CliError(f"server returned {resp.status_code}: {msg}", code)


def _common(p: argparse.ArgumentParser, method=False, workers=False):
    p.add_argument("--config", help="YAML config file; flags override its keys")
    p.add_argument("--seed", type=int, help="random seed (non-negative integer)")
    p.add_argument("--output", help="output directory")
    p.add_argument("--force", action="store_true", help="write into a non-empty output directory")
    if method:
        p.add_argument("--method", choices=["ggee", "pca", "pls"], help="interaction variable construction")
    if workers:
        p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--server", default=os.environ.get("GGEPI_SERVER"),
                   help="post the request to a running service instead of running in-process")


def _detect_flags(p: argparse.ArgumentParser):
    p.add_argument("--permutations", type=int, help="permutations per selected group")
    p.add_argument("--alpha", type=float, help="FDR level")
    p.add_argument("--q", type=int, help="components per gene for PCA/PLS")
    p.add_argument("--cv-rule", dest="cv_rule", choices=["min", "1se"], help="lambda choice on the CV curve")


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x.strip()]


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ggepi", description="Gene-gene interaction detection and power studies.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one dataset with its truth manifest")
    _common(p)
    p.add_argument("--study", choices=["simplified", "realistic"])
    p.add_argument("--setting", type=int, choices=[1, 2, 3, 4, 5])
    p.add_argument("--model", choices=["wang", "pca"], help="phenotype model")
    p.add_argument("--r2", type=float, help="target R^2")
    p.add_argument("--n", type=int, help="subjects (simplified study)")

    p = sub.add_parser("analyze", help="screen and clean one dataset")
    _common(p, method=True)
    p.add_argument("--data", help="directory holding genotypes.tsv, gene_map.tsv and phenotype.txt")
    p.add_argument("--genotypes")
    p.add_argument("--gene-map", dest="gene_map")
    p.add_argument("--phenotype")
    p.add_argument("--drop-duplicate-snps", dest="drop_duplicate_snps", action="store_true",
                   help="keep the first gene of a SNP mapped to several genes")
    _detect_flags(p)

    p = sub.add_parser("power-study", help="run a full simulation power study")
    _common(p, method=True, workers=True)
    p.add_argument("--study", choices=["simplified", "realistic"])
    p.add_argument("--settings", type=_ints, help="comma-separated setting ids, e.g. 1,2,5")
    p.add_argument("--models", type=lambda s: s.split(","), help="comma-separated phenotype models")
    p.add_argument("--r2-grid", dest="r2_grid", type=_floats, help="comma-separated R^2 targets")
    p.add_argument("--iterations", type=int, help="replicates per cell")
    _detect_flags(p)

    p = sub.add_parser("report", help="rebuild tables and figures from stored replicates")
    _common(p)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "serve":
        import uvicorn

        uvicorn.run("ggepi.service:app", host=args.host, port=args.port)
        return EXIT_OK
    try:
        if args.command == "report" and args.output is None:
            raise CliError("report needs --output pointing at a power-study directory")
        if args.seed is not None and args.seed < 0:
            raise CliError("--seed must be a non-negative integer")
        req = build_request(args)
        if args.server:
            result = call_server(args.server, args.command, req)
        else:
            result = call_local(args.command, req)
    except CliError as exc:
        print(f"ggepi {args.command}: error: {exc}", file=sys.stderr)
        return exc.code
    except Exception as exc:  # noqa: BLE001
        log.debug("unhandled", exc_info=True)
        print(f"ggepi {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if args.command == "simulate" and result.get("realized_r2") is not None:
        print(f"realized R2 = {result['realized_r2']:.4f}", file=sys.stderr)
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
