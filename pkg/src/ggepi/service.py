"""HTTP service around the detection pipeline.

Run with ``ggepi serve`` or ``uvicorn ggepi.service:app``. Paths in requests
are paths on the server's filesystem. Handlers are plain ``def`` so FastAPI
runs the CPU-bound work in its thread pool.
"""
from __future__ import annotations

from fastapi import FastAPI, HTTPException

from . import __version__, api
from .grouplasso import ConvergenceError
from .schemas import (AnalyzeRequest, AnalyzeResponse, HealthResponse, PowerStudyRequest, PowerStudyResponse,
                      ReportRequest, SimulateRequest, SimulateResponse)

app = FastAPI(title="ggepi", version=__version__)


def _call(fn, req):
    try:
        return fn(req)
    except api.InputError as exc:
        raise HTTPException(status_code=422, detail={"error": str(exc), "path": exc.path}) from exc
    except api.OutputExistsError as exc:
        raise HTTPException(status_code=409, detail={"error": str(exc)}) from exc
    except ConvergenceError as exc:
        raise HTTPException(status_code=500, detail={"error": str(exc), "duality_gap": exc.duality_gap}) from exc


@app.get("/health", response_model=HealthResponse)
def health():
    return api.health()


@app.post("/simulate", response_model=SimulateResponse)
def simulate(req: SimulateRequest):
    return _call(api.run_simulate, req)


@app.post("/analyze", response_model=AnalyzeResponse)
def analyze(req: AnalyzeRequest):
    return _call(api.run_analyze, req)


@app.post("/power-study", response_model=PowerStudyResponse)
def power_study(req: PowerStudyRequest):
    return _call(api.run_power_study, req)


@app.post("/report", response_model=PowerStudyResponse)
def report(req: ReportRequest):
    return _call(api.run_report, req)
