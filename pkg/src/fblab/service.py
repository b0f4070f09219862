"""HTTP surface over the experiment pipelines.

One experiment per request: POST a config (plus an output directory on the
server's filesystem) and get back the exit code, the artifact names, and
the report document. The CLI talks to this app in-process; `uvicorn
fblab.service:app` serves the same API over the network.
"""

from __future__ import annotations

import os
import tempfile
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from fblab import __version__
from fblab.lab import ExperimentConfig, run, scenario, scenario_names

app = FastAPI(
    title="fblab",
    version=__version__,
    description="Free-boundary energy minimization laboratory",
)


class HealthResponse(BaseModel):
    status: str
    version: str


class ScenarioListResponse(BaseModel):
    scenarios: list[str]


class RunRequest(BaseModel):
    config: ExperimentConfig
    out_dir: Optional[str] = None


class RunResponse(BaseModel):
    exit_code: int
    out_dir: str
    artifacts: list[str]
    report: Optional[dict] = None
    message: str = ""


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.get("/scenarios", response_model=ScenarioListResponse)
def list_scenarios() -> ScenarioListResponse:
    return ScenarioListResponse(scenarios=scenario_names())


@app.get("/scenarios/{name}", response_model=ExperimentConfig)
def get_scenario(name: str) -> ExperimentConfig:
    try:
        return scenario(name)
    except KeyError as exc:
        raise HTTPException(status_code=404, detail=str(exc.args[0]))


@app.post("/experiments", response_model=RunResponse)
def run_experiment(request: RunRequest) -> RunResponse:
    out_dir = request.out_dir
    if out_dir is None:
        root = os.environ.get("FBLAB_OUT") or tempfile.gettempdir()
        out_dir = os.path.join(root, f"fblab-{request.config.name}")
    result = run(request.config, out_dir)
    return RunResponse(
        exit_code=result.exit_code,
        out_dir=out_dir,
        artifacts=result.artifacts,
        report=result.report,
        message=result.message,
    )
