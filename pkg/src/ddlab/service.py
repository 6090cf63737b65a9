"""HTTP service exposing scenario runs, presets, set verification and Euler
cycle extraction.

The service wraps the core package with pydantic request/response models;
the CLI drives the same app in-process, so results are identical whether
the app runs behind uvicorn or embedded.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict

from .model import ValidationError, verify_decoupling_set
from .scenarios import (
    PRESET_NAMES,
    Scenario,
    ScenarioError,
    _euler_visit_labels,
    build_scenario,
    preset,
    run_scenario,
)


class HealthResponse(BaseModel):
    status: str
    package: str
    version: str


class PresetListResponse(BaseModel):
    presets: list[str]


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    scenario: Scenario


class RunResponse(BaseModel):
    name: str
    passed: bool
    theorem_violation: bool
    exit_code: int
    summary: dict
    results_csv: str


class VerifySetResponse(BaseModel):
    passed: bool
    max_violation: float
    n_checked: int
    n_elements: int
    reduced: bool


class EulerResponse(BaseModel):
    visits: list[int]
    edge_generator_positions: list[int]
    n_vertices: int
    n_edges: int


def create_app() -> FastAPI:
    app = FastAPI(
        title="ddlab",
        description="Bangbang and finite-amplitude dynamical decoupling simulations",
        version="0.1.0",
    )

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", package="ddlab", version="0.1.0")

    @app.get("/presets", response_model=PresetListResponse)
    def list_presets():
        return PresetListResponse(presets=list(PRESET_NAMES))

    @app.get("/presets/{name}", response_model=Scenario)
    def get_preset(name: str):
        try:
            return preset(name)
        except (ScenarioError, ValueError) as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/run", response_model=RunResponse)
    def run(request: RunRequest):
        try:
            result = run_scenario(request.scenario)
        except (ScenarioError, ValidationError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return RunResponse(
            name=request.scenario.name,
            passed=result.report.all_pass,
            theorem_violation=bool(result.summary.get("theorem_violation")),
            exit_code=result.exit_code,
            summary=result.summary,
            results_csv=result.csv_text,
        )

    @app.post("/verify-set", response_model=VerifySetResponse)
    def verify_set(request: RunRequest):
        try:
            built = build_scenario(request.scenario)
        except (ScenarioError, ValidationError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        report = verify_decoupling_set(built.vset)
        return VerifySetResponse(
            passed=report.passed,
            max_violation=report.max_violation,
            n_checked=report.n_checked,
            n_elements=built.vset.size,
            reduced=built.vset.reduced,
        )

    @app.post("/euler", response_model=EulerResponse)
    def euler_endpoint(request: RunRequest):
        scenario = request.scenario
        if scenario.cycle.euler_generators is None:
            raise HTTPException(status_code=400, detail="scenario cycle has no euler_generators")
        try:
            built = build_scenario(scenario)
            graph = built.cayley
            labels = _euler_visit_labels(graph, built.cycle)
        except (ScenarioError, ValidationError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return EulerResponse(
            visits=list(built.cycle.visits),
            edge_generator_positions=labels,
            n_vertices=graph.n_vertices,
            n_edges=graph.n_edges,
        )

    return app


app = create_app()
