"""Request/response models shared by the HTTP service and the CLI.

Config files are validated through the same models, so a YAML key and a
JSON request field are the same thing. Unknown keys are rejected.
"""
from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .inference import DetectConfig
from .study import StudyConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


MethodName = Literal["ggee", "pca", "pls"]
ModelName = Literal["wang", "pca"]
StudyName = Literal["simplified", "realistic"]


class DetectOptions(_Strict):
    q: int = Field(1, ge=1, description="components per gene (PCA, PLS)")
    products: Literal["raw", "standardized"] = "raw"
    interaction_weight: Literal["size", "literal"] = "size"
    standardize: bool = True
    folds: int = Field(10, ge=2)
    grid_size: int = Field(100, ge=2)
    min_ratio: float = Field(0.01, gt=0, lt=1)
    cv_rule: Literal["min", "1se"] = "min"
    permutations: int = Field(999, ge=99)
    alpha: float = Field(0.05, gt=0, lt=1)
    weights_rows: Literal["screen", "all"] = "screen"

    def to_config(self, seed: int = 0) -> DetectConfig:
        return DetectConfig(seed=int(seed), **self.model_dump())


class SimulationOptions(_Strict):
    n: Optional[int] = Field(None, ge=10, description="subjects (simplified study)")
    G: Optional[int] = Field(None, ge=2, description="genes")
    p_g: Optional[int] = Field(None, ge=1, description="SNPs per gene (simplified study)")
    rho: Optional[float] = Field(None, ge=0, lt=1)
    coef: Optional[float] = Field(None, description="common main/interaction coefficient")

    def kwargs(self, study: str) -> dict:
        d = {k: v for k, v in self.model_dump().items() if v is not None}
        if study == "realistic":
            extra = sorted(set(d) - {"G", "coef"})
            if extra:
                raise ValueError(f"simulation keys {extra} do not apply to the realistic study")
        return d


class SimulateRequest(_Strict):
    study: StudyName = "simplified"
    setting: int = Field(1, ge=1, le=5)
    model: ModelName = "wang"
    r2: float = Field(0.7, gt=0, lt=1)
    seed: int = Field(0, ge=0)
    output: str
    force: bool = False
    simulation: SimulationOptions = SimulationOptions()


class SimulateResponse(BaseModel):
    name: str
    files: dict[str, str]
    n: int
    n_snps: int
    n_genes: int
    sigma2: float
    realized_r2: Optional[float]


class AnalyzeRequest(_Strict):
    genotypes: str
    gene_map: str
    phenotype: str
    method: MethodName = "ggee"
    seed: int = Field(0, ge=0)
    output: str
    force: bool = False
    drop_duplicate_snps: bool = False
    detect: DetectOptions = DetectOptions()


class AnalyzeResponse(BaseModel):
    files: dict[str, str]
    method: str
    significant: list[str]
    selected: list[str]
    n_groups: int


class PowerStudyRequest(_Strict):
    study: StudyName = "simplified"
    settings: list[int] = [1, 2, 3, 4, 5]
    models: list[ModelName] = ["wang", "pca"]
    methods: list[MethodName] = ["ggee", "pca", "pls"]
    r2_grid: list[float] = [0.1, 0.2, 0.4, 0.7]
    iterations: int = Field(100, ge=1)
    seed: int = Field(0, ge=0)
    output: str = "power-study"
    force: bool = False
    workers: int = Field(1, ge=1)
    detect: DetectOptions = DetectOptions()
    simulation: SimulationOptions = SimulationOptions()

    @field_validator("settings")
    @classmethod
    def _settings(cls, v):
        if not v or any(s not in (1, 2, 3, 4, 5) for s in v):
            raise ValueError("settings must be a nonempty subset of 1..5")
        return v

    @field_validator("r2_grid")
    @classmethod
    def _r2(cls, v):
        if not v or any(not 0 < r < 1 for r in v):
            raise ValueError("r2_grid values must lie in (0, 1)")
        return v

    def to_study_config(self) -> StudyConfig:
        return StudyConfig(self.study, tuple(self.settings), tuple(self.models), tuple(self.methods),
                           tuple(self.r2_grid), self.iterations, self.seed, self.output,
                           self.detect.to_config(), self.simulation.kwargs(self.study))


class CellSummary(BaseModel):
    setting: int
    name: str
    phenotype_model: str
    method: str
    r2: float
    power: Optional[float]
    iterations: int
    failures: int
    status: str


class PowerStudyResponse(BaseModel):
    files: dict[str, str]
    cells: list[CellSummary]
    failed_cells: int


class ReportRequest(_Strict):
    output: str


class HealthResponse(BaseModel):
    status: str
    version: str
