"""Request/response bodies for the HTTP service.

Every endpoint operates on paths visible to the server process; the CLI
runs the app in-process by default, so the paths are simply local files.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class SynthRequest(BaseModel):
    config: str = Field(description="scene description file (INI, [scene] + [sprite] sections)")
    seed: int = 0
    out: str = Field(description="directory for rendered frames")
    fmt: str = "ppm"
    write_flows: bool = True


class SynthResponse(BaseModel):
    frames: list[str]
    flows: list[str]
    masks: list[str]
    n_frames: int
    width: int
    height: int


class FlowRequest(BaseModel):
    frames: str
    out: str
    config: str | None = None
    block_size: int | None = None  # None: from config, else 8
    radius: int | None = None  # None: from config, else 4


class FlowResponse(BaseModel):
    flows: list[str]
    masks: list[str]
    mean_abs_flow: float
    valid_fraction: float


class RunRequest(BaseModel):
    frames: str
    out: str
    config: str | None = None
    seed: int | None = None
    prompt: str | None = None
    overrides: dict[str, int | float | bool | str] = Field(default_factory=dict)
    fmt: str = "ppm"
    use_gt_flows: bool = True
    save_inversion: str | None = None
    emit_plan: bool = False


class RunResponse(BaseModel):
    frames: list[str]
    mode: str
    n_frames: int
    seconds: float
    plan: list[int] | None = None
    batches: list[list[int]] | None = None
    plan_file: str | None = None
    inversion_files: list[str] = Field(default_factory=list)


class MetricsRequest(BaseModel):
    frames: str
    reference: str
    config: str | None = None
    out: str | None = None
    use_gt_flows: bool = True


class MetricsResponse(BaseModel):
    pixel_mse: float
    spat_con: float
    temp_con: float
    report_file: str | None
    text: str
