"""FastAPI wrapper around the core package.

One endpoint per CLI verb. Domain errors surface as HTTP 400 with the
error kind and the exit code the CLI should use; everything else is a
plain 500.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..config import RunConfig, config_from_sections, load_config
from ..correspondence import FlowField, OcclusionMask, estimate_flow, occlusion_mask
from ..denoiser import DenoiserSpec, SyntheticDenoiser, ddim_invert
from ..diffusion import make_schedule
from ..errors import ContractError, FrescoError
from ..frames import load_frames, save_frames
from ..ftns import read_ftns, write_ftns
from ..metrics import render_report, write_report
from ..pipeline import (
    edit_video,
    evaluate_run,
    prepare_latents,
    run_long_video,
    translate_video,
)
from ..scene import load_scene, synthesize_scene
from .schemas import (
    FlowRequest,
    FlowResponse,
    HealthResponse,
    MetricsRequest,
    MetricsResponse,
    RunRequest,
    RunResponse,
    SynthRequest,
    SynthResponse,
)


def _find_correspondence(directory: str, n_frames: int):
    """Ground-truth flow/mask tensors living beside the frames, if complete."""
    d = Path(directory)
    if not d.is_dir():
        return None, None
    flow_files = sorted(d.glob("flow_*.ftns"))
    mask_files = sorted(d.glob("mask_*.ftns"))
    if len(flow_files) != n_frames - 1 or len(mask_files) != n_frames - 1:
        return None, None
    flows, masks = [], []
    for i, (ff, mf) in enumerate(zip(flow_files, mask_files)):
        flows.append(FlowField(i, i + 1, read_ftns(ff).astype(np.float64)))
        masks.append(OcclusionMask(i, i + 1, np.rint(read_ftns(mf)).astype(np.int64)))
    return flows, masks


def _load_run(req: RunRequest, mode: str):
    overrides: dict = dict(req.overrides)
    overrides["mode"] = mode
    if req.seed is not None:
        overrides["seed"] = req.seed
    if req.prompt is not None:
        overrides["prompt"] = req.prompt
    cfg = load_config(req.config, overrides) if req.config else config_from_sections([], overrides)
    seq = load_frames(req.frames, frame_rate=cfg.frame_rate)
    gt_flows = gt_masks = None
    if req.use_gt_flows:
        gt_flows, gt_masks = _find_correspondence(req.frames, len(seq))
    return seq, cfg, gt_flows, gt_masks


def _save_inversion(denoiser: SyntheticDenoiser, seq, cfg: RunConfig, directory: str) -> list[str]:
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FrescoError(f"cannot create inversion directory {out}: {exc}") from exc
    sched = make_schedule(cfg.steps, cfg.beta_first, cfg.beta_last)
    x0, struct = prepare_latents(denoiser, seq.frames)
    _, record = ddim_invert(denoiser, x0, cfg.prompt, struct, sched)
    paths = []
    for step in record.steps:
        for l in range(len(step.phi)):
            for name, arr in (("phi", step.phi[l]), ("q", step.q[l]), ("k", step.k[l])):
                p = out / f"inv_t{step.t:03d}_layer{l}_{name}.ftns"
                write_ftns(p, arr)
                paths.append(str(p))
    return paths


def _write_plan(debug: dict, out_dir: str) -> str:
    lines = ["keyframes=" + " ".join(str(i) for i in debug.get("plan", []))]
    for b, batch in enumerate(debug.get("batches", [])):
        lines.append(f"batch_{b:02d}=" + " ".join(str(i) for i in batch))
    path = Path(out_dir) / "plan.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def create_app() -> FastAPI:
    app = FastAPI(title="fresco", version=__version__)

    @app.exception_handler(FrescoError)
    async def _domain_error(request: Request, exc: FrescoError):
        kind = "contract" if isinstance(exc, ContractError) else "io"
        return JSONResponse(
            status_code=400,
            content={"detail": {"kind": kind, "exit_code": exc.exit_code, "message": str(exc)}},
        )

    @app.get("/health", response_model=HealthResponse)
    async def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/synth", response_model=SynthResponse)
    async def synth(req: SynthRequest) -> SynthResponse:
        spec = load_scene(req.config)
        seq, flows, masks = synthesize_scene(spec, req.seed)
        out = Path(req.out)
        frame_paths = save_frames(seq, out, fmt=req.fmt)
        flow_paths, mask_paths = [], []
        if req.write_flows:
            for i, (fl, mk) in enumerate(zip(flows, masks)):
                fp, mp = out / f"flow_{i:05d}.ftns", out / f"mask_{i:05d}.ftns"
                write_ftns(fp, fl.vectors)
                write_ftns(mp, mk.valid.astype(np.float64))
                flow_paths.append(str(fp))
                mask_paths.append(str(mp))
        return SynthResponse(
            frames=[str(p) for p in frame_paths],
            flows=flow_paths,
            masks=mask_paths,
            n_frames=len(seq),
            width=seq.width,
            height=seq.height,
        )

    @app.post("/flow", response_model=FlowResponse)
    async def flow(req: FlowRequest) -> FlowResponse:
        cfg = load_config(req.config) if req.config else RunConfig()
        block = req.block_size if req.block_size is not None else cfg.block_size
        radius = req.radius if req.radius is not None else cfg.radius
        seq = load_frames(req.frames)
        out = Path(req.out)
        out.mkdir(parents=True, exist_ok=True)
        flow_paths, mask_paths = [], []
        mags, valid_counts, total = [], 0, 0
        for i in range(len(seq) - 1):
            fwd = estimate_flow(seq[i], seq[i + 1], block, radius, pair=(i, i + 1))
            bwd = estimate_flow(seq[i + 1], seq[i], block, radius, pair=(i + 1, i))
            mask = occlusion_mask(fwd, bwd)
            fp, mp = out / f"flow_{i:05d}.ftns", out / f"mask_{i:05d}.ftns"
            write_ftns(fp, fwd.vectors)
            write_ftns(mp, mask.valid.astype(np.float64))
            flow_paths.append(str(fp))
            mask_paths.append(str(mp))
            mags.append(float(np.abs(fwd.vectors).mean()))
            valid_counts += int(mask.valid.sum())
            total += mask.valid.size
        return FlowResponse(
            flows=flow_paths,
            masks=mask_paths,
            mean_abs_flow=float(np.mean(mags)) if mags else 0.0,
            valid_fraction=valid_counts / total if total else 1.0,
        )

    def _run(req: RunRequest, mode: str) -> RunResponse:
        seq, cfg, gt_flows, gt_masks = _load_run(req, mode)
        denoiser = SyntheticDenoiser(DenoiserSpec(seed=cfg.denoiser_seed))
        debug: dict = {}
        started = time.perf_counter()
        if mode == "translate":
            result = translate_video(seq, cfg, gt_flows, gt_masks, denoiser=denoiser)
        elif mode == "edit":
            result = edit_video(seq, cfg, gt_flows, gt_masks, denoiser=denoiser)
        else:
            result = run_long_video(seq, cfg, gt_flows, gt_masks, denoiser=denoiser, debug=debug)
        seconds = time.perf_counter() - started
        paths = save_frames(result, req.out, fmt=req.fmt)
        resp = RunResponse(
            frames=[str(p) for p in paths],
            mode=mode,
            n_frames=len(result),
            seconds=seconds,
        )
        if req.emit_plan and mode == "long":
            resp.plan = [int(i) for i in debug.get("plan", [])]
            resp.batches = [[int(i) for i in b] for b in debug.get("batches", [])]
            resp.plan_file = _write_plan(debug, req.out)
        if req.save_inversion and mode == "edit":
            resp.inversion_files = _save_inversion(denoiser, seq, cfg, req.save_inversion)
        return resp

    @app.post("/translate", response_model=RunResponse)
    async def translate(req: RunRequest) -> RunResponse:
        return _run(req, "translate")

    @app.post("/edit", response_model=RunResponse)
    async def edit(req: RunRequest) -> RunResponse:
        return _run(req, "edit")

    @app.post("/long", response_model=RunResponse)
    async def long_run(req: RunRequest) -> RunResponse:
        return _run(req, "long")

    @app.post("/metrics", response_model=MetricsResponse)
    async def metrics(req: MetricsRequest) -> MetricsResponse:
        cfg = load_config(req.config) if req.config else RunConfig()
        output = load_frames(req.frames, frame_rate=cfg.frame_rate)
        reference = load_frames(req.reference, frame_rate=cfg.frame_rate)
        gt_flows = gt_masks = None
        if req.use_gt_flows:
            gt_flows, gt_masks = _find_correspondence(req.reference, len(reference))
        report = evaluate_run(output, reference, cfg, gt_flows, gt_masks)
        report_file = None
        if req.out:
            write_report(report, req.out)
            report_file = req.out
        return MetricsResponse(
            pixel_mse=report.pixel_mse,
            spat_con=report.spat_con,
            temp_con=report.temp_con,
            report_file=report_file,
            text=render_report(report),
        )

    return app


app = create_app()
