"""HTTP service hosting human-preference sessions and the static UI.

A session owns one background refinement worker; the worker blocks on the
human's choice, and the browser polls for the next pending comparison.
"""

from __future__ import annotations

import os
import threading

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .errors import InvalidArgumentError
from .geom import Pose4
from .gp_pref import KernelParams
from .oracles import HumanOracle, HumanSession
from .pipeline import LoadedInputs, PipelineConfig, load_inputs, stage_seed
from .refine import RefineConfig, refine_pose


class SessionRunner:
    """One human-driven refinement running on a worker thread."""

    def __init__(self, cfg: PipelineConfig, inputs: LoadedInputs, timeout: float):
        serve_cfg = cfg.serve or {}
        if "seed_pose" not in serve_cfg:
            raise InvalidArgumentError("serve config requires a seed_pose")
        self.session = HumanSession(timeout=timeout)
        desc_by_k = {d.k: d for d in inputs.descriptions}
        k = serve_cfg.get("description_k")
        self.description = desc_by_k[int(k)] if k is not None else inputs.descriptions[0]
        self.seed_pose = Pose4.from_dict(serve_cfg["seed_pose"])
        self.cfg = cfg
        self.inputs = inputs
        self.session.total = cfg.refine.B
        self.thread = threading.Thread(target=self._run, daemon=True)
        self.thread.start()

    def _run(self):
        oracle = _CountingOracle(self.session, HumanOracle(self.session, self.inputs.scene))
        wp_cfg = RefineConfig(
            B=self.cfg.refine.B,
            M=self.cfg.refine.M,
            seed=stage_seed(self.cfg.seed, f"serve:{self.session.id}"),
            kernel=self.cfg.refine.kernel,
        )
        try:
            pose, trace, _ = refine_pose(
                self.seed_pose,
                self.description,
                self.inputs.scene,
                self.inputs.grid,
                oracle,
                wp_cfg,
                self.cfg.trust_region,
            )
            self.session.result = {
                "pose": pose.to_dict(),
                "outcomes": [s.outcome for s in trace.steps],
            }
        except Exception as exc:  # noqa: BLE001 - surfaced through /status
            self.session.result = {"error": str(exc)}
        finally:
            self.session.done = True


class _CountingOracle:
    def __init__(self, session: HumanSession, inner: HumanOracle):
        self.session = session
        self.inner = inner

    def compare(self, incumbent_view, challenger_view, description):
        out = self.inner.compare(incumbent_view, challenger_view, description)
        self.session.iteration += 1
        return out


def create_app(cfg: PipelineConfig, static_dir: str | None = None,
               session_timeout: float = 600.0) -> FastAPI:
    app = FastAPI(title="cineplan preference service")
    inputs = load_inputs(cfg)
    runners: dict[str, SessionRunner] = {}
    app.state.runners = runners

    @app.post("/api/session")
    def create_session():
        runner = SessionRunner(cfg, inputs, timeout=session_timeout)
        runners[runner.session.id] = runner
        return {"id": runner.session.id}

    @app.get("/api/session/{sid}/next")
    def next_comparison(sid: str):
        runner = runners.get(sid)
        if runner is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        req = runner.session.pending()
        if req is None:
            return {"empty": True}
        return {
            "request_id": req.request_id,
            "image_a": req.image_a,
            "image_b": req.image_b,
            "description": req.description,
        }

    @app.post("/api/session/{sid}/choice")
    def submit_choice(sid: str, body: dict):
        runner = runners.get(sid)
        if runner is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        request_id = body.get("request_id")
        choice = body.get("choice")
        if choice not in ("A", "B") or not request_id:
            return JSONResponse({"error": "choice must be A or B with a request_id"}, status_code=400)
        if not runner.session.submit(request_id, choice):
            return JSONResponse({"error": "unknown or stale request id"}, status_code=404)
        return {"ok": True}

    @app.get("/api/session/{sid}/status")
    def status(sid: str):
        runner = runners.get(sid)
        if runner is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        s = runner.session
        out = {"iter": s.iteration, "B": s.total, "done": s.done}
        if s.done and s.result is not None:
            out["result"] = s.result
        return out

    if static_dir and os.path.isdir(static_dir):
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
