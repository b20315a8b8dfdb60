"""HTTP API the annotation console drives.

All mutations pass through one lock, so command application order defines
truth regardless of how many console sessions are connected. Tasks are
leased for a fixed window; an expired lease re-queues the task, answers are
accepted exactly once per task id.
"""

from __future__ import annotations

import time
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel
from threading import Lock

from .loop import FlywheelState, run_iteration, save_state, select_categories

LEASE_SECONDS = 600.0


class AnswerItem(BaseModel):
    task_id: str
    attribute: str


class ServerContext:
    def __init__(
        self,
        state: FlywheelState,
        corpus_dir: str | Path,
        lease_seconds: float = LEASE_SECONDS,
        clock: Callable[[], float] = time.monotonic,
        save_dir: str | Path | None = None,
    ):
        self.state = state
        self.corpus_dir = Path(corpus_dir)
        self.lease_seconds = lease_seconds
        self.clock = clock
        self.save_dir = Path(save_dir) if save_dir else None
        self.leases: dict[str, float] = {}  # task_id -> lease expiry
        self.answered: set[str] = set()
        self.lock = Lock()
        if not state.awaiting and not state.pending_tasks:
            run_iteration(state, source="console")  # queue the first round

    def outstanding(self) -> list[dict]:
        return [t for t in self.state.pending_tasks if t["answer"] is None]


def create_app(context: ServerContext, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="annotation flywheel")
    ctx = context
    state = context.state

    @app.get("/api/progress")
    def progress():
        with ctx.lock:
            report = state.acc_history[-1]
            if state.awaiting and state.selected_history:
                selected = state.selected_history[-1]
            else:
                selected = select_categories(report, state.protocol, state.threshold)
            return {
                "iteration": state.iteration,
                "accuracy": {str(k): v for k, v in report.per_category.items()},
                "accuracy_history": [
                    {str(k): v for k, v in r.per_category.items()} for r in state.acc_history
                ],
                "manual_label_count": {str(k): v for k, v in state.manual_label_count.items()},
                "manual_history": [
                    {str(k): v for k, v in m.items()} for m in state.manual_history
                ],
                "selected_categories": selected,
                "awaiting": state.awaiting,
                "tasks_outstanding": len(ctx.outstanding()),
                "threshold": state.threshold,
            }

    @app.get("/api/tasks")
    def tasks(limit: int = 10):
        with ctx.lock:
            now = ctx.clock()
            leased = []
            for task in ctx.outstanding():
                if len(leased) >= limit:
                    break
                expiry = ctx.leases.get(task["task_id"], -1.0)
                if expiry > now:
                    continue  # currently leased to somebody
                ctx.leases[task["task_id"]] = now + ctx.lease_seconds
                q = state.protocol.by_id(task["question_id"])
                leased.append(
                    {
                        "task_id": task["task_id"],
                        "image_url": f"/api/images/{task['sample_id']}",
                        "mask_url": f"/api/masks/{task['sample_id']}",
                        "question_id": q.id,
                        "question_text": q.text,
                        "vocabulary": list(q.vocabulary),
                    }
                )
            return {"tasks": leased, "outstanding": len(ctx.outstanding())}

    @app.post("/api/answers")
    def answers(items: list[AnswerItem]):
        with ctx.lock:
            now = ctx.clock()
            accepted, rejected = [], []
            by_id = {t["task_id"]: t for t in state.pending_tasks}
            for item in items:
                task = by_id.get(item.task_id)
                if task is None:
                    rejected.append({"task_id": item.task_id, "reason": "unknown_task"})
                    continue
                if item.task_id in ctx.answered or task["answer"] is not None:
                    rejected.append({"task_id": item.task_id, "reason": "already_answered"})
                    continue
                expiry = ctx.leases.get(item.task_id)
                if expiry is None or expiry <= now:
                    rejected.append({"task_id": item.task_id, "reason": "expired_lease"})
                    continue
                vocab = state.protocol.by_id(task["question_id"]).vocabulary
                if item.attribute not in vocab:
                    rejected.append({"task_id": item.task_id, "reason": "invalid_attribute"})
                    continue
                task["answer"] = item.attribute
                ctx.answered.add(item.task_id)
                accepted.append(item.task_id)
            return {"accepted": accepted, "rejected": rejected}

    @app.post("/api/iteration/advance")
    def advance():
        with ctx.lock:
            if ctx.outstanding():
                raise HTTPException(status_code=409, detail="labels still outstanding")
            run_iteration(state, source="console")   # apply answers, refit, re-evaluate
            ctx.leases.clear()
            ctx.answered.clear()
            if not state.awaiting:
                run_iteration(state, source="console")  # queue next round if any
            if ctx.save_dir is not None:
                save_state(state, ctx.save_dir)
            report = state.acc_history[-1]
            return {
                "iteration": state.iteration,
                "awaiting": state.awaiting,
                "mean_accuracy": report.mean,
                "done": not state.awaiting,
            }

    @app.get("/api/images/{sample_id}")
    def image(sample_id: str):
        path = ctx.corpus_dir / "images" / f"{sample_id}.png"
        if not path.exists():
            raise HTTPException(status_code=404, detail="unknown image")
        return FileResponse(path, media_type="image/png")

    @app.get("/api/masks/{sample_id}")
    def mask(sample_id: str):
        path = ctx.corpus_dir / "masks" / f"{sample_id}.png"
        if not path.exists():
            raise HTTPException(status_code=404, detail="unknown mask")
        return FileResponse(path, media_type="image/png")

    @app.exception_handler(ValueError)
    def value_error(_, exc):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    if static_dir is not None and Path(static_dir).exists():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")
    return app
