"""HTTP labeling service: exposes a live campaign to a human oracle. Serves
queried samples with audio and spectrograms, accepts labels, and advances
rounds in a background worker. Phases move selecting -> awaiting_labels ->
retraining -> (selecting | done)."""
from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .audio import N_FRAMES, N_MELS, wav_bytes
from .campaign import (
    CampaignConfig,
    RoundLog,
    _campaign_seeds,
    prepare_round,
    run_selector,
    seed_initial_pool,
)
from .data import Dataset, open_dataset
from .selection import SelectionConfig
from .semisup import SslConfig, evaluate, pseudo_label, ssl_train


class SessionRequest(BaseModel):
    dataset: str
    strategy: str = "mixed"
    start_labels: int = Field(default=10, ge=1)
    end_labels: int = Field(default=60, ge=1)
    b: int = Field(default=10, ge=1)
    seed: int = 0
    selection: dict = Field(default_factory=dict)
    ssl: dict = Field(default_factory=dict)


class LabelSubmission(BaseModel):
    labels: dict[str, int]


@dataclass
class Session:
    session_id: str
    cfg: CampaignConfig
    dataset: Dataset
    state: object = None
    model: object = None
    ssl_cfg: SslConfig | None = None
    seeds: np.ndarray | None = None
    phase: str = "selecting"
    round: int = 0
    pending: list[dict] = field(default_factory=list)
    pending_ids: list[str] = field(default_factory=list)
    committed_batches: list[frozenset] = field(default_factory=list)
    logs: list[RoundLog] = field(default_factory=list)
    error: str | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def status(self) -> dict:
        out = {
            "id": self.session_id,
            "phase": self.phase,
            "round": self.round,
            "total_rounds": self.cfg.rounds,
            "labeled": len(self.state.train_ids) if self.state else 0,
            "classes": self.dataset.class_names
            or [str(c) for c in range(self.dataset.n_classes)],
        }
        if self.logs:
            out["accuracy"] = self.logs[-1].accuracy
        if self.phase == "done" and self.logs:
            out["final_accuracy"] = self.logs[-1].accuracy
        if self.error:
            out["error"] = self.error
        return out


def _spectrogram_rows(dataset: Dataset, sid: str) -> list[list[float]]:
    vec = dataset.features[sid]
    if vec.size == N_MELS * N_FRAMES:
        return vec.reshape(N_MELS, N_FRAMES).tolist()
    return [vec.tolist()]  # non-spectrogram features render as a single-row strip


class SessionManager:
    """Owns sessions; every mutation happens under the session lock, heavy
    work (selection, retraining) runs on a background thread."""

    def __init__(self, datasets: dict[str, Dataset], multi_session: bool = False):
        self.datasets = datasets
        self.multi_session = multi_session
        self.sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()

    def active_session(self) -> Session | None:
        for sess in self.sessions.values():
            if sess.phase != "done":
                return sess
        return None

    def create(self, req: SessionRequest) -> Session:
        dataset = self.datasets[req.dataset]
        cfg = CampaignConfig(
            dataset=req.dataset, strategy=req.strategy,
            start_labels=req.start_labels, end_labels=req.end_labels, b=req.b,
            seeds=[req.seed],
            selection=SelectionConfig(**req.selection),
            ssl=SslConfig(**req.ssl),
        )
        sess = Session(session_id=uuid.uuid4().hex[:12], cfg=cfg, dataset=dataset)
        sess.state = seed_initial_pool(dataset, cfg.start_labels, rng_seed=req.seed)
        ssl_cfg = SslConfig(**{**cfg.ssl.__dict__, "n_classes": dataset.n_classes})
        sess.ssl_cfg = ssl_cfg
        sess.seeds = _campaign_seeds(req.seed, cfg.rounds)
        with self._registry_lock:
            self.sessions[sess.session_id] = sess
        self._spawn(sess, self._run_initial)
        return sess

    def _spawn(self, sess: Session, fn) -> None:
        threading.Thread(target=fn, args=(sess,), daemon=True).start()

    def _test_accuracy(self, sess: Session) -> float:
        ds = sess.dataset
        return evaluate(sess.model, ds.feature_matrix(ds.test_ids),
                        ds.label_vector(ds.test_ids))

    def _pseudo_accuracy(self, sess: Session) -> float | None:
        ds = sess.dataset
        known = [sid for sid in sess.state.pool_ids if sid in ds.labels]
        if not known:
            return None
        probs = pseudo_label(sess.model, ds.feature_matrix(known))
        return float(np.mean(np.argmax(probs, axis=1) == ds.label_vector(known)))

    def _run_initial(self, sess: Session) -> None:
        try:
            ds = sess.dataset
            sess.model = ssl_train(ds.feature_matrix(sess.state.train_ids),
                                   ds.label_vector(sess.state.train_ids),
                                   ds.feature_matrix(sess.state.pool_ids),
                                   sess.ssl_cfg)
            log = RoundLog(round=0, labeled=len(sess.state.train_ids),
                           accuracy=self._test_accuracy(sess),
                           pseudo_accuracy=self._pseudo_accuracy(sess), selected=[])
            with sess.lock:
                sess.logs.append(log)
            if sess.cfg.rounds == 0:
                with sess.lock:
                    sess.phase = "done"
                return
            self._select_batch(sess)
        except Exception as exc:  # surfaced through the status endpoint
            with sess.lock:
                sess.error = f"{type(exc).__name__}: {exc}"
                sess.phase = "done"

    def _select_batch(self, sess: Session) -> None:
        ds = sess.dataset
        cfg = sess.cfg
        r = sess.round + 1
        sel_cfg = SelectionConfig(**{**cfg.selection.__dict__, "b": cfg.b,
                                     "rng_seed": int(sess.seeds[r][0])})
        work, nm, _ = prepare_round(ds, sess.state, sess.model, sel_cfg,
                                    round_seed=int(sess.seeds[r][1]))
        batch = run_selector(cfg.strategy, work, ds, sess.model, nm, sel_cfg,
                             ds.source(cfg.augment))
        items = [
            {
                "id": sid,
                "audio_url": f"/audio/{sid}" if ds.clips else None,
                "spectrogram": _spectrogram_rows(ds, sid),
            }
            for sid in batch
        ]
        with sess.lock:
            sess.state = work
            sess.pending_ids = batch
            sess.pending = items
            sess.phase = "awaiting_labels"

    def _advance_round(self, sess: Session, labels: dict[str, int]) -> None:
        try:
            ds = sess.dataset
            with sess.lock:
                batch = list(sess.pending_ids)
            sess.state = sess.state.with_batch(batch).commit_batch(labels)
            sess.model = ssl_train(ds.feature_matrix(sess.state.train_ids),
                                   ds.label_vector(sess.state.train_ids),
                                   ds.feature_matrix(sess.state.pool_ids),
                                   sess.ssl_cfg)
            with sess.lock:
                sess.round += 1
                sess.pending = []
                sess.pending_ids = []
                sess.logs.append(RoundLog(
                    round=sess.round, labeled=len(sess.state.train_ids),
                    accuracy=self._test_accuracy(sess),
                    pseudo_accuracy=None if not sess.state.pool_ids
                    else self._pseudo_accuracy(sess),
                    selected=batch))
            if sess.round >= sess.cfg.rounds:
                with sess.lock:
                    sess.phase = "done"
                return
            with sess.lock:
                sess.phase = "selecting"
            self._select_batch(sess)
        except Exception as exc:
            with sess.lock:
                sess.error = f"{type(exc).__name__}: {exc}"
                sess.phase = "done"


def create_app(datasets: dict[str, Dataset], multi_session: bool = False,
               static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="batchal labeling service")
    manager = SessionManager(datasets, multi_session=multi_session)
    app.state.manager = manager
    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/app", StaticFiles(directory=static_dir, html=True), name="console")

    def _get(session_id: str) -> Session | None:
        return manager.sessions.get(session_id)

    @app.post("/sessions", status_code=201)
    def create_session(req: SessionRequest):
        if req.dataset not in manager.datasets:
            return JSONResponse(status_code=404,
                                content={"detail": f"unknown dataset {req.dataset!r}"})
        if not manager.multi_session and manager.active_session() is not None:
            return JSONResponse(status_code=409,
                                content={"detail": "a session is already active"})
        try:
            sess = manager.create(req)
        except (ValueError, TypeError) as exc:
            return JSONResponse(status_code=422, content={"detail": str(exc)})
        return sess.status()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        sess = _get(session_id)
        if sess is None:
            return JSONResponse(status_code=404, content={"detail": "no such session"})
        with sess.lock:
            return sess.status()

    @app.get("/sessions/{session_id}/batch")
    def get_batch(session_id: str):
        sess = _get(session_id)
        if sess is None:
            return JSONResponse(status_code=404, content={"detail": "no such session"})
        with sess.lock:
            if sess.phase != "awaiting_labels":
                return JSONResponse(status_code=409, content={"phase": sess.phase})
            return {"id": sess.session_id, "round": sess.round + 1,
                    "classes": sess.status()["classes"], "items": sess.pending}

    @app.post("/sessions/{session_id}/labels")
    def post_labels(session_id: str, submission: LabelSubmission):
        sess = _get(session_id)
        if sess is None:
            return JSONResponse(status_code=404, content={"detail": "no such session"})
        with sess.lock:
            if sess.phase != "awaiting_labels":
                return JSONResponse(status_code=409, content={"phase": sess.phase})
            got = set(submission.labels)
            if got in sess.committed_batches:
                # re-submission of an already committed round (e.g. double click)
                return JSONResponse(status_code=409,
                                    content={"detail": "batch already committed",
                                             "phase": sess.phase})
            pending = set(sess.pending_ids)
            missing = sorted(pending - got)
            extra = sorted(got - pending)
            if missing or extra:
                return JSONResponse(status_code=422,
                                    content={"missing": missing, "extra": extra})
            bad = {sid: lab for sid, lab in submission.labels.items()
                   if not 0 <= lab < sess.dataset.n_classes}
            if bad:
                return JSONResponse(status_code=422,
                                    content={"invalid_classes": bad})
            sess.committed_batches.append(frozenset(got))
            sess.phase = "retraining"
        threading.Thread(target=manager._advance_round,
                         args=(sess, dict(submission.labels)), daemon=True).start()
        return {"phase": "retraining"}

    @app.get("/sessions/{session_id}/metrics")
    def get_metrics(session_id: str):
        sess = _get(session_id)
        if sess is None:
            return JSONResponse(status_code=404, content={"detail": "no such session"})
        with sess.lock:
            rounds = [
                {"round": l.round, "labeled": l.labeled, "accuracy": l.accuracy,
                 "pseudo_accuracy": l.pseudo_accuracy, "selected": l.selected}
                for l in sess.logs
            ]
        return {"rounds": rounds}

    @app.get("/audio/{sample_id}")
    def get_audio(sample_id: str):
        for ds in manager.datasets.values():
            if ds.clips and sample_id in ds.clips:
                return Response(content=wav_bytes(ds.clips[sample_id]),
                                media_type="audio/wav")
        return JSONResponse(status_code=404, content={"detail": "no such sample"})

    return app


def serve(config: dict, host: str | None = None, port: int | None = None) -> None:
    """Run the service; bind address falls back to BATCHAL_HOST / BATCHAL_PORT."""
    import os
    import uvicorn

    datasets = {name: open_dataset(ref) for name, ref in config["datasets"].items()}
    app = create_app(datasets, multi_session=bool(config.get("multi_session", False)),
                     static_dir=config.get("frontend_dir"))
    uvicorn.run(app,
                host=host or os.environ.get("BATCHAL_HOST", "127.0.0.1"),
                port=int(port or os.environ.get("BATCHAL_PORT", "8709")))
