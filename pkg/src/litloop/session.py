"""Pipeline orchestration with persistent, resumable sessions.

A session owns a corpus, a config, a review ledger and an append-only list
of iterations. Each iteration runs the stages

    screening -> extraction -> consensus -> [review gate] ->
    dataset -> modeling -> response -> report

persisting one JSON artifact per stage. Every artifact records a fingerprint
of its inputs; a stage whose fingerprint matches an existing artifact (from
a crashed run or from the previous iteration after a refinement) is reused
instead of recomputed, which is what makes resume cheap and guarantees the
model is never re-queried for work that already happened.

Review decisions live in a session-level ledger keyed by point identity, so
approving or correcting a flagged point carries into every later iteration
whose consensus output contains that same point.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .consensus import (
    ConsensusPolicy,
    DISPOSITION_ACCEPTED,
    DISPOSITION_FLAGGED,
    ScoredPoint,
    score_batch,
)
from .corpus import DataDefinition, ScientificQuery, load_corpus
from .extraction import ExtractionBatch, extract_corpus
from .gateway import HttpBackend, SamplingConfig, ScriptedBackend
from .modeling import (
    Dataset,
    FittedModel,
    MODEL_LIBRARY,
    ModelSpec,
    fit as fit_model,
)
from .reporting import ReportInputs, assemble_report, compose_response
from .screening import screen_corpus

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

STATUS_RUNNING = "running"
STATUS_AWAITING_REVIEW = "awaiting_review"
STATUS_COMPLETED = "completed"
STATUS_FAILED = "failed"

MODE_BATCH = "batch"
MODE_INTERACTIVE = "interactive"

ACTION_APPROVE = "approve"
ACTION_CORRECT = "correct"
ACTION_REJECT = "reject"

ORIGIN_ACCEPTED = "accepted"
ORIGIN_APPROVED = "approved"
ORIGIN_CORRECTED = "corrected"

SCORE_HUMAN = "human"


class SessionError(Exception):
    pass


class ConflictError(SessionError):
    """A review decision targeted a point that is not open for review."""


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def fingerprint(obj) -> str:
    return hashlib.sha256(_canonical(obj).encode("utf-8")).hexdigest()[:24]


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=1), encoding="utf-8")


def _read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


@dataclass(frozen=True)
class SessionConfig:
    corpus_dir: str
    definition: DataDefinition
    query: ScientificQuery
    policy: ConsensusPolicy
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    backend: dict = field(default_factory=lambda: {"type": "scripted", "fixture": None})
    mode: str = MODE_BATCH
    manifest: str | None = None
    max_workers: int = 4
    library: tuple[str, ...] = MODEL_LIBRARY

    def __post_init__(self):
        if self.mode not in (MODE_BATCH, MODE_INTERACTIVE):
            raise SessionError(f"unknown mode {self.mode!r}")
        for form in self.library:
            if form not in MODEL_LIBRARY:
                raise SessionError(f"unknown model form {form!r} in library")

    def to_dict(self) -> dict:
        return {
            "corpus_dir": self.corpus_dir,
            "manifest": self.manifest,
            "definition": self.definition.to_dict(),
            "query": self.query.text,
            "policy": self.policy.to_dict(),
            "sampling": {
                "softmax_factor": self.sampling.softmax_factor,
                "max_output_tokens": self.sampling.max_output_tokens,
            },
            "backend": dict(self.backend),
            "mode": self.mode,
            "max_workers": self.max_workers,
            "library": list(self.library),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SessionConfig":
        sampling = raw.get("sampling", {})
        return cls(
            corpus_dir=raw["corpus_dir"],
            manifest=raw.get("manifest"),
            definition=DataDefinition.from_dict(raw["definition"]),
            query=ScientificQuery(raw["query"]),
            policy=ConsensusPolicy.from_dict(raw["policy"]),
            sampling=SamplingConfig(
                softmax_factor=sampling.get("softmax_factor", 0.5),
                max_output_tokens=sampling.get("max_output_tokens", 1024),
            ),
            backend=dict(raw.get("backend", {"type": "scripted", "fixture": None})),
            mode=raw.get("mode", MODE_BATCH),
            max_workers=raw.get("max_workers", 4),
            library=tuple(raw.get("library", MODEL_LIBRARY)),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "SessionConfig":
        return cls.from_dict(_read_json(Path(path)))


def build_backend(config: SessionConfig):
    backend = config.backend
    kind = backend.get("type", "scripted")
    if kind == "scripted":
        fixture = backend.get("fixture")
        if fixture:
            return ScriptedBackend.from_fixture(fixture)
        return ScriptedBackend({})
    if kind == "http":
        return HttpBackend(
            base_url=backend["base_url"],
            model=backend["model"],
            api_key=os.environ.get("LITLOOP_API_KEY", ""),
        )
    raise SessionError(f"unknown backend type {kind!r}")


def data_root(data_dir: str | Path | None = None) -> Path:
    if data_dir is not None:
        return Path(data_dir)
    return Path(os.environ.get("LITLOOP_DATA_DIR", "litloop-data"))


class Session:
    """One persistent investigation: config, iterations, review ledger."""

    def __init__(self, directory: Path, config: SessionConfig):
        self.directory = directory
        self.config = config
        self._lock = threading.RLock()

    # -- lifecycle -------------------------------------------------------

    @classmethod
    def create(
        cls,
        config: SessionConfig,
        data_dir: str | Path | None = None,
        session_id: str | None = None,
    ) -> "Session":
        root = data_root(data_dir) / "sessions"
        root.mkdir(parents=True, exist_ok=True)
        if session_id is None:
            session_id = f"s-{len(list(root.iterdir())) + 1:04d}"
        directory = root / session_id
        if directory.exists():
            raise SessionError(f"session {session_id!r} already exists")
        directory.mkdir()
        _write_json(directory / "session.json", {
            "schema_version": SCHEMA_VERSION,
            "session_id": session_id,
            "created_at": _now(),
            "config": config.to_dict(),
        })
        _write_json(directory / "decisions.json", [])
        return cls(directory, config)

    @classmethod
    def load(cls, session_id: str, data_dir: str | Path | None = None) -> "Session":
        directory = data_root(data_dir) / "sessions" / session_id
        if not directory.is_dir():
            raise SessionError(f"no session {session_id!r}")
        meta = _read_json(directory / "session.json")
        return cls(directory, SessionConfig.from_dict(meta["config"]))

    @staticmethod
    def list_sessions(data_dir: str | Path | None = None) -> list[dict]:
        root = data_root(data_dir) / "sessions"
        if not root.is_dir():
            return []
        summaries = []
        for path in sorted(root.iterdir()):
            if (path / "session.json").exists():
                meta = _read_json(path / "session.json")
                session = Session(path, SessionConfig.from_dict(meta["config"]))
                summaries.append({
                    "session_id": meta["session_id"],
                    "created_at": meta["created_at"],
                    "iterations": len(session.iteration_indices()),
                    "status": session.latest_status(),
                })
        return summaries

    @property
    def session_id(self) -> str:
        return self.directory.name

    # -- iteration bookkeeping --------------------------------------------

    def iterations_dir(self) -> Path:
        return self.directory / "iterations"

    def iteration_indices(self) -> list[int]:
        root = self.iterations_dir()
        if not root.is_dir():
            return []
        return sorted(int(p.name) for p in root.iterdir() if p.name.isdigit())

    def iteration_dir(self, index: int) -> Path:
        return self.iterations_dir() / f"{index:04d}"

    def iteration_meta(self, index: int) -> dict:
        return _read_json(self.iteration_dir(index) / "iteration.json")

    def latest_status(self) -> str | None:
        indices = self.iteration_indices()
        if not indices:
            return None
        return self.iteration_meta(indices[-1])["status"]

    def _new_iteration(self, config: SessionConfig) -> int:
        indices = self.iteration_indices()
        index = (indices[-1] + 1) if indices else 1
        directory = self.iteration_dir(index)
        directory.mkdir(parents=True)
        _write_json(directory / "iteration.json", {
            "index": index,
            "status": STATUS_RUNNING,
            "started_at": _now(),
            "stage": None,
            "config": config.to_dict(),
        })
        return index

    def _update_iteration(self, index: int, **updates):
        path = self.iteration_dir(index) / "iteration.json"
        meta = _read_json(path)
        meta.update(updates)
        _write_json(path, meta)

    # -- review ledger -----------------------------------------------------

    def decisions(self) -> list[dict]:
        return _read_json(self.directory / "decisions.json")

    def _decided_ids(self) -> set[str]:
        return {d["point_id"] for d in self.decisions()}

    def decide(
        self,
        point_id: str,
        action: str,
        values: dict | None = None,
        inspector: str = "anonymous",
        note: str = "",
    ) -> dict:
        """Record an approve/correct/reject decision for a flagged point.

        The point must be flagged in the latest consensus output and not
        already decided; anything else is a conflict.
        """
        if action not in (ACTION_APPROVE, ACTION_CORRECT, ACTION_REJECT):
            raise SessionError(f"unknown action {action!r}")
        with self._lock:
            flagged = {p.point_id: p for p in self._latest_flagged_points()}
            if point_id not in flagged:
                if point_id in self._decided_ids():
                    raise ConflictError(f"point {point_id!r} was already decided")
                raise ConflictError(f"point {point_id!r} is not flagged for review")
            corrected = None
            if action == ACTION_CORRECT:
                if not values:
                    raise SessionError("correct requires replacement values")
                corrected = self._validate_corrected_values(values)
            decision = {
                "point_id": point_id,
                "action": action,
                "values": corrected,
                "inspector": inspector,
                "note": note,
                "decided_at": _now(),
            }
            ledger = self.decisions()
            ledger.append(decision)
            _write_json(self.directory / "decisions.json", ledger)
            return decision

    def _validate_corrected_values(self, values: dict) -> dict:
        corrected: dict[str, float | None] = {}
        for spec in self.config.definition.variables:
            raw = values.get(spec.name)
            if raw is None:
                if spec.required:
                    raise SessionError(f"corrected values missing required {spec.name!r}")
                corrected[spec.name] = None
                continue
            value = float(raw)
            if value != value or value in (float("inf"), float("-inf")):
                raise SessionError(f"corrected value for {spec.name!r} must be finite")
            corrected[spec.name] = round(value, spec.precision)
        return corrected

    def _latest_scored_points(self) -> list[ScoredPoint]:
        for index in reversed(self.iteration_indices()):
            path = self.iteration_dir(index) / "scored.json"
            if path.exists():
                return [ScoredPoint.from_dict(p) for p in _read_json(path)["points"]]
        return []

    def _latest_flagged_points(self) -> list[ScoredPoint]:
        decided = self._decided_ids()
        return [
            p for p in self._latest_scored_points()
            if p.disposition == DISPOSITION_FLAGGED and p.point_id not in decided
        ]

    def list_flagged(self) -> list[dict]:
        """Review queue snapshot: flagged, undecided points with excerpts."""
        documents = {d.doc_id: d for d in self._load_documents()}
        queue = []
        for point in self._latest_flagged_points():
            doc = documents.get(point.doc_id)
            queue.append({
                "point_id": point.point_id,
                "doc_id": point.doc_id,
                "doc_title": doc.title if doc else point.doc_id,
                "values": point.values,
                "score": point.score,
                "supporting_runs": list(point.supporting_runs),
                "excerpt": _excerpt(doc.body if doc else "", point),
            })
        return queue

    def excerpt_for(self, doc_id: str, point_id: str) -> dict:
        """Excerpt endpoint payload for one point of one document."""
        documents = {d.doc_id: d for d in self._load_documents()}
        doc = documents.get(doc_id)
        if doc is None:
            raise SessionError(f"no document {doc_id!r}")
        for point in self._latest_scored_points():
            if point.point_id == point_id:
                return {
                    "doc_id": doc_id,
                    "doc_title": doc.title,
                    "point_id": point_id,
                    "excerpt": _excerpt(doc.body, point),
                }
        raise SessionError(f"no point {point_id!r}")

    # -- corpus ------------------------------------------------------------

    def _load_documents(self):
        documents, errors = load_corpus(self.config.corpus_dir, self.config.manifest)
        for error in errors:
            log.warning("corpus: %s", error)
        return documents

    # -- the pipeline --------------------------------------------------------

    def run_iteration(self, backend=None, config: SessionConfig | None = None) -> dict:
        """Run (or resume) one full pipeline pass.

        Resumes the latest iteration when it is unfinished; otherwise appends
        a new one. Stage artifacts with matching input fingerprints, whether
        from the interrupted run or from the previous iteration, are reused
        without touching the backend.
        """
        with self._lock:
            config = config or self._latest_config()
            backend = backend if backend is not None else build_backend(config)
            indices = self.iteration_indices()
            if indices and self.iteration_meta(indices[-1])["status"] in (
                STATUS_RUNNING, STATUS_AWAITING_REVIEW, STATUS_FAILED
            ):
                index = indices[-1]
                config = SessionConfig.from_dict(self.iteration_meta(index)["config"])
            else:
                index = self._new_iteration(config)
            try:
                return self._execute(index, config, backend)
            except Exception as exc:
                stage = _read_json(
                    self.iteration_dir(index) / "iteration.json"
                ).get("stage")
                self._update_iteration(
                    index, status=STATUS_FAILED, error=f"{stage}: {exc}"
                )
                raise

    def _latest_config(self) -> SessionConfig:
        indices = self.iteration_indices()
        if not indices:
            return self.config
        return SessionConfig.from_dict(self.iteration_meta(indices[-1])["config"])

    def refine(
        self,
        new_query: str | None = None,
        new_definition: DataDefinition | None = None,
        new_policy: ConsensusPolicy | None = None,
        backend=None,
        run: bool = True,
    ) -> dict:
        """Start the next iteration with an updated question, definition or
        policy. Unchanged stages are reused from the previous iteration."""
        with self._lock:
            if not self.iteration_indices():
                raise SessionError("nothing to refine: run an iteration first")
            if self.latest_status() in (STATUS_RUNNING,):
                raise ConflictError("an iteration is already running")
            base = self._latest_config()
            config = SessionConfig(
                corpus_dir=base.corpus_dir,
                manifest=base.manifest,
                definition=new_definition or base.definition,
                query=ScientificQuery(new_query) if new_query else base.query,
                policy=new_policy or base.policy,
                sampling=base.sampling,
                backend=base.backend,
                mode=base.mode,
                max_workers=base.max_workers,
                library=base.library,
            )
            index = self._new_iteration(config)
            if not run:
                return {"index": index, "status": STATUS_RUNNING}
            backend = backend if backend is not None else build_backend(config)
            return self._execute(index, config, backend)

    # -- stages ---------------------------------------------------------------

    def _stage(self, index: int, name: str, inputs_fp: str, compute):
        """Reuse-or-compute one stage artifact."""
        path = self.iteration_dir(index) / f"{name}.json"
        if path.exists():
            artifact = _read_json(path)
            if artifact.get("fingerprint") == inputs_fp:
                return artifact
        previous = self._previous_artifact(index, name, inputs_fp)
        if previous is not None:
            _write_json(path, previous)
            return previous
        self._update_iteration(index, stage=name)
        artifact = compute()
        artifact["fingerprint"] = inputs_fp
        _write_json(path, artifact)
        return artifact

    def _previous_artifact(self, index: int, name: str, inputs_fp: str):
        for prior in reversed([i for i in self.iteration_indices() if i < index]):
            path = self.iteration_dir(prior) / f"{name}.json"
            if path.exists():
                artifact = _read_json(path)
                if artifact.get("fingerprint") == inputs_fp:
                    return artifact
        return None

    def _execute(self, index: int, config: SessionConfig, backend) -> dict:
        documents = self._load_documents()
        corpus_fp = fingerprint(
            [[d.doc_id, hashlib.sha256(d.body.encode()).hexdigest()] for d in documents]
        )
        definition_dict = config.definition.to_dict()
        sampling_dict = [config.sampling.softmax_factor, config.sampling.max_output_tokens]

        # screening: unaffected by the flag band or the query
        screening_fp = fingerprint({
            "corpus": corpus_fp,
            "definition": definition_dict,
            "k": config.policy.k,
            "filter_below": config.policy.filter_below,
            "sampling": sampling_dict,
        })
        screening = self._stage(
            index, "screening", screening_fp,
            lambda: {
                "verdicts": [
                    v.to_dict()
                    for v in screen_corpus(
                        backend, documents, config.definition, config.policy,
                        config.sampling, config.max_workers,
                    )
                ]
            },
        )
        kept_ids = [v["doc_id"] for v in screening["verdicts"] if v["kept"]]
        kept_docs = [d for d in documents if d.doc_id in set(kept_ids)]

        extraction_fp = fingerprint({
            "corpus": corpus_fp,
            "definition": definition_dict,
            "kept": kept_ids,
            "k": config.policy.k,
            "sampling": sampling_dict,
        })
        extraction = self._stage(
            index, "extraction", extraction_fp,
            lambda: {
                "batches": [
                    b.to_dict()
                    for b in extract_corpus(
                        backend, kept_docs, config.definition, config.policy.k,
                        config.sampling, config.max_workers,
                    )
                ]
            },
        )

        scored_fp = fingerprint({
            "extraction": extraction_fp,
            "batches": fingerprint(extraction["batches"]),
            "policy": config.policy.to_dict(),
        })
        scored = self._stage(
            index, "scored", scored_fp,
            lambda: {
                "points": [
                    p.to_dict()
                    for batch_dict in extraction["batches"]
                    for p in score_batch(
                        ExtractionBatch.from_dict(batch_dict), config.policy
                    )
                ]
            },
        )
        points = [ScoredPoint.from_dict(p) for p in scored["points"]]

        # review gate
        decided = self._decided_ids()
        undecided_flagged = [
            p for p in points
            if p.disposition == DISPOSITION_FLAGGED and p.point_id not in decided
        ]
        if config.mode == MODE_INTERACTIVE and undecided_flagged:
            self._update_iteration(index, status=STATUS_AWAITING_REVIEW, stage="review")
            return {
                "index": index,
                "status": STATUS_AWAITING_REVIEW,
                "flagged": len(undecided_flagged),
            }

        dataset_fp = fingerprint({
            "scored": scored_fp,
            "decisions": self.decisions(),
            "mode": config.mode,
        })
        dataset_artifact = self._stage(
            index, "dataset", dataset_fp,
            lambda: self._build_dataset(points, config),
        )
        dataset = Dataset.from_dict(dataset_artifact["dataset"])

        fits_fp = fingerprint({
            "dataset": dataset_artifact["dataset"],
            "query": config.query.text,
            "library": list(config.library),
        })
        fits_artifact = self._stage(
            index, "fits", fits_fp,
            lambda: self._fit_models(backend, dataset, config),
        )
        fits = [FittedModel.from_dict(f) for f in fits_artifact["fits"]]

        response_fp = fingerprint({
            "fits": fits_artifact["fits"],
            "dataset": dataset_artifact["dataset"],
            "query": config.query.text,
        })
        response_artifact = self._stage(
            index, "response", response_fp,
            lambda: {
                "response": (
                    compose_response(
                        backend, config.query.text, fits, dataset, config.sampling
                    )
                    if fits and len(dataset) > 0
                    else {"text": None, "prompt": None,
                          "note": "no fits; response generation skipped"}
                )
            },
        )

        self._update_iteration(index, stage="report")
        report = self._write_report(
            index, config, dataset_artifact, fits, response_artifact["response"]
        )
        self._update_iteration(
            index, status=STATUS_COMPLETED, stage=None, finished_at=_now()
        )
        return {
            "index": index,
            "status": STATUS_COMPLETED,
            "kept_documents": kept_ids,
            "scored_points": len(points),
            "dataset_rows": len(dataset),
            "report": report,
        }

    def _build_dataset(self, points: list[ScoredPoint], config: SessionConfig) -> dict:
        """Accepted points plus ledger-approved/corrected flagged points.

        Batch mode excludes undecided flagged points (they stay in the
        ledgerless pending state); interactive mode only reaches this stage
        once the queue is empty.
        """
        decisions = {d["point_id"]: d for d in self.decisions()}
        rows = []
        pending = 0
        for point in points:
            if point.disposition == DISPOSITION_ACCEPTED:
                rows.append((point, ORIGIN_ACCEPTED, str(point.score), point.values))
                continue
            if point.disposition != DISPOSITION_FLAGGED:
                continue
            decision = decisions.get(point.point_id)
            if decision is None:
                pending += 1
                continue
            if decision["action"] == ACTION_APPROVE:
                rows.append((point, ORIGIN_APPROVED, str(point.score), point.values))
            elif decision["action"] == ACTION_CORRECT:
                rows.append((point, ORIGIN_CORRECTED, SCORE_HUMAN, decision["values"]))
            # rejected points simply drop out

        predictors = config.definition.predictors
        target = config.definition.target
        dataset = Dataset(
            predictors=predictors,
            target=target,
            rows=tuple(
                tuple(float(values[p]) for p in predictors)
                for _, _, _, values in rows
            ),
            targets=tuple(float(values[target]) for _, _, _, values in rows),
            provenance=tuple(
                (point.doc_id, score) for point, _, score, _ in rows
            ),
        )
        audit = [
            {"point_id": point.point_id, "origin": origin, "score": score}
            for point, origin, score, _ in rows
        ]
        return {
            "dataset": dataset.to_dict(),
            "audit": audit,
            "pending_review": pending,
        }

    def _fit_models(self, backend, dataset: Dataset, config: SessionConfig) -> dict:
        if len(dataset) == 0:
            return {"selection": None, "fits": [],
                    "warning": "empty dataset; no models fitted"}
        from .modeling import select_models

        selection = select_models(
            backend, config.query.text, dataset.predictors, dataset.target,
            tuple(config.library), config.sampling,
        )
        fits = _fit_forms(dataset, [s.form for s in selection.specs])
        return {
            "selection": {
                "forms": [s.form for s in selection.specs],
                "warning": selection.warning,
                "raw_reply": selection.raw_reply,
            },
            "fits": fits,
            "warning": selection.warning,
        }

    def _write_report(self, index, config, dataset_artifact, fits, response) -> dict:
        dataset = Dataset.from_dict(dataset_artifact["dataset"])
        inputs = ReportInputs(
            query_text=config.query.text,
            data=dataset,
            fits=fits,
            response=response,
            selection_warning=dataset_artifact.get("warning"),
            generated_at=self.iteration_meta(index)["started_at"],
            pending_review=dataset_artifact.get("pending_review", 0),
        )
        return assemble_report(inputs, self.iteration_dir(index) / "report")

    # -- replay ------------------------------------------------------------------

    def replay(self, index: int, out_dir: str | Path) -> dict:
        """Recompute consensus -> modeling -> reporting from the persisted
        artifacts of iteration ``index`` into ``out_dir``. LLM outputs
        (selection, response) are taken from the artifacts; everything else
        is recomputed. Used to check replay determinism."""
        iteration = self.iteration_dir(index)
        config = SessionConfig.from_dict(self.iteration_meta(index)["config"])
        extraction = _read_json(iteration / "extraction.json")
        points = [
            p
            for batch_dict in extraction["batches"]
            for p in score_batch(ExtractionBatch.from_dict(batch_dict), config.policy)
        ]
        dataset_artifact = self._build_dataset(points, config)

        fits_artifact = _read_json(iteration / "fits.json")
        selection = fits_artifact.get("selection")
        dataset = Dataset.from_dict(dataset_artifact["dataset"])
        if selection and len(dataset) > 0:
            fit_dicts = _fit_forms(dataset, selection["forms"])
            fits = [FittedModel.from_dict(f) for f in fit_dicts]
        else:
            fits = []
        response = _read_json(iteration / "response.json")["response"]
        inputs = ReportInputs(
            query_text=config.query.text,
            data=dataset,
            fits=fits,
            response=response,
            selection_warning=dataset_artifact.get("warning"),
            generated_at=self.iteration_meta(index)["started_at"],
            pending_review=dataset_artifact.get("pending_review", 0),
        )
        return assemble_report(inputs, out_dir)


def _fit_forms(dataset: Dataset, forms: list[str]) -> list[dict]:
    """Fit each form, turning hard fit errors into non-converged records so
    one bad form never sinks the iteration (or its replay)."""
    fits = []
    for form in forms:
        spec = ModelSpec(form, dataset.predictors, dataset.target)
        try:
            fits.append(fit_model(dataset, spec).to_dict())
        except Exception as exc:
            log.warning("fit failed for %s: %s", form, exc)
            fits.append({
                "form": form,
                "predictors": list(dataset.predictors),
                "target": dataset.target,
                "params": {name: None for name in spec.param_names},
                "r_squared": None,
                "converged": False,
                "iterations": 0,
                "flags": [f"fit error: {exc}"],
            })
    return fits


def _excerpt(body: str, point: ScoredPoint, window: int = 140) -> str:
    """A window of document text around one of the point's values, falling
    back to the extractor's raw span, then to the document head."""
    if not body:
        return point.raw_span or ""
    for value in sorted(
        (v for v in point.values.values() if v is not None), reverse=True
    ):
        needle = f"{value:g}"
        at = body.find(needle)
        if at >= 0:
            start = max(0, at - window)
            end = min(len(body), at + len(needle) + window)
            prefix = "..." if start > 0 else ""
            suffix = "..." if end < len(body) else ""
            return prefix + body[start:end] + suffix
    if point.raw_span:
        return point.raw_span
    return body[: 2 * window]


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
