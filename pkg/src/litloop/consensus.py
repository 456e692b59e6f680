"""Iterative consensus scoring.

A pipeline stage that asks the model the same thing k times produces k
independent answers. Each distinct datum is scored by the number of runs
that reproduced it, and the score decides its fate: below ``filter_below``
it is discarded as a likely hallucination, inside the flag band it waits
for a human inspector, above the band it is accepted automatically.

Matching is exact equality on the canonicalized required-variable values;
unit conversion and precision rounding upstream give that equality a stable
domain. Within one run, duplicate identical points count once.
"""

from __future__ import annotations

from dataclasses import dataclass

DISPOSITION_FILTERED = "filtered"
DISPOSITION_FLAGGED = "flagged"
DISPOSITION_ACCEPTED = "accepted"

MatchKey = tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class ConsensusPolicy:
    """Score thresholds for one pipeline run.

    ``filter_below`` is the minimum score that survives; scores in
    [filter_below, flag_upto] are flagged for review; higher scores are
    accepted. ``flag_upto = filter_below - 1`` gives an empty flag band
    (scores either filtered or accepted outright), which is how a fully
    autonomous run is configured.
    """

    k: int
    filter_below: int
    flag_upto: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 1 <= self.filter_below <= self.k:
            raise ValueError("filter_below must be in [1, k]")
        if not self.filter_below - 1 <= self.flag_upto <= self.k:
            raise ValueError("flag_upto must be in [filter_below - 1, k]")

    def disposition(self, score: int) -> str:
        if score < self.filter_below:
            return DISPOSITION_FILTERED
        if score <= self.flag_upto:
            return DISPOSITION_FLAGGED
        return DISPOSITION_ACCEPTED

    def to_dict(self) -> dict:
        return {"k": self.k, "filter_below": self.filter_below, "flag_upto": self.flag_upto}

    @classmethod
    def from_dict(cls, raw: dict) -> "ConsensusPolicy":
        return cls(k=raw["k"], filter_below=raw["filter_below"], flag_upto=raw["flag_upto"])


@dataclass(frozen=True)
class ScoredPoint:
    doc_id: str
    values: dict[str, float | None]
    key: MatchKey
    score: int
    disposition: str
    supporting_runs: tuple[int, ...]
    raw_span: str | None = None

    @property
    def point_id(self) -> str:
        """Stable identity used by review decisions and provenance links."""
        parts = ",".join(f"{name}={value}" for name, value in self.key)
        return f"{self.doc_id}|{parts}"

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "values": self.values,
            "key": [[name, value] for name, value in self.key],
            "score": self.score,
            "disposition": self.disposition,
            "supporting_runs": list(self.supporting_runs),
            "raw_span": self.raw_span,
            "point_id": self.point_id,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ScoredPoint":
        return cls(
            doc_id=raw["doc_id"],
            values=dict(raw["values"]),
            key=tuple((name, value) for name, value in raw["key"]),
            score=raw["score"],
            disposition=raw["disposition"],
            supporting_runs=tuple(raw["supporting_runs"]),
            raw_span=raw.get("raw_span"),
        )


def match_key(values: dict[str, float | None], required: list[str]) -> MatchKey:
    """The consensus identity of a point: its required-variable values, in
    schema order. Preferred variables never participate in matching."""
    return tuple((name, values[name]) for name in required)


def score_runs(
    doc_id: str,
    runs: list[list[dict]],
    required: list[str],
    policy: ConsensusPolicy,
) -> list[ScoredPoint]:
    """Score one document's k runs of extracted points.

    Each entry of ``runs`` is the list of points one run produced; a point is
    a dict with at least ``values`` (variable map) and optionally
    ``raw_span``. Output order follows first appearance (run order, then line
    order), which is deterministic for a scripted backend.
    """
    if len(runs) > policy.k:
        raise ValueError(f"{len(runs)} runs exceed policy k={policy.k}")

    order: list[MatchKey] = []
    supporters: dict[MatchKey, set[int]] = {}
    exemplar: dict[MatchKey, dict] = {}
    for run_index, points in enumerate(runs):
        for point in points:
            key = match_key(point["values"], required)
            if key not in supporters:
                supporters[key] = set()
                exemplar[key] = point
                order.append(key)
            supporters[key].add(run_index)

    scored = []
    for key in order:
        run_set = tuple(sorted(supporters[key]))
        score = len(run_set)
        scored.append(
            ScoredPoint(
                doc_id=doc_id,
                values=dict(exemplar[key]["values"]),
                key=key,
                score=score,
                disposition=policy.disposition(score),
                supporting_runs=run_set,
                raw_span=exemplar[key].get("raw_span"),
            )
        )
    return scored


def score_batch(batch, policy: ConsensusPolicy) -> list[ScoredPoint]:
    """Score an extraction batch. The batch carries its own required-variable
    names so the caller only supplies the policy."""
    runs = [
        [{"values": p.values, "raw_span": p.raw_span} for p in run]
        for run in batch.runs
    ]
    return score_runs(batch.doc_id, runs, list(batch.required), policy)


def oracle_score(
    doc_id: str,
    runs: list[list[dict]],
    required: list[str],
    policy: ConsensusPolicy,
) -> list[ScoredPoint]:
    """Brute-force reference scorer used only by tests.

    Compares every point against every other point pairwise instead of
    grouping by key, so a bug in the hashing/grouping path of ``score_runs``
    cannot hide here.
    """
    if len(runs) > policy.k:
        raise ValueError(f"{len(runs)} runs exceed policy k={policy.k}")

    def same(a: dict, b: dict) -> bool:
        return all(a["values"][name] == b["values"][name] for name in required)

    seen: list[dict] = []
    scored: list[ScoredPoint] = []
    for run_index, points in enumerate(runs):
        for point in points:
            if any(same(point, prior) for prior in seen):
                continue
            seen.append(point)
            runs_with_match = []
            for other_index, other_points in enumerate(runs):
                if any(same(point, candidate) for candidate in other_points):
                    runs_with_match.append(other_index)
            score = len(runs_with_match)
            scored.append(
                ScoredPoint(
                    doc_id=doc_id,
                    values=dict(point["values"]),
                    key=match_key(point["values"], required),
                    score=score,
                    disposition=policy.disposition(score),
                    supporting_runs=tuple(runs_with_match),
                    raw_span=point.get("raw_span"),
                )
            )
    return scored
