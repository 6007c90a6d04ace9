"""Insert generated intermediate steps into existing solution chains.

For every gap between consecutive steps, the engine asks a FIM backend
for the step that might be missing there (prefix = steps before the gap,
suffix = the full remaining tail), gates the candidate by similarity to
the step that follows, and inserts the survivors. Gap requests may run
concurrently, but insertion order and output depend only on the inputs,
the backend's responses, and the config.

Decisions recorded per gap:

- valid: gated in, inserted
- invalid: near-duplicate of the next step, or empty candidate
- malformed: the completion was nothing but special-token noise
- backend_error: the backend failed after the engine's retries
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Iterator

from stepfim import fim
from stepfim.backends import FimBackend, FimRequest
from stepfim.decompose import StepChain
from stepfim.similarity import GateConfig, gate

VALID = "valid"
INVALID = "invalid"
MALFORMED = "malformed"
BACKEND_ERROR = "backend_error"

DECISIONS = (VALID, INVALID, MALFORMED, BACKEND_ERROR)


@dataclass(frozen=True)
class ExpansionConfig:
    """Engine knobs; `seed` is plumbing for stochastic backends only."""

    eta: float = 0.8
    iterations: int = 1
    include_leading_gap: bool = False
    max_in_flight: int = 4
    retry_limit: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        GateConfig(self.eta)  # range check
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "eta": self.eta,
            "iterations": self.iterations,
            "include_leading_gap": self.include_leading_gap,
            "max_in_flight": self.max_in_flight,
            "retry_limit": self.retry_limit,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class GapProposal:
    """Outcome of one gap request.

    gap_index is 1-based over the chain going into this round: the
    candidate would sit between step gap_index-1 and step gap_index,
    so index 1 names the gap before the first step.
    """

    gap_index: int
    request_id: str
    candidate: str
    similarity_to_next: float | None
    decision: str
    latency_ms: float
    error: str | None = None

    def to_dict(self, include_timing: bool = True) -> dict[str, Any]:
        row: dict[str, Any] = {
            "gap_index": self.gap_index,
            "request_id": self.request_id,
            "candidate": self.candidate,
            "similarity_to_next": self.similarity_to_next,
            "decision": self.decision,
            "error": self.error,
        }
        if include_timing:
            row["latency_ms"] = round(self.latency_ms, 3)
        return row


@dataclass(frozen=True)
class ExpansionReport:
    """Accounting for one expansion pass (or an aggregate of passes)."""

    record_id: str | None = None
    iteration: int = 0
    input_steps: int = 0
    output_steps: int = 0
    attempted: int = 0
    inserted: int = 0
    invalid: int = 0
    malformed: int = 0
    errored: int = 0
    elapsed_ms: float = 0.0
    proposals: tuple[GapProposal, ...] = field(default=())
    error: str | None = None

    def __post_init__(self) -> None:
        if self.attempted != self.inserted + self.invalid + self.malformed + self.errored:
            raise ValueError("gap decisions do not add up to the attempt count")

    def to_dict(self, include_proposals: bool = True, include_timing: bool = True) -> dict[str, Any]:
        """Timing fields are optional so report files can stay byte-stable."""
        row: dict[str, Any] = {
            "record_id": self.record_id,
            "iteration": self.iteration,
            "input_steps": self.input_steps,
            "output_steps": self.output_steps,
            "attempted": self.attempted,
            "inserted": self.inserted,
            "invalid": self.invalid,
            "malformed": self.malformed,
            "errored": self.errored,
            "error": self.error,
        }
        if include_timing:
            row["elapsed_ms"] = round(self.elapsed_ms, 3)
        if include_proposals:
            row["proposals"] = [p.to_dict(include_timing=include_timing) for p in self.proposals]
        return row


def clean_candidate(raw: str) -> tuple[str, bool]:
    """Cut the completion at the first special-token literal and trim.

    Returns (cleaned, truncated). Completion models routinely echo their
    sentinel tokens after the answer; text before the first one is the
    usable candidate.
    """
    cut = len(raw)
    truncated = False
    for token in fim.SPECIAL_TOKENS:
        at = raw.find(token)
        if at != -1 and at < cut:
            cut = at
            truncated = True
    return raw[:cut].strip(), truncated


def requests_for_chain(
    question: str, chain: StepChain, config: ExpansionConfig
) -> list[tuple[int, FimRequest]]:
    """One (gap_index, request) per gap: prefix before it, full tail after."""
    texts = chain.texts
    first = 1 if config.include_leading_gap else 2
    return [
        (i, FimRequest(question, texts[: i - 1], texts[i - 1 :]))
        for i in range(first, len(texts) + 1)
    ]


def _propose(backend: FimBackend, gap_index: int, request: FimRequest, config: ExpansionConfig) -> GapProposal:
    start = time.perf_counter()
    raw: str | None = None
    failure: str | None = None
    for _ in range(config.retry_limit + 1):
        try:
            raw = backend.fill(request)
            failure = None
            break
        except Exception as exc:
            failure = f"{type(exc).__name__}: {exc}"
    latency_ms = (time.perf_counter() - start) * 1000.0

    if raw is None:
        return GapProposal(gap_index, request.request_id, "", None, BACKEND_ERROR, latency_ms, failure)

    cleaned, truncated = clean_candidate(raw)
    if truncated and not cleaned:
        return GapProposal(gap_index, request.request_id, "", None, MALFORMED, latency_ms)

    outcome = gate(cleaned, request.suffix_steps[0], GateConfig(config.eta))
    decision = VALID if outcome.valid else INVALID
    return GapProposal(gap_index, request.request_id, cleaned, outcome.score, decision, latency_ms)


def _run_gaps(
    backend: FimBackend, gap_requests: list[tuple[int, FimRequest]], config: ExpansionConfig
) -> list[GapProposal]:
    if len(gap_requests) <= 1 or config.max_in_flight == 1:
        proposals = [_propose(backend, i, req, config) for i, req in gap_requests]
    else:
        workers = min(config.max_in_flight, len(gap_requests))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_propose, backend, i, req, config) for i, req in gap_requests]
            proposals = [f.result() for f in futures]
    return sorted(proposals, key=lambda p: p.gap_index)


def expand_chain(
    question: str,
    chain: StepChain,
    backend: FimBackend,
    config: ExpansionConfig | None = None,
) -> tuple[StepChain, ExpansionReport]:
    """One expansion pass over every gap of the chain.

    All gap requests see the incoming chain; valid candidates are then
    inserted simultaneously, so one round can at most double the gap
    count: len(output) <= 2*len(input) - 1 (one more with the leading
    gap). A one-step chain has no interior gap and returns unchanged
    unless the leading gap is enabled.
    """
    if config is None:
        config = ExpansionConfig()
    start = time.perf_counter()
    gap_requests = requests_for_chain(question, chain, config)
    proposals = _run_gaps(backend, gap_requests, config)

    accepted = {p.gap_index: p.candidate for p in proposals if p.decision == VALID}
    out_texts: list[str] = []
    for idx0, text in enumerate(chain.texts):
        if idx0 + 1 in accepted:
            out_texts.append(accepted[idx0 + 1])
        out_texts.append(text)
    expanded = StepChain.from_texts(out_texts, separator=chain.separator)

    counts = {d: 0 for d in DECISIONS}
    for p in proposals:
        counts[p.decision] += 1
    report = ExpansionReport(
        input_steps=len(chain),
        output_steps=len(expanded),
        attempted=len(proposals),
        inserted=counts[VALID],
        invalid=counts[INVALID],
        malformed=counts[MALFORMED],
        errored=counts[BACKEND_ERROR],
        elapsed_ms=(time.perf_counter() - start) * 1000.0,
        proposals=tuple(proposals),
    )
    return expanded, report


def expand_iteratively(
    question: str,
    chain: StepChain,
    backend: FimBackend,
    config: ExpansionConfig | None = None,
) -> tuple[StepChain, list[ExpansionReport]]:
    """Apply expand_chain `config.iterations` times, each round feeding the next.

    Rounds are a strict barrier: every gap of round r is decided before
    round r+1 sees the chain. All gaps are re-expanded each round; the
    gate keeps already-dense regions stable.
    """
    if config is None:
        config = ExpansionConfig()
    current = chain
    reports: list[ExpansionReport] = []
    for round_index in range(config.iterations):
        current, report = expand_chain(question, current, backend, config)
        reports.append(replace(report, iteration=round_index))
    return current, reports


def aggregate_reports(reports: Iterable[ExpansionReport]) -> ExpansionReport:
    """Sum counts across reports; proposals are dropped to bound memory."""
    totals = {"attempted": 0, "inserted": 0, "invalid": 0, "malformed": 0, "errored": 0}
    input_steps = output_steps = 0
    elapsed = 0.0
    for r in reports:
        totals["attempted"] += r.attempted
        totals["inserted"] += r.inserted
        totals["invalid"] += r.invalid
        totals["malformed"] += r.malformed
        totals["errored"] += r.errored
        input_steps += r.input_steps
        output_steps += r.output_steps
        elapsed += r.elapsed_ms
    return ExpansionReport(
        input_steps=input_steps,
        output_steps=output_steps,
        elapsed_ms=elapsed,
        **totals,
    )


def expand_records(
    records: Iterable[dict[str, Any]],
    backend: FimBackend,
    config: ExpansionConfig | None = None,
) -> Iterator[tuple[dict[str, Any], list[ExpansionReport]]]:
    """Expand a stream of `{id, question, steps}` records one at a time.

    A record that cannot be expanded (bad shape, backend misuse) is
    yielded unchanged with a zero-count report carrying the error, so a
    single poisoned record never aborts a batch run.
    """
    if config is None:
        config = ExpansionConfig()
    for row in records:
        record_id = str(row.get("id", ""))
        try:
            question = row["question"]
            chain = StepChain.from_texts(row["steps"])
            expanded, reports = expand_iteratively(question, chain, backend, config)
        except Exception as exc:
            steps = row.get("steps")
            n = len(steps) if isinstance(steps, list) else 0
            failure = ExpansionReport(
                record_id=record_id,
                input_steps=n,
                output_steps=n,
                error=f"{type(exc).__name__}: {exc}",
            )
            yield row, [failure]
            continue
        out = dict(row)
        out["steps"] = list(expanded.texts)
        yield out, [replace(r, record_id=record_id) for r in reports]


def expand_dataset(
    records: Iterable[dict[str, Any]],
    backend: FimBackend,
    config: ExpansionConfig | None = None,
) -> tuple[list[dict[str, Any]], ExpansionReport]:
    """Expand a whole corpus; returns (records in input order, aggregate report)."""
    out_records: list[dict[str, Any]] = []
    all_reports: list[ExpansionReport] = []
    input_steps = output_steps = 0
    for row, reports in expand_records(records, backend, config):
        out_records.append(row)
        all_reports.extend(reports)
        # step totals count each record once, not once per iteration round
        input_steps += reports[0].input_steps
        output_steps += reports[-1].output_steps
    aggregate = replace(
        aggregate_reports(all_reports), input_steps=input_steps, output_steps=output_steps
    )
    return out_records, aggregate
