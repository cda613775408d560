"""End-to-end stages: retrieve, answer, tune, rerank, evaluate, cost.

Every stage reads and writes plain JSON artifacts under a working directory
and routes all model and network traffic through the request cache, so a
re-run over a warm cache reproduces every artifact byte for byte and an
offline run works entirely from cache.  Stage outputs:

    cache/                      content-addressed request/response store
    index/<qid>.json            question and the URLs retrieved for it
    paragraphs/<evidence>/      ranked conditioning paragraphs per question
    candidates/<evidence>/      scored (answer, paragraph) pools per question
    calls/<evidence>/           one JSONL row per model request (token counts)
    weights.json                tuned product-of-experts weights and trace
    predictions/<name>.json     selected answer per question
    reports/<name>.json         metrics
    cost/<name>.json            compute/accuracy sweep over paragraph counts
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import chunkrank, rerank, websearch
from .cache import RequestCache, canonical_json, read_json_record, write_json_record, atomic_write_text
from .corpus import (
    CLASSIFICATION,
    GENERATION,
    PromptBank,
    QuestionRecord,
    derive_scorer_bank,
    load_bundled_bank,
    load_dataset,
    load_prompt_bank,
    split_heldout,
)
from .evaluation import (
    DEFAULT_RECALL_KS,
    EvalReport,
    evaluate_predictions,
    exact_match,
    label_match,
    load_stopwords,
)
from .lmbackend import GenerationParams, LMBackend, ScoringUnsupported, flops_for_tokens, softmax_scores
from .prompting import RenderedPrompt, fit_to_context, render_closed_book_prompt, render_prompt, render_qa_prompt

logger = logging.getLogger(__name__)

SEARCH = "search"
GOLD = "gold"
CLOSED = "closed"
EVIDENCE_MODES = (SEARCH, GOLD, CLOSED)

DEFAULT_COST_POINTS = (0, 1, 5, 10, 20, 50)
CLOSED_PARAGRAPH_INDEX = -1


class ConfigError(ValueError):
    """Bad run configuration: unusable dataset, flags, or banks."""


class PartialFailure(RuntimeError):
    """More than the tolerated share of questions failed a stage."""

    def __init__(self, failed: dict[str, str], total: int):
        self.failed = failed
        self.total = total
        super().__init__(f"{len(failed)}/{total} questions failed")


def _log(p: float) -> float:
    return math.log(max(p, rerank.PRIOR_FLOOR))


@dataclass(frozen=True)
class PipelineConfig:
    dataset_path: str
    dataset_id: str
    workdir: str
    evidence: str = SEARCH
    scorer: str = rerank.POE
    poe_weights: tuple[float, float, float, float, float] | None = None
    num_urls: int = websearch.DEFAULT_TOP_URLS
    chunk_sentences: int = chunkrank.DEFAULT_CHUNK_SENTENCES
    top_paragraphs: int = chunkrank.DEFAULT_TOP_PARAGRAPHS
    samples_per_paragraph: int = 4
    closed_book_samples: int = 200
    nucleus_p: float = 0.8
    temperature: float = 1.0
    max_new_tokens: int = 64
    stop: tuple[str, ...] = ("\n",)
    heldout_fraction: float = 0.1
    seed: int = 0
    offline: bool = False
    max_workers: int = 8
    cost_points: tuple[int, ...] = DEFAULT_COST_POINTS
    context_tokens: int | None = None
    recall_ks: tuple[int, ...] = DEFAULT_RECALL_KS
    banks_dir: str | None = None

    def __post_init__(self):
        if self.evidence not in EVIDENCE_MODES:
            raise ConfigError(f"unknown evidence mode {self.evidence!r}")
        if self.scorer not in rerank.SCORERS:
            raise ConfigError(f"unknown scorer {self.scorer!r}")
        for name in ("num_urls", "chunk_sentences", "top_paragraphs",
                     "samples_per_paragraph", "closed_book_samples", "max_workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0.0 < self.heldout_fraction < 1.0:
            raise ConfigError("heldout_fraction must be in (0, 1)")


def stable_seed(*parts) -> int:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


class Pipeline:
    def __init__(self, config: PipelineConfig, backend: LMBackend, search_client=None):
        self.config = config
        self.backend = backend
        self.search_client = search_client
        self.workdir = Path(config.workdir)
        self.cache = RequestCache(self.workdir / "cache")
        try:
            self.records = load_dataset(config.dataset_path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load dataset: {exc}") from None
        if not self.records:
            raise ConfigError(f"dataset {config.dataset_path} is empty")
        if config.evidence == GOLD:
            missing = [r.id for r in self.records if not r.gold_evidence]
            if missing:
                raise ConfigError(
                    f"gold evidence mode needs gold_evidence on every record; "
                    f"{len(missing)} records lack it, first: {missing[0]}"
                )
        self.failed: dict[str, str] = {}
        self._banks: dict[str, PromptBank] = {}
        self.stopwords = load_stopwords()
        descriptor = backend.describe()
        if not descriptor.can_score and config.evidence != CLOSED:
            raise ConfigError(
                f"backend {descriptor.name!r} cannot score continuations; "
                "only closed evidence mode works without scoring"
            )
        self.context_tokens = config.context_tokens or descriptor.context_tokens
        self.param_count = descriptor.param_count
        main, heldout = split_heldout(self.records, config.heldout_fraction, config.seed)
        self.main_records = main
        self.heldout_records = heldout

    # --- banks --------------------------------------------------------------

    def bank(self, kind: str) -> PromptBank:
        if kind in self._banks:
            return self._banks[kind]
        dataset_id = self.config.dataset_id
        bank = None
        if self.config.banks_dir:
            path = Path(self.config.banks_dir) / f"{dataset_id}_{kind}.txt"
            if path.is_file():
                bank = load_prompt_bank(path)
        if bank is None:
            bank = load_bundled_bank(dataset_id, kind)
        if bank is None:
            if kind == "qa":
                raise ConfigError(
                    f"no qa prompt bank for dataset {dataset_id!r}; "
                    f"ship one or pass a banks directory"
                )
            bank = derive_scorer_bank(self.bank("qa"), kind)
        if bank.kind != kind:
            raise ConfigError(f"bank for {kind!r} declares kind {bank.kind!r}")
        self._banks[kind] = bank
        return bank

    # --- paths --------------------------------------------------------------

    def _qpath(self, stage: str, sub: str, qid: str, ext: str = "json") -> Path:
        return self.workdir / stage / sub / f"{qid}.{ext}"

    def prediction_name(self, scorer: str | None = None) -> str:
        if self.config.evidence == CLOSED:
            return f"closed_{rerank.ANSWER_PROB}"
        return f"{self.config.evidence}_{scorer or self.config.scorer}"

    # --- bookkeeping --------------------------------------------------------

    def _active(self, records: list[QuestionRecord]) -> list[QuestionRecord]:
        return [r for r in records if r.id not in self.failed]

    def _map_questions(self, records: list[QuestionRecord], worker, stage: str) -> None:
        def guarded(record):
            try:
                worker(record)
            except Exception as exc:
                logger.warning("%s failed for %s: %s", stage, record.id, exc)
                return record.id, f"{stage}: {exc}"
            return None

        with ThreadPoolExecutor(max_workers=self.config.max_workers) as pool:
            for outcome in pool.map(guarded, records):
                if outcome is not None:
                    qid, message = outcome
                    self.failed[qid] = message

    def check_failures(self) -> None:
        if not self.failed:
            return
        rate = len(self.failed) / len(self.records)
        if rate > 0.1:
            raise PartialFailure(self.failed, len(self.records))
        logger.warning("continuing despite %d/%d failed questions", len(self.failed), len(self.records))

    # --- model call helpers -------------------------------------------------

    def _sample(self, log: list, qid: str, purpose: str, paragraph_index: int | None,
                prompt_text: str, params: GenerationParams, seed: int):
        samples = self.backend.sample(prompt_text, params, seed)
        log.append({
            "question_id": qid,
            "purpose": purpose,
            "paragraph_index": paragraph_index,
            "prompt_tokens": self.backend.count_tokens(prompt_text),
            "generated_tokens": sum(self.backend.count_tokens(s.text) for s in samples),
        })
        return samples

    def _score(self, log: list, qid: str, purpose: str, paragraph_index: int | None,
               prompt_text: str, continuation: str) -> float:
        value = self.backend.score(prompt_text, continuation)
        log.append({
            "question_id": qid,
            "purpose": purpose,
            "paragraph_index": paragraph_index,
            "prompt_tokens": self.backend.count_tokens(prompt_text),
            "generated_tokens": self.backend.count_tokens(continuation),
        })
        return value

    def _fit(self, prompt: RenderedPrompt, reserved_tokens: int) -> RenderedPrompt:
        return fit_to_context(
            prompt, self.backend.count_tokens,
            context_tokens=self.context_tokens, reserved_tokens=reserved_tokens,
        )

    def _fit_for_continuation(self, prompt: RenderedPrompt, continuation: str) -> RenderedPrompt:
        return self._fit(prompt, self.backend.count_tokens(continuation))

    # --- retrieve -----------------------------------------------------------

    def stage_retrieve(self) -> None:
        """Build ranked conditioning paragraphs for every question."""
        if self.config.evidence == CLOSED:
            return
        if self.config.evidence == SEARCH and self.search_client is None:
            raise ConfigError("search evidence mode needs a search client")

        def worker(record: QuestionRecord) -> None:
            if self.config.evidence == GOLD:
                paragraphs = [
                    chunkrank.EvidenceParagraph(source_url=f"gold:{record.id}", ordinal=i,
                                                sentences=(text,))
                    for i, text in enumerate(record.gold_evidence)
                ]
            else:
                documents = websearch.retrieve_documents(
                    record.question, self.search_client, self.cache,
                    num_urls=self.config.num_urls, offline=self.config.offline,
                )
                write_json_record(self._qpath("index", "questions", record.id), {
                    "question_id": record.id,
                    "question": record.question,
                    "urls": [d.url for d in documents],
                })
                paragraphs = []
                for doc in documents:
                    paragraphs.extend(chunkrank.chunk(
                        doc.clean_text, source_url=doc.url, size=self.config.chunk_sentences,
                    ))
            if not paragraphs:
                write_json_record(self._qpath("paragraphs", self.config.evidence, record.id), {
                    "question_id": record.id, "paragraphs": [],
                })
                return
            ranked = chunkrank.rank_paragraphs(record.question, paragraphs, n=self.config.top_paragraphs)
            write_json_record(self._qpath("paragraphs", self.config.evidence, record.id), {
                "question_id": record.id,
                "paragraphs": [
                    {
                        "url": r.paragraph.source_url,
                        "ordinal": r.paragraph.ordinal,
                        "text": r.paragraph.text,
                        "cosine": r.cosine,
                        "prior": r.prior,
                    }
                    for r in ranked
                ],
            })

        self._map_questions(self._active(self.records), worker, "retrieve")

    def load_paragraphs(self, qid: str) -> list[dict]:
        path = self._qpath("paragraphs", self.config.evidence, qid)
        if not path.exists():
            raise ConfigError(f"no paragraphs artifact for {qid}; run retrieve first")
        return read_json_record(path)["paragraphs"]

    # --- answer (candidate generation and scoring) --------------------------

    def _generation_params(self, n_samples: int) -> GenerationParams:
        return GenerationParams(
            nucleus_p=self.config.nucleus_p,
            temperature=self.config.temperature,
            max_new_tokens=self.config.max_new_tokens,
            stop=self.config.stop,
            n_samples=n_samples,
        )

    def _open_pool_for(self, record: QuestionRecord, log: list) -> list[dict]:
        """Sample candidates per paragraph and attach all rerank scores."""
        paragraphs = self.load_paragraphs(record.id)
        question = record.question
        qa_bank = self.bank("qa")
        q_ap_bank = self.bank("q_given_ap")
        q_p_bank = self.bank("q_given_p")
        a_p_bank = self.bank("a_given_p")
        q_cont = " " + question
        pool: list[dict] = []
        for i, para in enumerate(paragraphs):
            text = para["text"]
            qa_prompt = self._fit(
                render_qa_prompt(qa_bank, question, text), self.config.max_new_tokens
            )
            if record.task == GENERATION:
                params = self._generation_params(self.config.samples_per_paragraph)
                samples = self._sample(
                    log, record.id, "sample_answer", i, qa_prompt.text,
                    params, stable_seed(self.config.seed, record.id, "answer", i),
                )
                by_canon: dict[str, tuple[str, float]] = {}
                for s in samples:
                    stripped = s.text.strip()
                    if not stripped:
                        continue
                    canon = " ".join(stripped.split())
                    if canon not in by_canon or s.logprob > by_canon[canon][1]:
                        by_canon[canon] = (stripped, s.logprob)
                candidates = [(text_, lp) for text_, lp in by_canon.values()]
            else:
                scores = {
                    label: self._score(
                        log, record.id, "label_answer", i, qa_prompt.text, " " + label
                    )
                    for label in record.label_set
                }
                dist = softmax_scores(scores)
                candidates = [(label, _log(dist[label])) for label in record.label_set]

            if not candidates:
                continue

            q_p_prompt = self._fit_for_continuation(
                render_prompt(q_p_bank, evidence=text), q_cont
            )
            lp_q_p = self._score(log, record.id, "score_q_given_p", i, q_p_prompt.text, q_cont)

            a_p_dist = None
            if record.task == CLASSIFICATION:
                a_p_prompt_cls = self._fit(render_prompt(a_p_bank, evidence=text), self.config.max_new_tokens)
                a_p_scores = {
                    label: self._score(
                        log, record.id, "label_a_given_p", i, a_p_prompt_cls.text, " " + label
                    )
                    for label in record.label_set
                }
                a_p_dist = softmax_scores(a_p_scores)

            for answer_text, lp_a_qp in candidates:
                q_ap_prompt = self._fit_for_continuation(
                    render_prompt(q_ap_bank, evidence=text, answer=answer_text), q_cont
                )
                lp_q_ap = self._score(
                    log, record.id, "score_q_given_ap", i, q_ap_prompt.text, q_cont
                )
                if a_p_dist is not None:
                    lp_a_p = _log(a_p_dist[answer_text])
                else:
                    a_cont = " " + answer_text
                    a_p_prompt = self._fit_for_continuation(
                        render_prompt(a_p_bank, evidence=text), a_cont
                    )
                    lp_a_p = self._score(
                        log, record.id, "score_a_given_p", i, a_p_prompt.text, a_cont
                    )
                pool.append({
                    "text": answer_text,
                    "paragraph_index": i,
                    "lp_a_qp": lp_a_qp,
                    "lp_q_ap": lp_q_ap,
                    "lp_a_p": lp_a_p,
                    "lp_q_p": lp_q_p,
                    "lp_prior": rerank.log_prior(para["prior"]),
                })
        return pool

    def _closed_pool_for(self, record: QuestionRecord, log: list) -> list[dict]:
        qa_bank = self.bank("qa")
        prompt = self._fit(
            render_closed_book_prompt(qa_bank, record.question), self.config.max_new_tokens
        )
        pool: list[dict] = []
        if record.task == GENERATION:
            params = self._generation_params(self.config.closed_book_samples)
            samples = self._sample(
                log, record.id, "sample_closed", None, prompt.text,
                params, stable_seed(self.config.seed, record.id, "closed"),
            )
            by_canon: dict[str, tuple[str, float]] = {}
            for s in samples:
                stripped = s.text.strip()
                if not stripped:
                    continue
                canon = " ".join(stripped.split())
                if canon not in by_canon or s.logprob > by_canon[canon][1]:
                    by_canon[canon] = (stripped, s.logprob)
            entries = by_canon.values()
        else:
            scores = {
                label: self._score(
                    log, record.id, "label_closed", None, prompt.text, " " + label
                )
                for label in record.label_set
            }
            dist = softmax_scores(scores)
            entries = [(label, _log(dist[label])) for label in record.label_set]
        for answer_text, lp in entries:
            pool.append({
                "text": answer_text,
                "paragraph_index": CLOSED_PARAGRAPH_INDEX,
                "lp_a_qp": lp,
                "lp_q_ap": 0.0,
                "lp_a_p": 0.0,
                "lp_q_p": 0.0,
                "lp_prior": 0.0,
            })
        return pool

    def _write_pool(self, source: str, record: QuestionRecord, build) -> None:
        log: list[dict] = []
        pool = build(record, log)
        write_json_record(self._qpath("candidates", source, record.id), {
            "question_id": record.id, "pool": pool,
        })
        atomic_write_text(
            self._qpath("calls", source, record.id, ext="jsonl"),
            "".join(canonical_json(entry) + "\n" for entry in log),
        )

    def stage_answer(self) -> None:
        """Open-book candidate pools for the configured evidence mode."""
        if self.config.evidence == CLOSED:
            return
        source = self.config.evidence
        self._map_questions(
            self._active(self.records),
            lambda record: self._write_pool(source, record, self._open_pool_for),
            "answer",
        )

    def stage_closed(self) -> None:
        """Closed-book pools; also the zero-paragraph row of the cost sweep."""
        self._map_questions(
            self._active(self.records),
            lambda record: self._write_pool(CLOSED, record, self._closed_pool_for),
            "closed",
        )

    # --- pools and selection ------------------------------------------------

    def load_pool(self, source: str, qid: str) -> rerank.Pool:
        path = self._qpath("candidates", source, qid)
        if not path.exists():
            raise ConfigError(f"no candidate pool for {qid} under {source!r}; run answer first")
        entries = read_json_record(path)["pool"]
        return [
            (
                rerank.CandidateAnswer(text=e["text"], paragraph_index=int(e["paragraph_index"])),
                rerank.ScoreBundle(
                    lp_a_qp=float(e["lp_a_qp"]),
                    lp_q_ap=float(e["lp_q_ap"]),
                    lp_a_p=float(e["lp_a_p"]),
                    lp_q_p=float(e["lp_q_p"]),
                    lp_prior=float(e["lp_prior"]),
                ),
            )
            for e in entries
        ]

    def _reward_fn(self, record: QuestionRecord):
        if record.task == GENERATION:
            return lambda answer: exact_match(answer.text, record.answers)
        return lambda answer: label_match(answer.text, record.gold_label)

    def stage_tune(self) -> rerank.TuneResult | None:
        """Tune product-of-experts weights on the held-out split."""
        if self.config.evidence == CLOSED or self.config.scorer != rerank.POE:
            return None
        if self.config.poe_weights is not None:
            return None
        instances = []
        for record in self._active(self.heldout_records):
            pool = self.load_pool(self.config.evidence, record.id)
            if pool:
                instances.append((pool, self._reward_fn(record)))
        if not instances:
            logger.warning("no held-out pools to tune on; keeping default weights")
            return None
        result = rerank.tune_weights(instances)
        write_json_record(self.workdir / "weights.json", {
            "evidence": self.config.evidence,
            "heldout_ids": [r.id for r in self.heldout_records],
            **result.to_json(),
        })
        return result

    def resolve_weights(self) -> tuple[float, float, float, float, float]:
        if self.config.poe_weights is not None:
            return tuple(self.config.poe_weights)
        path = self.workdir / "weights.json"
        if path.exists():
            stored = read_json_record(path)
            return tuple(float(w) for w in stored["weights"])
        return rerank.DEFAULT_WEIGHTS

    def _paragraph_text(self, qid: str, paragraph_index: int) -> str | None:
        if paragraph_index == CLOSED_PARAGRAPH_INDEX:
            return None
        return self.load_paragraphs(qid)[paragraph_index]["text"]

    def stage_rerank(self) -> Path:
        """Select one answer per question and write the predictions artifact."""
        if self.config.evidence == CLOSED:
            source, scorer = CLOSED, rerank.ANSWER_PROB
            config = rerank.RerankConfig(scorer=scorer)
        else:
            source, scorer = self.config.evidence, self.config.scorer
            config = rerank.RerankConfig(
                scorer=scorer,
                poe_weights=self.resolve_weights() if scorer == rerank.POE else rerank.DEFAULT_WEIGHTS,
            )
        predictions: dict[str, dict] = {}
        for record in self._active(self.records):
            pool = self.load_pool(source, record.id)
            if not pool and source != CLOSED:
                # no usable evidence; fall back to the closed-book answer
                pool = self.load_pool(CLOSED, record.id)
                selection = rerank.select_answer(pool, rerank.RerankConfig(scorer=rerank.ANSWER_PROB))
            elif not pool:
                raise ConfigError(f"empty candidate pool for {record.id}")
            else:
                selection = rerank.select_answer(pool, config)
            predictions[record.id] = {
                "answer": selection.answer.text,
                "paragraph_index": selection.answer.paragraph_index,
                "paragraph_text": self._paragraph_text(record.id, selection.answer.paragraph_index)
                if source != CLOSED else None,
                "score": selection.score,
                "n_pairs": selection.n_pairs,
                "n_answers": selection.n_answers,
            }
        name = self.prediction_name(scorer)
        path = self.workdir / "predictions" / f"{name}.json"
        write_json_record(path, {
            "dataset_id": self.config.dataset_id,
            "evidence": source,
            "scorer": scorer,
            "poe_weights": list(config.poe_weights) if scorer == rerank.POE else None,
            "predictions": predictions,
        })
        return path

    # --- evaluation ---------------------------------------------------------

    def stage_eval(self, predictions_path: Path | None = None) -> EvalReport:
        """Score predictions over the non-held-out split and write the report."""
        name = self.prediction_name()
        path = predictions_path or (self.workdir / "predictions" / f"{name}.json")
        if not path.exists():
            raise ConfigError(f"no predictions at {path}; run rerank first")
        stored = read_json_record(path)
        predictions = stored["predictions"]
        records = [r for r in self._active(self.main_records) if r.id in predictions]
        if not records:
            raise ConfigError("no evaluable questions (all failed or held out)")
        paragraphs = None
        if stored["evidence"] != CLOSED:
            paragraphs = {}
            for record in records:
                paragraphs[record.id] = [p["text"] for p in self.load_paragraphs(record.id)]
        report = evaluate_predictions(
            self.config.dataset_id, records, predictions, paragraphs,
            self.stopwords, recall_ks=self.config.recall_ks,
        )
        write_json_record(self.workdir / "reports" / f"{Path(path).stem}.json", report.to_json())
        return report

    # --- cost ---------------------------------------------------------------

    def _log_entries(self, source: str, qid: str) -> list[dict]:
        path = self._qpath("calls", source, qid, ext="jsonl")
        if not path.exists():
            return []
        entries = []
        with open(path, encoding="utf-8") as fp:
            for line in fp:
                line = line.strip()
                if line:
                    entries.append(json.loads(line))
        return entries

    def _tokens_for(self, entries: list[dict], max_paragraphs: int | None) -> tuple[int, int]:
        prompt = 0
        generated = 0
        for entry in entries:
            idx = entry["paragraph_index"]
            if max_paragraphs is not None and (idx is None or idx >= max_paragraphs):
                continue
            prompt += int(entry["prompt_tokens"])
            generated += int(entry["generated_tokens"])
        return prompt, generated

    def stage_cost(self) -> list[dict]:
        """Accuracy versus compute as the number of conditioning paragraphs grows.

        Row 0 is the closed-book model; row m reranks only candidates from the
        first m paragraphs and counts only the model calls those required.
        """
        eval_records = self._active(self.main_records)
        if not eval_records:
            raise ConfigError("no questions left for the cost sweep")
        scorer = rerank.ANSWER_PROB if self.config.evidence == CLOSED else self.config.scorer
        config = rerank.RerankConfig(
            scorer=scorer,
            poe_weights=self.resolve_weights() if scorer == rerank.POE else rerank.DEFAULT_WEIGHTS,
        )
        points = sorted({m for m in self.config.cost_points if 0 <= m <= self.config.top_paragraphs})
        if self.config.evidence == CLOSED:
            points = [0]
        rows = []
        for m in points:
            correct = []
            prompt_tokens = 0
            generated_tokens = 0
            for record in eval_records:
                reward = self._reward_fn(record)
                if m == 0:
                    pool = self.load_pool(CLOSED, record.id)
                    selection = rerank.select_answer(
                        pool, rerank.RerankConfig(scorer=rerank.ANSWER_PROB)
                    )
                    entries = self._log_entries(CLOSED, record.id)
                    p_tok, g_tok = self._tokens_for(entries, None)
                else:
                    full = self.load_pool(self.config.evidence, record.id)
                    pool = [(a, b) for a, b in full if a.paragraph_index < m]
                    if pool:
                        selection = rerank.select_answer(pool, config)
                    else:
                        selection = rerank.select_answer(
                            self.load_pool(CLOSED, record.id),
                            rerank.RerankConfig(scorer=rerank.ANSWER_PROB),
                        )
                    entries = self._log_entries(self.config.evidence, record.id)
                    p_tok, g_tok = self._tokens_for(entries, m)
                correct.append(reward(selection.answer))
                prompt_tokens += p_tok
                generated_tokens += g_tok
            total = prompt_tokens + generated_tokens
            rows.append({
                "paragraphs": m,
                "prompt_tokens": prompt_tokens,
                "generated_tokens": generated_tokens,
                "total_tokens": total,
                "flops": flops_for_tokens(self.param_count, total),
                "metric": sum(correct) / len(correct),
            })
        name = self.prediction_name(scorer)
        write_json_record(self.workdir / "cost" / f"{name}.json", {
            "dataset_id": self.config.dataset_id,
            "evidence": self.config.evidence,
            "scorer": scorer,
            "param_count": self.param_count,
            "n_questions": len(eval_records),
            "rows": rows,
        })
        return rows

    # --- orchestration ------------------------------------------------------

    def run(self) -> EvalReport:
        """All stages in order; raises :class:`PartialFailure` at >10% failures."""
        self.stage_retrieve()
        self.stage_answer()
        self.stage_closed()
        self.stage_tune()
        predictions_path = self.stage_rerank()
        report = self.stage_eval(predictions_path)
        self.stage_cost()
        self.check_failures()
        return report
