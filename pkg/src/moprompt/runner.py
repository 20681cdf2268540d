"""The generational loop and experiment driver.

A run evolves a population of prompts under a (mu + lambda) scheme: every
generation draws parent pairs, applies crossover then mutation, generates
and scores one text per offspring, and selects mu survivors from parents
plus offspring. An experiment repeats the run with shifted seeds and writes
a fully reproducible output tree: per-generation population records, a
hypervolume series per repetition, the final Pareto front, and a summary.
"""

from __future__ import annotations

import json
import logging
import os
import random
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import variation
from .backends import (
    BackendError,
    BackendPolicy,
    Backends,
    CLASSIFIER_TOKEN_ENV,
    CLASSIFIER_URL_ENV,
    HttpEmotionClassifier,
    LLM_URL_ENV,
    LlmSettings,
    MockEmotionClassifier,
    MockTextGenerator,
    OllamaClient,
    load_lexicons,
)
from .domain import (
    FitnessPoint,
    GeneratedText,
    Individual,
    ObjectivePair,
    OperatorRecord,
    Population,
    Prompt,
    extract_fitness,
)
from .moea import (
    DEFAULT_REFERENCE,
    hypervolume_2d,
    nondominated_sort,
    nsga2_select,
    sms_emoa_select,
)

logger = logging.getLogger(__name__)

SELECTORS = ("nsga2", "sms_emoa")
HV_MODES = ("greedy", "exact")
BACKEND_KINDS = ("mock", "live")

# ten plain story instructions used to found the initial population; any
# list of at least mu prompts can replace them through the config
DEFAULT_SEED_PROMPTS = tuple(
    Prompt(text)
    for text in (
        "provide a 3 sentence story",
        "write a 3 sentence story",
        "tell a short story in three sentences",
        "compose a three sentence tale",
        "create a brief story of exactly three sentences",
        "narrate a small story using three sentences",
        "produce a three sentence short story",
        "share a tiny story told in three sentences",
        "invent a story that spans three sentences",
        "craft a concise three sentence story",
    )
)


@dataclass(frozen=True)
class BackendConfig:
    """Which backends a run talks to and how."""

    kind: str = "mock"
    llm: LlmSettings = field(default_factory=LlmSettings)
    llm_base_url: str | None = None
    classifier_base_url: str | None = None
    classifier_token: str | None = None
    policy: BackendPolicy = field(default_factory=BackendPolicy)
    lexicon_file: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in BACKEND_KINDS:
            raise ValueError(f"backend kind must be one of {BACKEND_KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs, with defaults matching the reference setup."""

    pair: ObjectivePair
    mu: int = 10
    lam: int = 20
    generations: int = 30
    repetitions: int = 10
    selector: str = "nsga2"
    hv_mode: str = "greedy"
    seed: int = 0
    seed_prompts: tuple[Prompt, ...] = DEFAULT_SEED_PROMPTS
    backend: BackendConfig = field(default_factory=BackendConfig)
    out_dir: str = "runs"
    operators_file: str | None = None

    def __post_init__(self) -> None:
        if self.mu < 1:
            raise ValueError("mu must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.selector not in SELECTORS:
            raise ValueError(f"selector must be one of {SELECTORS}, got {self.selector!r}")
        if self.hv_mode not in HV_MODES:
            raise ValueError(f"hv_mode must be one of {HV_MODES}, got {self.hv_mode!r}")
        if len(self.seed_prompts) < self.mu:
            raise ValueError(
                f"need at least mu={self.mu} seed prompts, got {len(self.seed_prompts)}"
            )


@dataclass(frozen=True)
class GenerationRecord:
    """Snapshot of one generation's surviving population."""

    generation_index: int
    population: Population
    hypervolume: float
    fallback_count: int
    wall_time: float


@dataclass(frozen=True)
class RepetitionResult:
    repetition: int
    status: str
    final_hypervolume: float | None = None
    max_hypervolume: float | None = None
    error: str | None = None


@dataclass(frozen=True)
class RunSummary:
    pair: ObjectivePair
    selector: str
    results: tuple[RepetitionResult, ...]
    final_stats: dict | None
    running_max_stats: dict | None
    out_dir: str

    @property
    def successes(self) -> int:
        return sum(1 for r in self.results if r.status == "ok")


def derive_rng(*parts) -> random.Random:
    """A reproducible generator keyed on a path of seed components."""
    return random.Random(":".join(str(p) for p in parts))


def build_backends(config: RunConfig) -> Backends:
    """Instantiate the generator/classifier pair the config asks for.

    Live URLs come from the config or the EMO_LLM_URL / EMO_CLF_URL
    environment variables; EMO_CLF_TOKEN supplies an optional bearer token.
    """
    bc = config.backend
    if bc.kind == "mock":
        lexicons = load_lexicons(bc.lexicon_file) if bc.lexicon_file else None
        return Backends(
            generator=MockTextGenerator(seed=config.seed),
            classifier=MockEmotionClassifier(lexicons=lexicons),
        )
    llm_url = bc.llm_base_url or os.environ.get(LLM_URL_ENV)
    clf_url = bc.classifier_base_url or os.environ.get(CLASSIFIER_URL_ENV)
    if not llm_url:
        raise ValueError(f"live backend needs llm.base_url or {LLM_URL_ENV}")
    if not clf_url:
        raise ValueError(f"live backend needs classifier.base_url or {CLASSIFIER_URL_ENV}")
    token = bc.classifier_token or os.environ.get(CLASSIFIER_TOKEN_ENV)
    return Backends(
        generator=OllamaClient(llm_url, policy=bc.policy),
        classifier=HttpEmotionClassifier(clf_url, token=token, policy=bc.policy),
    )


def _load_suite(config: RunConfig) -> variation.OperatorSuite:
    if config.operators_file:
        return variation.load_operator_suite(config.operators_file)
    return variation.OperatorSuite()


def _count_fallbacks(individuals) -> int:
    return sum(
        1 for ind in individuals for record in ind.operator_trace if record.fallback
    )


def initialize(
    config: RunConfig,
    backends: Backends,
    suite: variation.OperatorSuite | None = None,
) -> Population:
    """Found the population from the first mu seed prompts.

    Each seed prompt is generated from and scored once. Classifier failures
    here are unrecoverable and abort the run; a generation failure scores an
    empty text like anywhere else.
    """
    suite = suite or _load_suite(config)
    members = []
    for k in range(config.mu):
        prompt = config.seed_prompts[k]
        text, gen_record = variation.generate_text(
            prompt, backends.generator, suite=suite, llm=config.backend.llm
        )
        scores = backends.classifier.classify_emotions(text)
        fitness = extract_fitness(scores, config.pair)
        members.append(
            Individual(
                prompt=prompt,
                text=text,
                fitness=fitness,
                id=k,
                parent_ids=(),
                operator_trace=(gen_record,),
            )
        )
    return Population(tuple(members))


def produce_offspring(
    parents: Population,
    count: int,
    backends: Backends,
    rng_seed: int,
    config: RunConfig,
    suite: variation.OperatorSuite | None = None,
    generation: int = 1,
    id_start: int = 0,
) -> list[Individual]:
    """Produce count offspring from the parent population.

    Each offspring draws its own rng stream from (rng_seed, generation,
    offspring index), picks two distinct parents uniformly, and runs the
    crossover, mutation, generation, scoring pipeline. A scoring failure
    downgrades the offspring to fitness (0, 0) instead of aborting. The
    pipelines are independent, so they run on a small thread pool sized by
    the backend policy; results keep offspring-index order either way.
    """
    if len(parents) < 2:
        raise ValueError("offspring production needs at least two parents")
    if count <= 0:
        return []
    suite = suite or _load_suite(config)
    parent_list = list(parents)

    def make(index: int) -> Individual:
        rng = derive_rng(rng_seed, "g", generation, "o", index)
        ia, ib = rng.sample(range(len(parent_list)), 2)
        parent_a, parent_b = parent_list[ia], parent_list[ib]
        child, cross_record = variation.crossover(
            parent_a.prompt, parent_b.prompt, backends.generator, rng,
            suite=suite, llm=config.backend.llm,
        )
        mutated, mut_record = variation.mutate(
            child, backends.generator, rng, suite=suite, llm=config.backend.llm
        )
        text, gen_record = variation.generate_text(
            mutated, backends.generator, suite=suite, llm=config.backend.llm
        )
        trace = [cross_record, mut_record, gen_record]
        try:
            scores = backends.classifier.classify_emotions(text)
            fitness = extract_fitness(scores, config.pair)
        except BackendError as exc:
            logger.warning("eval_failed for offspring %d: %s", id_start + index, exc)
            fitness = FitnessPoint(0.0, 0.0)
            trace.append(OperatorRecord(kind="evaluation", fallback=True))
        return Individual(
            prompt=mutated,
            text=text,
            fitness=fitness,
            id=id_start + index,
            parent_ids=(parent_a.id, parent_b.id),
            operator_trace=tuple(trace),
        )

    workers = min(count, max(1, config.backend.policy.max_concurrent_requests))
    if workers == 1:
        return [make(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(make, range(count)))


def step(
    parents: Population,
    config: RunConfig,
    backends: Backends,
    rng_seed: int,
    generation: int,
    suite: variation.OperatorSuite | None = None,
) -> tuple[Population, GenerationRecord]:
    """Advance one generation: lambda offspring, then survivor selection
    over parents plus offspring."""
    started = time.perf_counter()
    suite = suite or _load_suite(config)
    id_start = config.mu + (generation - 1) * config.lam
    offspring = produce_offspring(
        parents, config.lam, backends, rng_seed,
        config=config, suite=suite, generation=generation, id_start=id_start,
    )
    candidates = list(parents) + offspring
    points = [c.fitness for c in candidates]
    if config.selector == "nsga2":
        outcome = nsga2_select(points, config.mu)
        survivors = tuple(
            candidates[i].with_selection(rank=outcome.ranks[i], crowding=outcome.diagnostics[i])
            for i in outcome.selected
        )
    else:
        outcome = sms_emoa_select(points, config.mu, DEFAULT_REFERENCE, config.hv_mode)
        survivors = tuple(
            candidates[i].with_selection(rank=outcome.ranks[i], contribution=outcome.diagnostics[i])
            for i in outcome.selected
        )
    population = Population(survivors)
    record = GenerationRecord(
        generation_index=generation,
        population=population,
        hypervolume=hypervolume_2d(population.fitness_points(), DEFAULT_REFERENCE),
        fallback_count=_count_fallbacks(offspring),
        wall_time=time.perf_counter() - started,
    )
    return population, record


def individual_to_dict(ind: Individual) -> dict:
    return {
        "id": ind.id,
        "prompt": ind.prompt.text,
        "text": ind.text.text,
        "fitness": [ind.fitness.f1, ind.fitness.f2],
        "rank": ind.rank,
        "crowding": ind.crowding,
        "contribution": ind.contribution,
        "parent_ids": list(ind.parent_ids),
        "operator_trace": [
            {
                "kind": record.kind,
                "instruction_id": record.instruction_id,
                "fallback": record.fallback,
                "raw_output": record.raw_output,
            }
            for record in ind.operator_trace
        ],
    }


def individual_from_dict(data: dict) -> Individual:
    return Individual(
        prompt=Prompt(data["prompt"]),
        text=GeneratedText(data["text"]),
        fitness=FitnessPoint(*data["fitness"]),
        id=data["id"],
        parent_ids=tuple(data["parent_ids"]),
        operator_trace=tuple(
            OperatorRecord(
                kind=r["kind"],
                instruction_id=r.get("instruction_id"),
                fallback=r.get("fallback", False),
                raw_output=r.get("raw_output", ""),
            )
            for r in data.get("operator_trace", ())
        ),
        rank=data.get("rank"),
        crowding=data.get("crowding"),
        contribution=data.get("contribution"),
    )


def _write_generation(rep_dir: Path, record: GenerationRecord) -> None:
    path = rep_dir / f"gen_{record.generation_index}.jsonl"
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for ind in record.population:
            handle.write(json.dumps(individual_to_dict(ind), ensure_ascii=False))
            handle.write("\n")


def _write_hypervolume_series(rep_dir: Path, records: list[GenerationRecord]) -> None:
    with open(rep_dir / "hypervolume.csv", "w", encoding="utf-8", newline="\n") as handle:
        handle.write("generation,hypervolume,fallback_count\n")
        for record in records:
            handle.write(
                f"{record.generation_index},{record.hypervolume!r},{record.fallback_count}\n"
            )


def _write_pareto_front(
    rep_dir: Path, config: RunConfig, repetition: int, final: Population
) -> None:
    fronts = nondominated_sort(final.fitness_points())
    front0 = fronts[0].indices if fronts else ()
    payload = {
        "pair": config.pair.slug,
        "selector": config.selector,
        "repetition": repetition,
        "individuals": [individual_to_dict(final[i]) for i in front0],
    }
    with open(rep_dir / "pareto_front.json", "w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, ensure_ascii=False, indent=2)
        handle.write("\n")


def _stats(values: list[float]) -> dict:
    return {
        "best": max(values),
        "worst": min(values),
        "mean": statistics.fmean(values),
        "std_dev": statistics.stdev(values) if len(values) >= 2 else 0.0,
    }


def run_experiment(
    config: RunConfig,
    backends: Backends,
    progress=None,
) -> RunSummary:
    """Run every repetition and write the output tree.

    Repetition r runs with seed config.seed + r. A failed repetition is
    recorded and excluded from the statistics without stopping the others.
    progress, when given, is called as progress(repetition, record) after
    every recorded generation. The summary reports the final-generation
    hypervolume statistics and, separately, statistics over each
    repetition's running maximum.
    """
    suite = _load_suite(config)
    run_dir = Path(config.out_dir) / config.pair.slug / config.selector
    run_dir.mkdir(parents=True, exist_ok=True)
    results: list[RepetitionResult] = []
    for rep in range(config.repetitions):
        rep_seed = config.seed + rep
        rep_dir = run_dir / f"rep_{rep}"
        try:
            series = _run_repetition(config, backends, suite, rep, rep_seed, rep_dir, progress)
            results.append(
                RepetitionResult(
                    repetition=rep,
                    status="ok",
                    final_hypervolume=series[-1],
                    max_hypervolume=max(series),
                )
            )
        except Exception as exc:
            logger.warning("repetition %d failed: %s", rep, exc)
            results.append(RepetitionResult(repetition=rep, status="failed", error=str(exc)))
    finals = [r.final_hypervolume for r in results if r.status == "ok"]
    maxima = [r.max_hypervolume for r in results if r.status == "ok"]
    summary = RunSummary(
        pair=config.pair,
        selector=config.selector,
        results=tuple(results),
        final_stats=_stats(finals) if finals else None,
        running_max_stats=_stats(maxima) if maxima else None,
        out_dir=str(run_dir),
    )
    _write_summary(run_dir, config, summary)
    return summary


def _run_repetition(
    config: RunConfig,
    backends: Backends,
    suite: variation.OperatorSuite,
    rep: int,
    rep_seed: int,
    rep_dir: Path,
    progress,
) -> list[float]:
    rep_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    population = initialize(config, backends, suite=suite)
    record = GenerationRecord(
        generation_index=0,
        population=population,
        hypervolume=hypervolume_2d(population.fitness_points(), DEFAULT_REFERENCE),
        fallback_count=_count_fallbacks(population),
        wall_time=time.perf_counter() - started,
    )
    records = [record]
    _write_generation(rep_dir, record)
    if progress:
        progress(rep, record)
    for generation in range(1, config.generations + 1):
        population, record = step(
            population, config, backends, rep_seed, generation=generation, suite=suite
        )
        records.append(record)
        _write_generation(rep_dir, record)
        if progress:
            progress(rep, record)
    _write_hypervolume_series(rep_dir, records)
    _write_pareto_front(rep_dir, config, rep, population)
    return [r.hypervolume for r in records]


def _write_summary(run_dir: Path, config: RunConfig, summary: RunSummary) -> None:
    payload = {
        "pair": config.pair.slug,
        "selector": config.selector,
        "hv_mode": config.hv_mode,
        "mu": config.mu,
        "lambda": config.lam,
        "generations": config.generations,
        "repetitions": config.repetitions,
        "seed": config.seed,
        "backend": config.backend.kind,
        "results": [
            {
                "repetition": r.repetition,
                "status": r.status,
                "final_hypervolume": r.final_hypervolume,
                "max_hypervolume": r.max_hypervolume,
                "error": r.error,
            }
            for r in summary.results
        ],
        "final": summary.final_stats,
        "running_max": summary.running_max_stats,
    }
    with open(run_dir / "summary.json", "w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, ensure_ascii=False, indent=2)
        handle.write("\n")
