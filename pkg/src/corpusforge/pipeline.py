"""Configured, deterministic pipeline runs.

A pipeline config is a JSON document::

    {
      "global":  {"threads": 4, "seed": 1, "workdir": "work"},
      "inputs":  {"bitext": "raw.tsv", "in_domain": "news.txt", ...},
      "stages":  ["normalize", "filter", "lm", "dccef", "mix", "augment", "bpe"],
      "filter":  {"max_tokens": 100},
      ...
    }

Relative input paths resolve against the config file's directory. Each stage
writes its outputs, ``manifest.json`` and ``stats.json`` under
``workdir/<stage>/``. Bitext outputs carry an ``.ids`` sidecar so external
per-pair scores (keyed by the raw corpus line number) stay attached to their
pairs after filtering.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

from . import filters, lm, optim, rerank, segaug, select, textnorm
from .corpus import (
    Manifest,
    ManifestEntry,
    SentencePair,
    chunked,
    config_hash,
    entry_for,
    read_mono,
    read_parallel,
    write_mono,
    write_parallel,
)
from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

STAGE_ORDER = ("normalize", "filter", "lm", "dccef", "select", "mix", "augment", "bpe", "rerank", "optim")
FILTERING_STAGES = ("normalize", "filter", "dccef")

SECTION_KEYS: dict[str, set[str]] = {
    "global": {"threads", "seed", "workdir"},
    "inputs": {
        "bitext", "synthetic", "in_domain", "out_domain", "fwd_scores", "bwd_scores",
        "lexicon", "langid", "boundaries", "stopwords", "nbest", "r2l",
    },
    "normalize": {"truecase", "mask"},
    "filter": {f.name for f in fields(filters.FilterConfig)} | {"dedupe"},
    "lm": {"order", "min_count"},
    "dccef": {"keep_fraction", "threshold", "domain_weighted"},
    "select": {"strategy", "tau", "top_n"},
    "mix": {"strategy", "ratio", "score"},
    "augment": {"k_min", "k_max", "unk_token", "output_ratio"},
    "bpe": {"num_merges", "min_frequency"},
    "rerank": {"n", "w_l2r", "w_r2l"},
    "optim": {"problem", "kinds", "steps", "lr0", "warmup", "beta1", "beta2", "eps", "nu1", "nu2"},
}
TOP_KEYS = {"global", "inputs", "stages", *STAGE_ORDER}


@dataclass
class PipelineConfig:
    raw: dict
    base_dir: Path
    threads: int = 1
    seed: int = 0
    workdir: Path = Path("work")
    stages: list[str] = field(default_factory=list)

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name) or {})

    def input_path(self, key: str, required: bool = True) -> Path | None:
        value = (self.raw.get("inputs") or {}).get(key)
        if value is None:
            if required:
                raise ConfigError(f"inputs.{key} is required by the requested stages")
            return None
        return self.resolve(value)

    def resolve(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p


def validate_config(raw: Mapping, base_dir: str | Path = ".", env: Mapping[str, str] | None = None) -> PipelineConfig:
    """Check keys strictly and resolve stage order.

    ``CORPUSFORGE_THREADS`` and ``CORPUSFORGE_WORKDIR`` in ``env`` override the
    ``global`` section.
    """
    env = os.environ if env is None else env
    if not isinstance(raw, Mapping):
        raise ConfigError("pipeline config must be a JSON object")
    unknown = sorted(set(raw) - TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for name, allowed in SECTION_KEYS.items():
        section = raw.get(name)
        if section is None:
            continue
        if not isinstance(section, Mapping):
            raise ConfigError(f"section {name!r} must be an object")
        bad = sorted(set(section) - allowed)
        if bad:
            raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(name + '.' + b for b in bad)}")
    stages = raw.get("stages")
    if stages is None:
        stages = [s for s in STAGE_ORDER if s in raw]
    if not isinstance(stages, list) or any(s not in STAGE_ORDER for s in stages):
        raise ConfigError(f"stages must be a list drawn from {', '.join(STAGE_ORDER)}")
    stages = [s for s in STAGE_ORDER if s in stages]
    g = dict(raw.get("global") or {})
    try:
        threads = int(env.get("CORPUSFORGE_THREADS") or g.get("threads", 1))
        seed = int(g.get("seed", 0))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"global.threads and global.seed must be integers ({exc})") from None
    if threads < 1:
        raise ConfigError("global.threads must be >= 1")
    base = Path(base_dir)
    workdir = Path(env.get("CORPUSFORGE_WORKDIR") or g.get("workdir", "work"))
    if not workdir.is_absolute():
        workdir = base / workdir
    cfg = PipelineConfig(dict(raw), base, threads, seed, workdir, stages)
    # Build every stage's typed config now so bad values fail before any work.
    for name in stages:
        _STAGE_BUILDERS.get(name, lambda c: None)(cfg)
    return cfg


def load_config(path: str | Path, env: Mapping[str, str] | None = None) -> PipelineConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return validate_config(raw, path.parent, env)


def _typed(factory: Callable, section: str, values: Mapping):
    try:
        return factory(**values)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from None


def _filter_config(cfg: PipelineConfig) -> filters.FilterConfig:
    sec = cfg.section("filter")
    sec.pop("dedupe", None)
    return _typed(filters.FilterConfig, "filter", sec)


def _mixture_spec(cfg: PipelineConfig) -> select.MixtureSpec:
    sec = cfg.section("mix")
    ratio = select.parse_ratio(str(sec.get("ratio", "1:1")))
    if sec.get("score", "combined") not in ("combined", "in_domain"):
        raise ConfigError("mix.score must be 'combined' or 'in_domain'")
    return _typed(select.MixtureSpec, "mix", {"strategy": sec.get("strategy", "original_ratio"), "ratio": ratio, "seed": cfg.seed})


def _augment_config(cfg: PipelineConfig) -> segaug.AugmentConfig:
    return _typed(segaug.AugmentConfig, "augment", {**cfg.section("augment"), "seed": cfg.seed})


def _optim_config(cfg: PipelineConfig) -> optim.OptimizerConfig:
    sec = cfg.section("optim")
    for k in ("problem", "kinds", "steps"):
        sec.pop(k, None)
    return _typed(optim.OptimizerConfig, "optim", sec)


def _dccef_check(cfg: PipelineConfig) -> None:
    sec = cfg.section("dccef")
    if ("keep_fraction" in sec) == ("threshold" in sec):
        raise ConfigError("dccef needs exactly one of keep_fraction or threshold")


def _select_check(cfg: PipelineConfig) -> None:
    strategy = cfg.section("select").get("strategy", "combined_threshold")
    if strategy not in ("combined_threshold", "in_domain_top"):
        raise ConfigError(f"select.strategy {strategy!r} is not combined_threshold or in_domain_top")


_STAGE_BUILDERS: dict[str, Callable[[PipelineConfig], Any]] = {
    "filter": _filter_config,
    "mix": _mixture_spec,
    "augment": _augment_config,
    "optim": _optim_config,
    "dccef": _dccef_check,
    "select": _select_check,
    "rerank": lambda c: _typed(rerank.RerankConfig, "rerank", c.section("rerank")),
    "bpe": lambda c: _typed(lambda num_merges=1000, min_frequency=2: None, "bpe", c.section("bpe")),
    "lm": lambda c: _typed(lambda order=4, min_count=1: None, "lm", c.section("lm")),
    "normalize": lambda c: _typed(lambda truecase=True, mask=True: None, "normalize", c.section("normalize")),
}


# --- state carried between stages ---------------------------------------------

@dataclass
class StageResult:
    name: str
    manifest: Manifest
    stats: dict


@dataclass
class RunState:
    bitext: list[SentencePair] | None = None
    synthetic: list[SentencePair] | None = None
    synthetic_scores: dict[int, float] | None = None
    lm_in: lm.NGramModel | None = None
    lm_out: lm.NGramModel | None = None
    truecase: dict[str, textnorm.TruecaseModel] = field(default_factory=dict)
    mask: bool = True
    raw_count: int | None = None


class _StageWriter:
    def __init__(self, cfg: PipelineConfig, name: str):
        self.cfg = cfg
        self.name = name
        self.dir = cfg.workdir / name
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest = Manifest()
        self.created_by = f"{name}:{config_hash({'section': cfg.raw.get(name), 'inputs': cfg.raw.get('inputs'), 'seed': cfg.seed})}"

    def _add(self, path: Path, role: str) -> Path:
        self.manifest.add(entry_for(path, role, self.created_by, relative_to=self.cfg.workdir))
        return path

    def bitext(self, pairs: list[SentencePair], stem: str = "bitext", role: str = "bitext") -> Path:
        path = self.dir / f"{stem}.tsv"
        write_parallel(pairs, path, role)
        self._add(path, role)
        write_mono((str(p.id) for p in pairs), self.dir / f"{stem}.ids")
        self._add(self.dir / f"{stem}.ids", "other")
        return path

    def text(self, fname: str, lines: Iterable[str], role: str) -> Path:
        path = self.dir / fname
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in lines:
                fh.write(line + "\n")
        return self._add(path, role)

    def file(self, path: Path, role: str) -> Path:
        return self._add(path, role)

    def json(self, fname: str, obj: Any, role: str = "report") -> Path:
        path = self.dir / fname
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return self._add(path, role)

    def finish(self, stats: dict) -> StageResult:
        stats = {"stage": self.name, **stats}
        self.json("stats.json", stats)
        self.manifest.dump(self.dir / "manifest.json")
        return StageResult(self.name, self.manifest, stats)


def _load_bitext(path: Path) -> list[SentencePair]:
    ids_path = path.with_suffix(".ids")
    pairs = list(read_parallel(path))
    if ids_path.exists():
        ids = [int(s.text) for s in read_mono(ids_path)]
        if len(ids) != len(pairs):
            raise DataError(f"{ids_path}: {len(ids)} ids for {len(pairs)} pairs")
        pairs = [SentencePair(i, p.src, p.tgt, p.origin) for i, p in zip(ids, pairs)]
    return pairs


def _require_bitext(cfg: PipelineConfig, state: RunState) -> list[SentencePair]:
    if state.bitext is None:
        state.bitext = _load_bitext(cfg.input_path("bitext"))
        state.raw_count = len(state.bitext)
    return state.bitext


def _parallel_map(fn: Callable, items: list, threads: int) -> list:
    """Order-preserving chunked map; worker count never changes the result."""
    if threads <= 1 or len(items) < 2:
        return fn(items)
    with ProcessPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(fn, chunked(items, threads)))
    return [x for part in parts for x in part]


def _prep_lines(args: tuple[list[str], bool]) -> list[tuple[list[str], str]]:
    lines, mask = args
    out = []
    for line in lines:
        text = textnorm.normalize(line)
        pmap = textnorm.PlaceholderMap()
        if mask:
            text, pmap = textnorm.mask_placeholders(text)
        out.append((textnorm.tokenize(text), pmap.to_json()))
    return out


class _Prep:
    # A class rather than a closure so worker processes can unpickle it.
    def __init__(self, mask: bool):
        self.mask = mask

    def __call__(self, lines: list[str]) -> list[tuple[list[str], str]]:
        return _prep_lines((lines, self.mask))


def preprocess_lines(lines: list[str], mask: bool, threads: int) -> list[tuple[list[str], str]]:
    """normalize -> mask -> tokenize per line; returns (tokens, placeholder-map JSON)."""
    return _parallel_map(_Prep(mask), lines, threads)


def _prepare_side(lines: list[str], state: RunState, side: str, threads: int) -> list[str]:
    prepped = preprocess_lines(lines, state.mask, threads)
    model = state.truecase.get(side)
    return [" ".join(textnorm.truecase_apply(toks, model) if model else toks) for toks, _ in prepped]


# --- stages ---------------------------------------------------------------------

def stage_normalize(cfg: PipelineConfig, state: RunState) -> StageResult:
    sec = cfg.section("normalize")
    state.mask = bool(sec.get("mask", True))
    pairs = _require_bitext(cfg, state)
    w = _StageWriter(cfg, "normalize")
    out_sides = {}
    for side in ("src", "tgt"):
        prepped = preprocess_lines([getattr(p, side) for p in pairs], state.mask, cfg.threads)
        tokens = [t for t, _ in prepped]
        if sec.get("truecase", True):
            model = textnorm.truecase_train(tokens)
            model.save(w.dir / f"truecase.{side}")
            w.file(w.dir / f"truecase.{side}", "model")
            state.truecase[side] = model
            tokens = [textnorm.truecase_apply(t, model) for t in tokens]
        out_sides[side] = [" ".join(t) for t in tokens]
        if state.mask:
            w.text(f"placeholders.{side}.jsonl", (m for _, m in prepped), "other")
    state.bitext = [SentencePair(p.id, s, t, p.origin) for p, s, t in zip(pairs, out_sides["src"], out_sides["tgt"])]
    w.bitext(state.bitext)
    return w.finish({"input": len(pairs), "output": len(state.bitext)})


def stage_filter(cfg: PipelineConfig, state: RunState) -> StageResult:
    sec = cfg.section("filter")
    fconf = _filter_config(cfg)
    pairs = _require_bitext(cfg, state)
    lex_path = cfg.input_path("lexicon", required=False)
    lexicon = filters.Lexicon.load(lex_path) if lex_path else None
    langid = None
    langid_inputs = (cfg.raw.get("inputs") or {}).get("langid")
    if langid_inputs:
        if not isinstance(langid_inputs, Mapping):
            raise ConfigError("inputs.langid must map language codes to seed text files")
        corpora = {lang: [s.text for s in read_mono(cfg.resolve(p))] for lang, p in sorted(langid_inputs.items())}
        langid = filters.langid_train(corpora)
    kept, report = filters.run_filter_pipeline(
        pairs, fconf, langid, lexicon, remove_duplicates=bool(sec.get("dedupe", True)), threads=cfg.threads
    )
    state.bitext = kept
    w = _StageWriter(cfg, "filter")
    w.bitext(kept)
    w.json("report.json", report.to_dict())
    return w.finish({"input": report.input, "output": report.kept, "rejected_by_rule": report.rejected_by_rule})


def _lm_corpus(path: Path, state: RunState, threads: int) -> list[list[str]]:
    lines = [s.text for s in read_mono(path)]
    return [line.split() for line in _prepare_side(lines, state, "tgt", threads)]


def stage_lm(cfg: PipelineConfig, state: RunState) -> StageResult:
    sec = cfg.section("lm")
    order, min_count = int(sec.get("order", 4)), int(sec.get("min_count", 1))
    w = _StageWriter(cfg, "lm")
    stats = {}
    for key in ("in_domain", "out_domain"):
        corpus = _lm_corpus(cfg.input_path(key), state, cfg.threads)
        model = lm.lm_train(corpus, order, min_count)
        path = w.dir / f"{key}.arpa"
        lm.arpa_export(model, path)
        w.file(path, "model")
        setattr(state, "lm_in" if key == "in_domain" else "lm_out", model)
        stats[key] = {"sentences": len(corpus), "ngrams": model.counts_by_order()}
    return w.finish(stats)


def stage_dccef(cfg: PipelineConfig, state: RunState) -> StageResult:
    sec = cfg.section("dccef")
    pairs = _require_bitext(cfg, state)
    fwd = select.read_scores(cfg.input_path("fwd_scores"))
    bwd = select.read_scores(cfg.input_path("bwd_scores"))
    weighted = bool(sec.get("domain_weighted", False))
    if weighted and (state.lm_in is None or state.lm_out is None):
        raise ConfigError("dccef.domain_weighted needs the lm stage")
    scores = {}
    for p in pairs:
        if p.id not in fwd or p.id not in bwd:
            raise DataError(f"pair {p.id} lacks a forward or backward score")
        h_in = h_out = None
        if weighted:
            ms = select.mono_score(p.tgt.split(), state.lm_in, state.lm_out)
            h_in, h_out = ms.h_in, ms.h_out
        scores[p.id] = select.dccef_score(fwd[p.id], bwd[p.id], h_in, h_out)
    kept = select.dccef_filter(pairs, scores, sec.get("keep_fraction"), sec.get("threshold"))
    state.bitext = kept
    w = _StageWriter(cfg, "dccef")
    score_path = w.dir / "scores.tsv"
    select.write_scores(((p.id, scores[p.id].final) for p in pairs), score_path)
    w.file(score_path, "scores")
    w.bitext(kept)
    return w.finish({"input": len(pairs), "output": len(kept)})


def _require_synthetic(cfg: PipelineConfig, state: RunState) -> list[SentencePair]:
    if state.synthetic is None:
        raw = list(read_parallel(cfg.input_path("synthetic"), origin="synthetic"))
        src = _prepare_side([p.src for p in raw], state, "src", cfg.threads)
        tgt = _prepare_side([p.tgt for p in raw], state, "tgt", cfg.threads)
        state.synthetic = [SentencePair(p.id, s, t, "synthetic") for p, s, t in zip(raw, src, tgt)]
    return state.synthetic


def stage_select(cfg: PipelineConfig, state: RunState) -> StageResult:
    sec = cfg.section("select")
    if state.lm_in is None or state.lm_out is None:
        raise ConfigError("select needs the lm stage")
    synthetic = _require_synthetic(cfg, state)
    mono = [select.MonoSentence(p.id, p.tgt) for p in synthetic]
    scores = {s.id: select.mono_score(s.text.split(), state.lm_in, state.lm_out) for s in mono}
    chosen = select.select_mono(
        mono, scores, sec.get("strategy", "combined_threshold"), float(sec.get("tau", 0.0)), sec.get("top_n")
    )
    keep = {s.id for s in chosen}
    state.synthetic = [p for p in synthetic if p.id in keep]
    kind = cfg.section("mix").get("score", "combined")
    state.synthetic_scores = {
        i: (sc.combined if kind == "combined" else -sc.h_in) for i, sc in scores.items()
    }
    w = _StageWriter(cfg, "select")
    w.text("scores.tsv", (f"{i}\t{sc.h_in!r}\t{sc.h_out!r}\t{sc.combined!r}" for i, sc in scores.items()), "scores")
    w.bitext(state.synthetic, stem="synthetic", role="synthetic")
    return w.finish({"input": len(synthetic), "output": len(state.synthetic)})


def stage_mix(cfg: PipelineConfig, state: RunState) -> StageResult:
    spec = _mixture_spec(cfg)
    bitext = _require_bitext(cfg, state)
    synthetic = _require_synthetic(cfg, state)
    scores = state.synthetic_scores
    if spec.strategy == "cutoff" and scores is None:
        if state.lm_in is None or state.lm_out is None:
            raise ConfigError("cutoff mixing needs synthetic scores: run the lm stage (and optionally select)")
        kind = cfg.section("mix").get("score", "combined")
        ms = {p.id: select.mono_score(p.tgt.split(), state.lm_in, state.lm_out) for p in synthetic}
        scores = {i: (s.combined if kind == "combined" else -s.h_in) for i, s in ms.items()}
    tagged_bitext = [SentencePair(p.id, p.src, p.tgt, "bitext") for p in bitext]
    mixture = select.build_mixture(tagged_bitext, synthetic, spec, scores)
    state.bitext = mixture.pairs
    w = _StageWriter(cfg, "mix")
    w.bitext(mixture.pairs)
    w.text("origin.txt", (p.origin for p in mixture.pairs), "other")
    return w.finish(
        {"input": len(bitext), "output": len(mixture.pairs), "bitext_part": mixture.n_bitext, "synthetic_part": mixture.n_synthetic}
    )


def stage_augment(cfg: PipelineConfig, state: RunState) -> StageResult:
    conf = _augment_config(cfg)
    stop_inputs = (cfg.raw.get("inputs") or {}).get("stopwords") or {}
    if stop_inputs:
        conf.stopwords = {
            side: frozenset(s.text.strip().lower() for s in read_mono(cfg.resolve(p)))
            for side, p in stop_inputs.items()
        }
        conf.src_lang, conf.tgt_lang = "src", "tgt"
    pairs = _require_bitext(cfg, state)
    synthetic = segaug.unk_augment(pairs, conf)
    state.bitext = list(pairs) + synthetic
    w = _StageWriter(cfg, "augment")
    w.bitext(state.bitext)
    return w.finish({"input": len(pairs), "synthetic": len(synthetic), "output": len(state.bitext)})


def stage_bpe(cfg: PipelineConfig, state: RunState) -> StageResult:
    sec = cfg.section("bpe")
    pairs = _require_bitext(cfg, state)
    bpath = cfg.input_path("boundaries", required=False)
    boundaries = segaug.load_boundaries(bpath) if bpath else None
    corpus = [p.src.split() for p in pairs] + [p.tgt.split() for p in pairs]
    table = segaug.bpe_train(corpus, int(sec.get("num_merges", 1000)), boundaries, int(sec.get("min_frequency", 2)))
    w = _StageWriter(cfg, "bpe")
    table.save(w.dir / "codes.bpe")
    w.file(w.dir / "codes.bpe", "model")
    seg = [
        SentencePair(
            p.id,
            " ".join(segaug.bpe_apply(p.src.split(), table, boundaries)),
            " ".join(segaug.bpe_apply(p.tgt.split(), table, boundaries)),
            p.origin,
        )
        for p in pairs
    ]
    state.bitext = seg
    w.bitext(seg)
    return w.finish({"input": len(pairs), "output": len(seg), "merges": len(table.merges)})


def stage_rerank(cfg: PipelineConfig, state: RunState) -> StageResult:
    conf = _typed(rerank.RerankConfig, "rerank", cfg.section("rerank"))
    groups = rerank.parse_nbest(cfg.input_path("nbest"))
    groups = rerank.join_r2l(groups, rerank.read_r2l_scores(cfg.input_path("r2l")))
    results = rerank.rerank(groups, conf)
    w = _StageWriter(cfg, "rerank")
    w.text("best.txt", (r.best.tokens for r in results), "other")
    rerank.write_nbest(results, w.dir / "nbest.reranked")
    w.file(w.dir / "nbest.reranked", "other")
    changed = sum(r.best.rank != 0 for r in results)
    return w.finish({"sentences": len(results), "changed_best": changed})


def stage_optim(cfg: PipelineConfig, state: RunState) -> StageResult:
    sec = cfg.section("optim")
    base = _optim_config(cfg)
    problem = optim.problem_by_name(sec.get("problem", "rosenbrock"), cfg.seed)
    kinds = sec.get("kinds", ["adam", "qhadam"])
    steps = int(sec.get("steps", 5000))
    reports = [optim.run_trial(problem, optim.with_kind(base, k), steps, cfg.seed).report() for k in kinds]
    w = _StageWriter(cfg, "optim")
    w.json("trials.json", reports)
    from .plotting import plot_trajectories

    plot_trajectories(reports, w.dir / "trajectories.png")
    return w.finish({r["config"]["kind"]: {"final_loss": r["final_loss"], "diverged": r["diverged"]} for r in reports})


STAGES: dict[str, Callable[[PipelineConfig, RunState], StageResult]] = {
    "normalize": stage_normalize,
    "filter": stage_filter,
    "lm": stage_lm,
    "dccef": stage_dccef,
    "select": stage_select,
    "mix": stage_mix,
    "augment": stage_augment,
    "bpe": stage_bpe,
    "rerank": stage_rerank,
    "optim": stage_optim,
}


def run_stage(name: str, cfg: PipelineConfig, state: RunState | None = None) -> StageResult:
    if name not in STAGES:
        raise ConfigError(f"unknown stage {name!r}")
    logger.info("running stage %s", name)
    return STAGES[name](cfg, state if state is not None else RunState())


def retention_table(results: list[StageResult], raw_count: int | None) -> list[dict]:
    """Line counts through the filtering stages, relative to the raw input."""
    if raw_count is None:
        return []
    rows = [{"stage": "raw", "lines": raw_count, "retention": 1.0 if raw_count else None}]
    for r in results:
        if r.name in FILTERING_STAGES:
            n = r.stats["output"]
            rows.append({"stage": r.name, "lines": n, "retention": n / raw_count if raw_count else None})
    return rows


def run_pipeline(cfg: PipelineConfig, figure: bool = True) -> dict:
    """Run the configured stages in dependency order and write ``pipeline.json``.

    A failing stage halts the run; outputs of earlier stages stay on disk.
    """
    state = RunState()
    results: list[StageResult] = []
    for name in cfg.stages:
        results.append(run_stage(name, cfg, state))
    summary = {
        "stages": [r.stats for r in results],
        "manifests": [f"{r.name}/manifest.json" for r in results],
        "retention": retention_table(results, state.raw_count),
    }
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    (cfg.workdir / "pipeline.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if figure and summary["retention"]:
        from .plotting import plot_retention

        plot_retention(summary["retention"], cfg.workdir / "retention.png")
    return summary


# --- stats ----------------------------------------------------------------------

def stats(manifest: Manifest, base: str | Path | None = None, verify: bool = True) -> dict:
    """Line counts and retention over a manifest's bitext entries, in order.

    Retention is relative to the first bitext entry and omitted when there is
    only one. Filter reports referenced by the manifest add a per-rule table.
    """
    if verify:
        manifest.verify(base)
    bitexts = [e for e in manifest.entries if e.role in ("bitext", "synthetic")]
    first = bitexts[0].line_count if bitexts else 0
    rows = []
    for e in bitexts:
        row = {"path": e.path, "lines": e.line_count, "created_by": e.created_by}
        if len(bitexts) > 1:
            row["retention"] = e.line_count / first if first else None
        rows.append(row)
    rejected: dict[str, int] = {}
    for e in manifest.entries:
        if e.role == "report":
            p = Path(e.path)
            if base is not None and not p.is_absolute():
                p = Path(base) / p
            try:
                rep = json.loads(p.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                continue
            for rule, n in (rep.get("rejected_by_rule") or {}).items():
                rejected[rule] = rejected.get(rule, 0) + n
    out = {"files": rows}
    if rejected:
        out["rejected_by_rule"] = rejected
    return out


def format_stats(report: dict) -> str:
    """Plain-text table in the style of a before/after filtering summary."""
    lines = [f"{'file':<40} {'lines':>10} {'retention':>10}"]
    for row in report["files"]:
        ret = row.get("retention")
        lines.append(f"{row['path']:<40} {row['lines']:>10d} {'' if ret is None else f'{ret:.3f}':>10}")
    if report.get("rejected_by_rule"):
        lines.append("")
        lines.append(f"{'rule':<40} {'rejected':>10}")
        for rule, n in report["rejected_by_rule"].items():
            lines.append(f"{rule:<40} {n:>10d}")
    return "\n".join(lines)
