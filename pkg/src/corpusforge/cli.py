"""``corpusforge`` command line.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from pathlib import Path

from . import filters, lm, optim, pipeline, rerank, segaug, select, textnorm
from .corpus import (
    Manifest,
    MonoSentence,
    ReadStats,
    SentencePair,
    merge,
    read_mono,
    read_parallel,
    shard,
    shuffle,
    write_mono,
    write_parallel,
)
from .errors import ConfigError, CorpusForgeError, DataError

logger = logging.getLogger("corpusforge")


# --- helpers --------------------------------------------------------------------

def _read_lines(path: str, mono: bool) -> list:
    return list(read_mono(path) if mono else read_parallel(path))


def _map_text(records: list, mono: bool, fn) -> list:
    if mono:
        return [MonoSentence(r.id, fn(r.text), r.origin) for r in records]
    return [SentencePair(r.id, fn(r.src), fn(r.tgt), r.origin) for r in records]


def _write(records: list, path: str, mono: bool) -> None:
    (write_mono if mono else write_parallel)(records, path)


def _side_texts(path: str, side: str) -> list[str]:
    if side == "mono":
        return [s.text for s in read_mono(path)]
    return [getattr(p, side) for p in read_parallel(path)]


def _dump_json(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


def _load_tokenized_mono(path: str) -> list[list[str]]:
    return [s.text.split() for s in read_mono(path)]


# --- commands -------------------------------------------------------------------

def cmd_normalize(a) -> None:
    _write(_map_text(_read_lines(a.input, a.mono), a.mono, textnorm.normalize), a.output, a.mono)


def cmd_mask(a) -> None:
    records = _read_lines(a.input, a.mono)
    out, maps = [], []
    for r in records:
        if a.mono:
            text, pmap = textnorm.mask_placeholders(r.text)
            out.append(MonoSentence(r.id, text))
            maps.append(pmap.to_json())
        else:
            s, ms = textnorm.mask_placeholders(r.src)
            t, mt = textnorm.mask_placeholders(r.tgt)
            out.append(SentencePair(r.id, s, t))
            maps.append(json.dumps({"src": json.loads(ms.to_json()), "tgt": json.loads(mt.to_json())}, ensure_ascii=False))
    _write(out, a.output, a.mono)
    write_mono(maps, a.map)


def cmd_unmask(a) -> None:
    records = _read_lines(a.input, a.mono)
    maps = [s.text for s in read_mono(a.map)]
    if len(maps) != len(records):
        raise ConfigError(f"{a.map}: {len(maps)} maps for {len(records)} records")
    warnings = Counter()
    out = []
    for r, m in zip(records, maps):
        if a.mono:
            out.append(MonoSentence(r.id, textnorm.unmask(r.text, textnorm.PlaceholderMap.from_json(m), warnings)))
        else:
            obj = json.loads(m)
            src_map = textnorm.PlaceholderMap.from_json(json.dumps(obj["src"]))
            tgt_map = textnorm.PlaceholderMap.from_json(json.dumps(obj["tgt"]))
            out.append(SentencePair(r.id, textnorm.unmask(r.src, src_map, warnings), textnorm.unmask(r.tgt, tgt_map, warnings)))
    _write(out, a.output, a.mono)
    if warnings:
        logger.warning("%d unused placeholder slot(s)", warnings["unused_slots"])


def cmd_tokenize(a) -> None:
    fn = (lambda t: textnorm.detokenize(t.split())) if a.detokenize else (lambda t: " ".join(textnorm.tokenize(t)))
    _write(_map_text(_read_lines(a.input, a.mono), a.mono, fn), a.output, a.mono)


def cmd_truecase_train(a) -> None:
    model = textnorm.truecase_train(t.split() for t in _side_texts(a.input, a.side))
    model.save(a.model)


def cmd_truecase_apply(a) -> None:
    if a.detruecase:
        fn = lambda t: " ".join(textnorm.detruecase(t.split()))  # noqa: E731
    else:
        model = textnorm.TruecaseModel.load(a.model)
        fn = lambda t: " ".join(textnorm.truecase_apply(t.split(), model))  # noqa: E731
    mono = a.side == "mono"
    records = _read_lines(a.input, mono)
    if mono:
        out = _map_text(records, True, fn)
    elif a.side == "src":
        out = [SentencePair(r.id, fn(r.src), r.tgt) for r in records]
    else:
        out = [SentencePair(r.id, r.src, fn(r.tgt)) for r in records]
    _write(out, a.output, mono)


def _langid_from_args(a) -> filters.LangIdModel | None:
    if a.langid_model:
        return filters.LangIdModel.from_json(Path(a.langid_model).read_text(encoding="utf-8"))
    if a.langid_train:
        corpora = {}
        for item in a.langid_train:
            lang, _, path = item.partition("=")
            if not path:
                raise ConfigError(f"--langid-train expects lang=path, got {item!r}")
            corpora[lang] = [s.text for s in read_mono(path)]
        return filters.langid_train(corpora)
    return None


def cmd_langid_train(a) -> None:
    a.langid_model = None
    model = _langid_from_args(a)
    Path(a.output).write_text(model.to_json() + "\n", encoding="utf-8")


def cmd_filter(a) -> None:
    cfg = json.loads(Path(a.config).read_text(encoding="utf-8")) if a.config else {}
    if a.src_lang:
        cfg["expected_src_lang"] = a.src_lang
    if a.tgt_lang:
        cfg["expected_tgt_lang"] = a.tgt_lang
    fconf = filters.FilterConfig.from_dict(cfg)
    lexicon = filters.Lexicon.load(a.lexicon) if a.lexicon else None
    stats = ReadStats()
    pairs = list(read_parallel(a.input, errors="skip" if a.skip_malformed else "strict", stats=stats))
    kept, report = filters.run_filter_pipeline(
        pairs, fconf, _langid_from_args(a), lexicon, remove_duplicates=not a.no_dedupe, threads=a.threads
    )
    write_parallel(kept, a.output)
    rep = report.to_dict()
    if a.skip_malformed:
        rep["malformed_skipped"] = stats.skipped
    _dump_json(rep, a.report)
    if a.figure:
        from .plotting import plot_rejections

        plot_rejections(report.rejected_by_rule, a.figure)


def cmd_dedupe(a) -> None:
    pairs = list(read_parallel(a.input))
    kept = filters.dedupe(pairs)
    write_parallel(kept, a.output)
    logger.info("dedupe: %d -> %d", len(pairs), len(kept))


def cmd_lm_train(a) -> None:
    model = lm.lm_train(_load_tokenized_mono(a.input), a.order, a.min_count)
    lm.arpa_export(model, a.output)


def cmd_lm_score(a) -> None:
    model = lm.arpa_import(a.lm)
    corpus = _load_tokenized_mono(a.input)
    select.write_scores(((i, lm.lm_cross_entropy(s, model)) for i, s in enumerate(corpus)), a.output)
    if a.ppl:
        print(f"perplexity\t{lm.lm_perplexity(corpus, model)!r}")


def cmd_dccef(a) -> None:
    fwd, bwd = select.read_scores(a.fwd), select.read_scores(a.bwd)
    if set(fwd) != set(bwd):
        raise DataError("forward and backward score files cover different ids")
    pairs = list(read_parallel(a.bitext)) if a.bitext else None
    h_in = h_out = None
    if a.in_lm or a.out_lm:
        if not (a.in_lm and a.out_lm and pairs is not None):
            raise ConfigError("domain weighting needs --in-lm, --out-lm and --bitext")
        lm_in, lm_out = lm.arpa_import(a.in_lm), lm.arpa_import(a.out_lm)
        side = a.side
        h_in, h_out = {}, {}
        for p in pairs:
            ms = select.mono_score(getattr(p, side).split(), lm_in, lm_out)
            h_in[p.id], h_out[p.id] = ms.h_in, ms.h_out
    scores = {
        i: select.dccef_score(
            fwd[i], bwd[i], None if h_in is None else h_in[i], None if h_out is None else h_out[i]
        )
        for i in sorted(fwd)
    }
    if a.scores_out:
        select.write_scores(((i, s.final) for i, s in scores.items()), a.scores_out)
    if pairs is None:
        pairs = [SentencePair(i, "", "") for i in sorted(fwd)]
        kept = select.dccef_filter(pairs, scores, a.keep_fraction, a.threshold)
        write_mono((str(p.id) for p in kept), a.output or "/dev/stdout")
    else:
        kept = select.dccef_filter(pairs, scores, a.keep_fraction, a.threshold)
        if not a.output:
            raise ConfigError("--output is required with --bitext")
        write_parallel(kept, a.output)


def cmd_select_mono(a) -> None:
    corpus = list(read_mono(a.input))
    lm_in, lm_out = lm.arpa_import(a.in_lm), lm.arpa_import(a.out_lm)
    scores = {s.id: select.mono_score(s.text.split(), lm_in, lm_out) for s in corpus}
    strategy = "combined_threshold" if a.strategy == "combined" else "in_domain_top"
    chosen = select.select_mono(corpus, scores, strategy, a.tau, a.top_n)
    write_mono(chosen, a.output)
    if a.scores_out:
        with open(a.scores_out, "w", encoding="utf-8", newline="\n") as fh:
            for i, sc in scores.items():
                fh.write(f"{i}\t{sc.h_in!r}\t{sc.h_out!r}\t{sc.combined!r}\n")


def cmd_mix(a) -> None:
    bitext = list(read_parallel(a.bitext, origin="bitext"))
    synthetic = list(read_parallel(a.synthetic, origin="synthetic"))
    spec = select.MixtureSpec(a.strategy, select.parse_ratio(a.ratio), a.seed)
    scores = select.read_scores(a.scores) if a.scores else None
    if spec.strategy == "cutoff" and scores is None:
        raise ConfigError("--strategy cutoff needs --scores (id<TAB>score, higher is better)")
    mixture = select.build_mixture(bitext, synthetic, spec, scores)
    write_parallel(mixture.pairs, a.output)
    logger.info("mix: %d bitext + %d synthetic", mixture.n_bitext, mixture.n_synthetic)


def _stopwords(path: str | None) -> frozenset[str]:
    return frozenset(s.text.strip().lower() for s in read_mono(path)) if path else frozenset()


def cmd_augment_unk(a) -> None:
    conf = segaug.AugmentConfig(
        k_min=a.k_min,
        k_max=a.k_max,
        unk_token=a.unk,
        stopwords={"src": _stopwords(a.stopwords_src), "tgt": _stopwords(a.stopwords_tgt)},
        seed=a.seed,
        output_ratio=a.output_ratio,
    )
    pairs = list(read_parallel(a.input))
    synthetic = segaug.unk_augment(pairs, conf)
    write_parallel((pairs + synthetic) if a.combined else synthetic, a.output)


def _bpe_corpus(path: str, mono: bool) -> list[list[str]]:
    if mono:
        return _load_tokenized_mono(path)
    pairs = list(read_parallel(path))
    return [p.src.split() for p in pairs] + [p.tgt.split() for p in pairs]


def cmd_bpe_train(a) -> None:
    boundaries = segaug.load_boundaries(a.boundaries) if a.boundaries else None
    segaug.bpe_train(_bpe_corpus(a.input, a.mono), a.num_merges, boundaries, a.min_frequency).save(a.output)


def cmd_bpe_apply(a) -> None:
    if a.undo:
        fn = lambda t: " ".join(segaug.bpe_undo(t.split()))  # noqa: E731
    else:
        table = segaug.MergeTable.load(a.codes)
        boundaries = segaug.load_boundaries(a.boundaries) if a.boundaries else None
        fn = lambda t: " ".join(segaug.bpe_apply(t.split(), table, boundaries))  # noqa: E731
    _write(_map_text(_read_lines(a.input, a.mono), a.mono, fn), a.output, a.mono)


def cmd_rerank(a) -> None:
    groups = rerank.join_r2l(rerank.parse_nbest(a.nbest), rerank.read_r2l_scores(a.r2l))
    results = rerank.rerank(groups, rerank.RerankConfig(a.n, a.w_l2r, a.w_r2l))
    out = sys.stdout if a.output in (None, "-") else open(a.output, "w", encoding="utf-8", newline="\n")
    try:
        for r in results:
            out.write(r.best.tokens + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    if a.nbest_out:
        rerank.write_nbest(results, a.nbest_out)


def cmd_optim_bench(a) -> None:
    problem = optim.problem_by_name(a.problem, a.seed)
    kinds = ["adam", "qhadam"] if a.kind == "both" else [a.kind]
    reports = []
    for kind in kinds:
        conf = optim.OptimizerConfig(
            kind=kind, lr0=a.lr0, warmup=a.warmup, beta1=a.beta1, beta2=a.beta2, eps=a.eps, nu1=a.nu1, nu2=a.nu2
        )
        reports.append(optim.run_trial(problem, conf, a.steps, a.seed, a.threshold).report())
    _dump_json(reports if len(reports) > 1 else reports[0], a.report)
    if a.figure:
        from .plotting import plot_trajectories

        plot_trajectories(reports, a.figure)


def cmd_stats(a) -> None:
    manifest = Manifest.load(a.manifest)
    base = a.base if a.base is not None else Path(a.manifest).parent
    report = pipeline.stats(manifest, base, verify=not a.no_verify)
    if a.json:
        _dump_json(report, "-")
    else:
        print(pipeline.format_stats(report))
    if a.figure:
        from .plotting import plot_retention

        rows = [
            {"stage": Path(r["path"]).parent.name or Path(r["path"]).name, "lines": r["lines"], "retention": r.get("retention")}
            for r in report["files"]
        ]
        plot_retention(rows, a.figure)


def cmd_pipeline(a) -> None:
    env = dict(os.environ)
    if a.threads is not None:
        env["CORPUSFORGE_THREADS"] = str(a.threads)
    if a.workdir is not None:
        env["CORPUSFORGE_WORKDIR"] = str(Path(a.workdir).resolve())
    cfg = pipeline.load_config(a.config, env)
    summary = pipeline.run_pipeline(cfg, figure=not a.no_figure)
    for row in summary["retention"]:
        print(f"{row['stage']:<12} {row['lines']:>10d} {row['retention']:.3f}")


def cmd_shuffle(a) -> None:
    shuffle(a.input, a.seed, a.output)


def cmd_shard(a) -> None:
    if a.k < 1:
        raise ConfigError("k must be >= 1")
    for p in shard(a.input, a.k, a.out_dir):
        print(p)


def cmd_merge(a) -> None:
    merge(a.inputs, a.output, interleave=not a.concat)


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="corpusforge", description="Parallel corpus engineering toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=fn)
        return sp

    def io(sp, mono_flag=True):
        sp.add_argument("--input", "-i", required=True)
        sp.add_argument("--output", "-o", required=True)
        if mono_flag:
            sp.add_argument("--mono", action="store_true", help="input is one sentence per line")

    io(add("normalize", cmd_normalize, "normalize punctuation, entities and whitespace"))
    sp = add("mask", cmd_mask, "replace emails, URLs and tags with placeholders")
    io(sp)
    sp.add_argument("--map", required=True, help="JSON-lines placeholder sidecar to write")
    sp = add("unmask", cmd_unmask, "restore placeholders from a sidecar")
    io(sp)
    sp.add_argument("--map", required=True)
    sp = add("tokenize", cmd_tokenize, "tokenize (or --detokenize) text")
    io(sp)
    sp.add_argument("--detokenize", action="store_true")

    sp = add("truecase-train", cmd_truecase_train, "train a truecasing model")
    sp.add_argument("--input", "-i", required=True)
    sp.add_argument("--model", "-m", required=True)
    sp.add_argument("--side", choices=("src", "tgt", "mono"), default="mono")
    sp = add("truecase-apply", cmd_truecase_apply, "apply a truecasing model")
    io(sp, mono_flag=False)
    sp.add_argument("--model", "-m")
    sp.add_argument("--side", choices=("src", "tgt", "mono"), default="mono")
    sp.add_argument("--detruecase", action="store_true")

    def langid_args(sp):
        sp.add_argument("--langid-model", help="JSON model written by langid-train")
        sp.add_argument("--langid-train", nargs="+", metavar="LANG=PATH", help="train from seed text files")

    sp = add("langid-train", cmd_langid_train, "train the character n-gram language identifier")
    sp.add_argument("--langid-train", nargs="+", metavar="LANG=PATH", required=True)
    sp.add_argument("--output", "-o", required=True)

    sp = add("filter", cmd_filter, "apply the heuristic pair filters")
    io(sp, mono_flag=False)
    sp.add_argument("--config", help="JSON FilterConfig overrides")
    sp.add_argument("--lexicon")
    sp.add_argument("--src-lang")
    sp.add_argument("--tgt-lang")
    langid_args(sp)
    sp.add_argument("--report", help="report JSON path (default stdout)")
    sp.add_argument("--figure", help="write a rejection bar chart here")
    sp.add_argument("--threads", type=int, default=int(os.environ.get("CORPUSFORGE_THREADS", 1)))
    sp.add_argument("--no-dedupe", action="store_true")
    sp.add_argument("--skip-malformed", action="store_true")

    io(add("dedupe", cmd_dedupe, "drop exact duplicate pairs"), mono_flag=False)

    sp = add("lm-train", cmd_lm_train, "train a Kneser-Ney n-gram LM and write ARPA")
    io(sp, mono_flag=False)
    sp.add_argument("--order", type=int, default=4)
    sp.add_argument("--min-count", type=int, default=1)
    sp = add("lm-score", cmd_lm_score, "per-sentence cross-entropy under an ARPA LM")
    io(sp, mono_flag=False)
    sp.add_argument("--lm", required=True)
    sp.add_argument("--ppl", action="store_true")

    sp = add("dccef", cmd_dccef, "combine forward/backward scores and filter")
    sp.add_argument("--fwd", required=True)
    sp.add_argument("--bwd", required=True)
    sp.add_argument("--in-lm")
    sp.add_argument("--out-lm")
    sp.add_argument("--bitext")
    sp.add_argument("--side", choices=("src", "tgt"), default="tgt")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--keep-fraction", type=float)
    g.add_argument("--threshold", type=float)
    sp.add_argument("--output", "-o")
    sp.add_argument("--scores-out")

    sp = add("select-mono", cmd_select_mono, "domain selection of monolingual text")
    io(sp, mono_flag=False)
    sp.add_argument("--in-lm", required=True)
    sp.add_argument("--out-lm", required=True)
    sp.add_argument("--strategy", choices=("combined", "in-domain"), default="combined")
    sp.add_argument("--tau", type=float, default=0.0)
    sp.add_argument("--top-n", type=int)
    sp.add_argument("--scores-out")

    sp = add("mix", cmd_mix, "build a bitext + synthetic mixture")
    sp.add_argument("--bitext", required=True)
    sp.add_argument("--synthetic", required=True)
    sp.add_argument("--strategy", choices=select.STRATEGIES, default="original_ratio")
    sp.add_argument("--ratio", default="1:1")
    sp.add_argument("--scores", help="id<TAB>score for synthetic pairs, higher is better")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", "-o", required=True)

    sp = add("augment-unk", cmd_augment_unk, "UNK-replacement synthetic pairs")
    io(sp, mono_flag=False)
    sp.add_argument("--k-min", type=int, default=1)
    sp.add_argument("--k-max", type=int, default=3)
    sp.add_argument("--unk", default="<unk>")
    sp.add_argument("--stopwords-src")
    sp.add_argument("--stopwords-tgt")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output-ratio", type=int, default=1)
    sp.add_argument("--combined", action="store_true", help="write originals followed by synthetic pairs")

    sp = add("bpe-train", cmd_bpe_train, "learn boundary-constrained BPE merges")
    io(sp)
    sp.add_argument("--num-merges", type=int, required=True)
    sp.add_argument("--min-frequency", type=int, default=2)
    sp.add_argument("--boundaries")
    sp = add("bpe-apply", cmd_bpe_apply, "segment text with learned merges (or --undo)")
    io(sp)
    sp.add_argument("--codes")
    sp.add_argument("--boundaries")
    sp.add_argument("--undo", action="store_true")

    sp = add("rerank", cmd_rerank, "right-to-left n-best re-ranking")
    sp.add_argument("--nbest", required=True)
    sp.add_argument("--r2l", required=True)
    sp.add_argument("--n", type=int, default=12)
    sp.add_argument("--w-l2r", type=float, default=1.0)
    sp.add_argument("--w-r2l", type=float, default=1.0)
    sp.add_argument("--output", "-o")
    sp.add_argument("--nbest-out")

    sp = add("optim-bench", cmd_optim_bench, "compare Adam and QHAdam on a test problem")
    sp.add_argument("--problem", default="rosenbrock")
    sp.add_argument("--kind", choices=("adam", "qhadam", "both"), default="both")
    sp.add_argument("--steps", type=int, default=50000)
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--lr0", type=float, default=0.01)
    sp.add_argument("--warmup", type=int, default=10)
    sp.add_argument("--beta1", type=float, default=0.9)
    sp.add_argument("--beta2", type=float, default=0.98)
    sp.add_argument("--eps", type=float, default=1e-9)
    sp.add_argument("--nu1", type=float, default=0.8)
    sp.add_argument("--nu2", type=float, default=0.7)
    sp.add_argument("--threshold", type=float, default=1e-6)
    sp.add_argument("--report", help="trial report JSON (default stdout)")
    sp.add_argument("--figure", help="loss-trajectory figure (PNG/PDF/SVG)")

    sp = add("stats", cmd_stats, "summarize and verify a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--base", help="directory relative entry paths resolve against")
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--no-verify", action="store_true")
    sp.add_argument("--figure")

    sp = add("pipeline", cmd_pipeline, "run a configured pipeline")
    sp.add_argument("config")
    sp.add_argument("--threads", type=int)
    sp.add_argument("--workdir")
    sp.add_argument("--no-figure", action="store_true")

    sp = add("shuffle", cmd_shuffle, "seeded line shuffle")
    io(sp, mono_flag=False)
    sp.add_argument("--seed", type=int, required=True)
    sp = add("shard", cmd_shard, "round-robin split into k shards")
    sp.add_argument("--input", "-i", required=True)
    sp.add_argument("-k", type=int, required=True)
    sp.add_argument("--out-dir")
    sp = add("merge", cmd_merge, "merge shards")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--output", "-o", required=True)
    sp.add_argument("--concat", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CorpusForgeError as exc:
        print(f"corpusforge: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"corpusforge: I/O error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"corpusforge: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
