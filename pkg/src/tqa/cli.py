"""Command-line entry point: synth, detect-kl, detect-biased, evaluate, report.

Every command writes its outputs and a ``run.json`` manifest into one
run directory. Exit status is 0 only when every utterance was processed;
1 when some utterances failed (they are listed in ``errors.tsv`` and left
out of the scores); 2 for bad usage or config; 3 when evaluation input
holds a single class.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .config import PRESETS, load_config
from .core_io import format_scores, parse_scores
from .decode import DecodeConfig
from .evaluation import KL_SWEEP, WER_SWEEP, SingleClassError, corpus_report, det_curve, eer
from .kl_detect import DEFAULT_FLOOR, SmoothingConfig
from .pipeline import (JOBS_ENV, BiasedOptions, KLOptions, background_unigram, default_jobs,
                       general_lm, kl_score, run_batch, wer_score)
from .synth import CorpusDir, gen_dataset, write_dataset

log = logging.getLogger("tqa")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, EXIT_SINGLE_CLASS = 0, 1, 2, 3
MANIFEST = "run.json"
SCORES = "scores.tsv"


def _json_default(o):
    if isinstance(o, Path):
        return str(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o).__name__)


def write_manifest(out_dir: Path, command, config, seed, inputs, outputs, started, **extra):
    m = {
        "command": command,
        "tool_version": __version__,
        "seed": seed,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": sorted(str(Path(p).relative_to(out_dir)) for p in outputs),
        "wall_clock_seconds": round(time.monotonic() - started, 3),
        **extra,
    }
    (out_dir / MANIFEST).write_text(json.dumps(m, indent=2, sort_keys=True, default=_json_default) + "\n")
    return m


def corpus_seed(path):
    m = Path(path) / MANIFEST
    if m.is_file():
        return json.loads(m.read_text()).get("seed")
    return None


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish_scores(out, result, command, config, corpus, started, kind):
    (out / SCORES).write_text(format_scores(result.scores))
    outputs = [out / SCORES]
    if result.failures:
        (out / "errors.tsv").write_text("".join(f"{u}\t{m}\n" for u, m in result.failures))
        outputs.append(out / "errors.tsv")
        for u, m in result.failures:
            log.error("%s: %s", u, m)
        log.error("%d of %d utterances failed; excluded from %s",
                  len(result.failures), len(result.failures) + len(result.scores), SCORES)
    write_manifest(out, command, config, corpus_seed(corpus.path), [corpus.path], outputs, started,
                   score_kind=kind, utterances=len(result.scores), failures=len(result.failures))
    return EXIT_PARTIAL if result.failures else EXIT_OK


# ---- synth

def cmd_synth(args):
    started = time.monotonic()
    overrides = {"corpus": {}, "noise": {}}
    if args.seed is not None:
        overrides["corpus"]["seed"] = args.seed
    if args.num_utterances is not None:
        overrides["corpus"]["num_utterances"] = args.num_utterances
    if args.alpha is not None:
        overrides["noise"]["alpha"] = args.alpha
    cfg = load_config(args.preset, args.config, overrides)
    ds = gen_dataset(cfg.corpus, cfg.noise, cfg.errors)
    out = _out_dir(args.out)
    written = write_dataset(ds, out)
    rep = corpus_report([u.breakdown for u in ds.utterances])
    inputs = [args.config] if args.config else []
    write_manifest(out, "synth", {"preset": args.preset, **cfg.to_dict()}, cfg.corpus.seed,
                   inputs, written, started)
    print(f"wrote {len(ds)} utterances to {out}: WER {100 * rep.wer:.2f}%, "
          f"sentence error rate {100 * rep.ser:.2f}%")
    return EXIT_OK


# ---- detectors

def cmd_detect_kl(args):
    started = time.monotonic()
    corpus = CorpusDir(args.corpus)
    excl = tuple(corpus.phoneset.index(p) for p in args.exclude_phones)
    opts = KLOptions(SmoothingConfig(args.N), args.floor, args.q_source, exclude_phones=excl)
    items = []
    for u in corpus.utt_ids:
        a = corpus.alignments.get(u)
        items.append((u, a, corpus.posterior_path(u), corpus.phoneset, opts))
    result = run_batch(_kl_item, items, corpus.labels, args.jobs)
    config = {"N": args.N, "floor": args.floor, "q_source": args.q_source,
              "exclude_phones": list(args.exclude_phones)}
    return _finish_scores(_out_dir(args.out), result, "detect-kl", config, corpus, started, "kl")


def _load_post(path):
    from .core_io import read_posteriorgram
    if not Path(path).is_file():
        raise FileNotFoundError(f"missing posteriorgram {path}")
    return read_posteriorgram(Path(path).read_bytes())


def _kl_item(alignment, post_path, ps, opts):
    if alignment is None:
        raise ValueError("no alignment")
    return kl_score(alignment, _load_post(post_path), ps, opts)


def _wer_item(t, post_path, lex, lm, opts):
    return wer_score(t, _load_post(post_path), lex, lm, opts)


def cmd_detect_biased(args):
    started = time.monotonic()
    corpus = CorpusDir(args.corpus)
    dec = DecodeConfig(args.beam, args.max_active, args.lm_weight, args.word_insertion_penalty)
    opts = BiasedOptions(args.lam, args.top_n, args.order, dec, args.general_lm, args.general_order)
    train = corpus.train_text()
    lm = general_lm(train, corpus.lexicon, args.general_order) if args.general_lm \
        else background_unigram(train, args.top_n)
    items = [(u, corpus.transcripts[u], corpus.posterior_path(u), corpus.lexicon, lm, opts)
             for u in corpus.utt_ids]
    result = run_batch(_wer_item, items, corpus.labels, args.jobs)
    config = {"lambda": args.lam, "top_n": args.top_n, "order": args.order, "beam": args.beam,
              "max_active": args.max_active, "lm_weight": args.lm_weight,
              "word_insertion_penalty": args.word_insertion_penalty,
              "general_lm": args.general_lm, "general_order": args.general_order}
    return _finish_scores(_out_dir(args.out), result, "detect-biased", config, corpus, started, "wer")


# ---- evaluation

def _parse_sweep(text):
    if text in ("kl", "wer"):
        return KL_SWEEP if text == "kl" else WER_SWEEP
    try:
        lo, hi, n = text.split(":")
        return float(lo), float(hi), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"sweep must be 'kl', 'wer', 'auto' or lo:hi:n, got {text!r}")


def _score_kind(path, scores):
    m = Path(path).parent / MANIFEST
    if m.is_file():
        kind = json.loads(m.read_text()).get("score_kind")
        if kind in ("kl", "wer"):
            return kind
    return "wer" if all(0 <= s.score <= 1 for s in scores) else "kl"


def _names(paths):
    names = []
    for p in paths:
        p = Path(p)
        name = p.parent.name if p.name == SCORES and p.parent.name else p.stem
        while name in names:
            name += "_"
        names.append(name)
    return names


def evaluate_files(paths, sweep_spec="auto", names=None):
    """name -> (DetCurve, EqualErrorRate, kind); raises SingleClassError."""
    names = names or _names(paths)
    out = {}
    for name, path in zip(names, paths):
        scores = parse_scores(Path(path).read_text())
        unlabeled = [s.utt_id for s in scores if s.label is None]
        if unlabeled:
            raise ValueError(f"{path}: {len(unlabeled)} scores have no label")
        kind = _score_kind(path, scores)
        spec = (KL_SWEEP if kind == "kl" else WER_SWEEP) if sweep_spec == "auto" else sweep_spec
        try:
            curve = det_curve(scores, spec)
        except SingleClassError as e:
            raise SingleClassError(f"{path}: {e}") from None
        out[name] = (curve, eer(curve), kind)
    return out


def cmd_evaluate(args):
    from .plotting import plot_det
    started = time.monotonic()
    out = _out_dir(args.out)
    names = args.names.split(",") if args.names else None
    if names and len(names) != len(args.scores):
        print("error: --names needs one name per score file", file=sys.stderr)
        return EXIT_USAGE
    try:
        res = evaluate_files(args.scores, args.sweep, names)
    except SingleClassError as e:
        print(f"degenerate separation: {e}", file=sys.stderr)
        write_manifest(out, "evaluate", {"sweep": args.sweep}, None, args.scores, [], started,
                       error=f"single-class input: {e}")
        return EXIT_SINGLE_CLASS
    outputs = []
    for name, (curve, _, _) in res.items():
        p = out / f"det_{name}.tsv"
        p.write_text(curve.to_tsv())
        outputs.append(p)
    table = "".join(f"{name}\t{100 * e.rate:.2f}\t{e.threshold:.6f}\t{'yes' if e.bracketed else 'no'}\n"
                    for name, (_, e, _) in res.items())
    (out / "eer.tsv").write_text("name\teer_percent\tthreshold\tbracketed\n" + table)
    outputs.append(out / "eer.tsv")
    if not args.no_plot:
        plot_det({n: r[0] for n, r in res.items()}, out / "det.svg", {n: r[1] for n, r in res.items()})
        outputs.append(out / "det.svg")
    write_manifest(out, "evaluate", {"sweep": args.sweep if isinstance(args.sweep, str) else list(args.sweep)},
                   None, args.scores, outputs, started)
    width = max(len(n) for n in res)
    print(f"{'system':<{width}}  EER")
    for name, (_, e, _) in res.items():
        flag = "" if e.bracketed else "  (no crossing)"
        print(f"{name:<{width}}  {100 * e.rate:.2f}%{flag}")
    return EXIT_OK


# ---- report

def cmd_report(args):
    import numpy as np

    from .align import alignment_to_posteriorgram
    from .kl_detect import score_utterance
    from .phone_rec import lattice_reestimate
    from .plotting import plot_det, plot_error_breakdown, plot_utterance
    started = time.monotonic()
    corpus = CorpusDir(args.corpus)
    out = _out_dir(args.out)
    outputs = []
    rows = []
    bds = corpus.edit_breakdowns()
    if bds:
        rep = corpus_report([bds[u] for u in sorted(bds)])
        rows += [(k, v) for k, v in rep.as_rows()]
        plot_error_breakdown(rep, out / "error_breakdown.svg")
        outputs.append(out / "error_breakdown.svg")
    # one erroneous utterance (or the first one) in the KL-evidence style
    pick = args.utt or next((u for u in corpus.utt_ids if corpus.labels.get(u) == "erroneous"),
                            corpus.utt_ids[0])
    a = corpus.alignments[pick]
    Q = corpus.posteriorgram(pick)
    if args.q_source == "reestimated":
        Q = lattice_reestimate(Q, floor=DEFAULT_FLOOR)
    score, raw, smooth = score_utterance(a, Q, corpus.phoneset)
    P = alignment_to_posteriorgram(a, corpus.phoneset)
    used = np.unique(np.concatenate([a.frame_labels(), Q.values.argmax(axis=1)]))
    plot_utterance(P.values[:, used], Q.values[:, used], raw, smooth, out / f"utterance_{pick}.svg",
                   [corpus.phoneset.label(i) for i in used],
                   f"{pick} ({corpus.labels.get(pick, 'unlabeled')}), score {score:.3f}")
    outputs.append(out / f"utterance_{pick}.svg")
    status = EXIT_OK
    if args.scores:
        try:
            res = evaluate_files(args.scores)
        except SingleClassError as e:
            print(f"degenerate separation: {e}", file=sys.stderr)
            status = EXIT_SINGLE_CLASS
        else:
            for name, (curve, e, _) in res.items():
                rows.append((f"eer_{name}", e.rate))
                (out / f"det_{name}.tsv").write_text(curve.to_tsv())
                outputs.append(out / f"det_{name}.tsv")
            plot_det({n: r[0] for n, r in res.items()}, out / "det.svg", {n: r[1] for n, r in res.items()})
            outputs.append(out / "det.svg")
    text = "".join(f"{k}\t{v:.6f}\n" if isinstance(v, float) else f"{k}\t{v}\n" for k, v in rows)
    (out / "report.tsv").write_text(text)
    outputs.append(out / "report.tsv")
    sys.stdout.write(text)
    write_manifest(out, "report", {"utt": pick, "q_source": args.q_source}, None,
                   [corpus.path, *args.scores], outputs, started)
    return status


# ---- parser

def build_parser():
    p = argparse.ArgumentParser(prog="tqa", description="Transcription quality assessment toolkit.",
                                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    s = sub.add_parser("synth", help="generate a synthetic corpus", formatter_class=fmt)
    s.add_argument("--out", required=True, help="corpus directory")
    s.add_argument("--preset", default="default", choices=sorted(PRESETS))
    s.add_argument("--config", help="TOML file layered over the preset")
    s.add_argument("--seed", type=int, help="overrides corpus.seed")
    s.add_argument("--num-utterances", type=int, help="overrides corpus.num_utterances")
    s.add_argument("--alpha", type=float, help="overrides noise.alpha")
    s.set_defaults(func=cmd_synth)

    jobs_help = f"worker processes, taken from ${JOBS_ENV} when unset"

    k = sub.add_parser("detect-kl", help="KL-divergence detector", formatter_class=fmt)
    k.add_argument("corpus")
    k.add_argument("--out", required=True, help="run directory")
    k.add_argument("--N", type=int, default=7, help="median filter half-width (window 2N+1)")
    k.add_argument("--floor", type=float, default=DEFAULT_FLOOR)
    k.add_argument("--q-source", choices=("raw", "reestimated"), default="reestimated",
                   help="classifier posteriors as given, or re-estimated over a phone lattice")
    k.add_argument("--exclude-phones", nargs="*", default=[], metavar="PHONE",
                   help="phones (e.g. silence) left out of the score")
    k.add_argument("--jobs", type=int, default=default_jobs(), help=jobs_help)
    k.set_defaults(func=cmd_detect_kl)

    b = sub.add_parser("detect-biased", help="biased-LM lattice oracle WER detector", formatter_class=fmt)
    b.add_argument("corpus")
    b.add_argument("--out", required=True, help="run directory")
    b.add_argument("--lambda", dest="lam", type=float, default=0.9, help="weight of the transcript LM")
    b.add_argument("--top-n", type=int, default=100, help="size of the background unigram")
    b.add_argument("--order", type=int, default=4, help="order of the transcript LM")
    b.add_argument("--beam", type=float, default=10.0)
    b.add_argument("--max-active", type=int, default=500)
    b.add_argument("--lm-weight", type=float, default=1.0)
    b.add_argument("--word-insertion-penalty", type=float, default=0.0)
    b.add_argument("--general-lm", action="store_true",
                   help="decode with one corpus-level LM instead (baseline)")
    b.add_argument("--general-order", type=int, default=3)
    b.add_argument("--jobs", type=int, default=default_jobs(), help=jobs_help)
    b.set_defaults(func=cmd_detect_biased)

    e = sub.add_parser("evaluate", help="DET curves and EER for score files", formatter_class=fmt)
    e.add_argument("scores", nargs="+", help="labeled score TSVs")
    e.add_argument("--out", required=True, help="run directory")
    e.add_argument("--sweep", type=lambda x: x if x == "auto" else _parse_sweep(x), default="auto",
                   help="'auto' (by score kind), 'kl' (0:20:2001), 'wer' (0:1:1001) or lo:hi:n")
    e.add_argument("--names", help="comma-separated curve names")
    e.add_argument("--no-plot", action="store_true", help="skip the SVG")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="corpus statistics and figures", formatter_class=fmt)
    r.add_argument("corpus")
    r.add_argument("--out", required=True, help="run directory")
    r.add_argument("--scores", nargs="*", default=[], help="labeled score TSVs to add DET curves")
    r.add_argument("--utt", help="utterance to plot (first erroneous when unset)")
    r.add_argument("--q-source", choices=("raw", "reestimated"), default="reestimated")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
