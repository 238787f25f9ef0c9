"""Command-line entry point.

Every subcommand writes its resolved configuration next to its primary output
(``<output>.runconfig.json``) and can be replayed bit-identically with
``qaff rerun <runconfig>``. QAFF_SEED overrides any --seed flag.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import analyze, calib, generate, inferalpha
from .corpus import (default_grammar, default_scorer, read_interchange,
                     sample_corpus, write_interchange)
from .corpus.interchange import InterchangeHeader
from .embed import ContextFeaturizer, fit_ngram, load_lm, save_lm
from .errors import QaffError
from .generate import GenerationConfig, Sampler, result_record
from .inferalpha import AlphaGrid, fit_sentence
from .quantile import TrainConfig, load_head, save_head, train

DEFAULT_PROMPTS = [["we"], ["luckily", "we"], ["painfully", "we"],
                   ["gladly", "we"], ["unfortunately", "we"]]


def _resolved_seed(args) -> int:
    env = os.environ.get("QAFF_SEED")
    return int(env) if env else args.seed


def _write_runconfig(args, out_path):
    cfg = {"subcommand": args.command,
           "args": {k: v for k, v in vars(args).items()
                    if k not in ("command", "func")}}
    cfg["args"]["seed"] = _resolved_seed(args)
    path = str(out_path) + ".runconfig.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, default=str)
        fh.write("\n")


def _load_sampler(args) -> Sampler:
    lm, feat = load_lm(args.lm)
    head = load_head(args.head)
    return Sampler(lm, head, feat)


def cmd_synth(args):
    seed = _resolved_seed(args)
    grammar = default_grammar(rng_seed=seed)
    scorer = default_scorer()
    feat = ContextFeaturizer(grammar.vocabulary, dim=args.dim, window=args.window,
                             seed=args.embed_seed)
    examples = sample_corpus(grammar, args.n, scorer, feat, seed=seed)
    header = InterchangeHeader(feat.out_dim, (scorer.channel,))
    write_interchange(header, examples, args.out)
    if args.lm_out:
        lm = fit_ngram([list(ex.seq) for ex in examples], order=args.order,
                       add_k=args.add_k)
        save_lm(args.lm_out, lm, feat)
    _write_runconfig(args, args.out)
    print(f"wrote {args.n} sentences to {args.out}")


def cmd_train(args):
    seed = _resolved_seed(args)
    _, examples = read_interchange(args.corpus)
    validation = None
    if args.validation:
        _, validation = read_interchange(args.validation)
    cfg = TrainConfig(batch_size=args.batch_size, epochs=args.epochs, lr=args.lr,
                      huber_k=args.huber_k, seed=seed, method=args.method)
    head, log = train(examples, cfg, channel=args.channel, validation=validation)
    save_head(args.out, head)
    _write_runconfig(args, args.out)
    for ep, (tr, vl) in enumerate(zip(log.train_losses, log.val_losses)):
        print(f"epoch {ep:3d}  train {tr:.6f}  val {vl:.6f}  lr {log.lrs[ep]:g}")
    print(f"wrote checkpoint to {args.out}")


def cmd_calibrate(args):
    _, examples = read_interchange(args.corpus)
    head = load_head(args.head)
    curve = calib.global_calibration(head, examples, channel=args.channel,
                                     min_count=args.min_count)
    calib.write_curve_csv(curve, args.out_csv)
    calib.write_summary_json(curve, args.channel, args.out_json)
    _write_runconfig(args, args.out_csv)
    print(f"max_abs_dev {curve.max_abs_deviation():.4f} "
          f"(aggregate {curve.aggregate_deviation():.4f})")


def cmd_predict(args):
    sampler = _load_sampler(args)
    tokens = args.text.split()
    feats = sampler.feat.featurize(tokens)
    traj = sampler.head.predict(feats)
    header = ["token"] + [f"q{l:.2f}" for l in np.linspace(0.05, 0.95, 10)]
    print("\t".join(header))
    for tok, row in zip(tokens, traj):
        print("\t".join([tok] + [f"{v:+.3f}" for v in row]))
    if args.out_csv:
        import csv as _csv
        with open(args.out_csv, "w", newline="", encoding="utf-8") as fh:
            w = _csv.writer(fh)
            w.writerow(header)
            for tok, row in zip(tokens, traj):
                w.writerow([tok] + [f"{v:.6f}" for v in row])
        _write_runconfig(args, args.out_csv)


def cmd_scan_variance(args):
    _, examples = read_interchange(args.corpus)
    head = load_head(args.head)
    trajs = analyze.trajectories_from(head, examples)
    peaks, table = analyze.scan_peaks(trajs, top_pct=args.top_pct)
    analyze.write_peaks_csv(peaks, args.out_csv)
    analyze.write_token_table_csv(table, args.out_tokens)
    _write_runconfig(args, args.out_csv)
    print(f"{len(peaks)} peaks at top_pct={args.top_pct}")


def cmd_transitions(args):
    _, examples = read_interchange(args.corpus)
    head = load_head(args.head)
    trajs = analyze.trajectories_from(head, examples)
    med = float(np.median([ex.scores[args.channel] for ex in examples]))
    stats, summary = analyze.transition_stats(trajs, args.pivot, marginal_median=med)
    analyze.write_transitions_csv(stats, args.out_csv)
    _write_runconfig(args, args.out_csv)
    print(f"{summary['n']} occurrences, mean gap {summary['mean_gap']:+.4f}")


def _gen_one(payload):
    sampler, prompt, cfg_kwargs, seed = payload
    cfg = GenerationConfig(**cfg_kwargs)
    res = sampler.sample_sentence(prompt, cfg, seed=seed)
    scorer = default_scorer()
    return result_record(prompt, cfg, res, scorer.score(res.tokens))


def cmd_generate(args):
    seed = _resolved_seed(args)
    sampler = _load_sampler(args)
    prompt = args.prompt.split()
    cfg_kwargs = dict(alpha=args.alpha, tail=args.tail, top_k=args.top_k,
                      top_p=args.top_p, max_tokens=args.max_tokens, seed=seed)
    payloads = [(sampler, prompt, cfg_kwargs, seed + i) for i in range(args.n)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(_gen_one, payloads))
    else:
        records = [_gen_one(p) for p in payloads]
    generate.write_jsonl(records, args.out)
    _write_runconfig(args, args.out)
    terminated = sum(r["terminated"] for r in records)
    print(f"wrote {len(records)} generations ({len(records) - terminated} unterminated)")


def _fit_one(payload):
    sampler, tokens = payload
    fit = fit_sentence(sampler, tokens)
    return fit


def cmd_infer_alpha(args):
    sampler = _load_sampler(args)
    if os.path.exists(args.text):
        with open(args.text, encoding="utf-8") as fh:
            sentences = [line.split() for line in fh if line.strip()]
    else:
        sentences = [args.text.split()]
    payloads = [(sampler, toks) for toks in sentences]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            fits = list(pool.map(_fit_one, payloads))
    else:
        fits = [_fit_one(p) for p in payloads]
    inferalpha.write_fits_csv(fits, args.out_csv)
    inferalpha.write_source_json(fits, args.out_json)
    _write_runconfig(args, args.out_csv)
    print(f"mean reported alpha {inferalpha.fit_source(fits):.3f} over {len(fits)} sentences")


def cmd_recover(args):
    seed = _resolved_seed(args)
    sampler = _load_sampler(args)
    sizes = [int(s) for s in args.sizes.split(",")]
    report = inferalpha.recovery_experiment(
        sampler, default_scorer(), AlphaGrid(), DEFAULT_PROMPTS,
        n_per_alpha=max(sizes), n_sims=args.sims, sizes=sizes, seed=seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump({"sizes": report.sizes,
                   "accuracy": {str(k): v for k, v in report.accuracy.items()},
                   "pearson": {str(k): v for k, v in report.pearson.items()},
                   "details": report.details}, fh, indent=2)
        fh.write("\n")
    _write_runconfig(args, args.out)
    for s in report.sizes:
        print(f"size {s}: accuracy {report.accuracy[s]:.3f} pearson {report.pearson[s]:.3f}")


def cmd_rerun(args):
    with open(args.config, encoding="utf-8") as fh:
        cfg = json.load(fh)
    argv = [cfg["subcommand"]]
    for k, v in cfg["args"].items():
        if v is None or v is False:
            continue
        flag = "--" + k.replace("_", "-")
        if v is True:
            argv.append(flag)
        else:
            argv += [flag, str(v)]
    return main(argv)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qaff")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="sample the synthetic scored corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dim", type=int, default=32)
    s.add_argument("--window", type=int, default=4)
    s.add_argument("--embed-seed", type=int, default=777)
    s.add_argument("--lm-out", default=None)
    s.add_argument("--order", type=int, default=3)
    s.add_argument("--add-k", type=float, default=0.1)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train a quantile head on a corpus file")
    s.add_argument("--corpus", required=True)
    s.add_argument("--validation", default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--method", choices=["mc", "td0"], default="mc")
    s.add_argument("--channel", default="valence")
    s.add_argument("--batch-size", type=int, default=20)
    s.add_argument("--epochs", type=int, default=25)
    s.add_argument("--lr", type=float, default=1e-4)
    s.add_argument("--huber-k", type=float, default=0.001)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("calibrate", help="global calibration of a head")
    s.add_argument("--corpus", required=True)
    s.add_argument("--head", required=True)
    s.add_argument("--channel", default="valence")
    s.add_argument("--min-count", type=int, default=100)
    s.add_argument("--out-csv", required=True)
    s.add_argument("--out-json", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("predict", help="print the quantile trajectory for text")
    s.add_argument("--lm", required=True)
    s.add_argument("--head", required=True)
    s.add_argument("--text", required=True)
    s.add_argument("--out-csv", default=None)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("scan-variance", help="variance peaks and token table")
    s.add_argument("--corpus", required=True)
    s.add_argument("--head", required=True)
    s.add_argument("--top-pct", type=float, default=1.0)
    s.add_argument("--out-csv", required=True)
    s.add_argument("--out-tokens", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_scan_variance)

    s = sub.add_parser("transitions", help="pivot transition statistics")
    s.add_argument("--corpus", required=True)
    s.add_argument("--head", required=True)
    s.add_argument("--pivot", default="but")
    s.add_argument("--channel", default="valence")
    s.add_argument("--out-csv", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_transitions)

    s = sub.add_parser("generate", help="quantile-targeted sampling")
    s.add_argument("--lm", required=True)
    s.add_argument("--head", required=True)
    s.add_argument("--prompt", required=True)
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--tail", choices=["lower", "upper"], default="lower")
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--top-k", type=int, default=50)
    s.add_argument("--top-p", type=float, default=0.95)
    s.add_argument("--max-tokens", type=int, default=40)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("infer-alpha", help="best-fitting alpha for text")
    s.add_argument("--lm", required=True)
    s.add_argument("--head", required=True)
    s.add_argument("--text", required=True, help="sentence or path to one-per-line file")
    s.add_argument("--out-csv", required=True)
    s.add_argument("--out-json", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_infer_alpha)

    s = sub.add_parser("recover", help="generation-recovery experiment")
    s.add_argument("--lm", required=True)
    s.add_argument("--head", required=True)
    s.add_argument("--sizes", default="50,100")
    s.add_argument("--sims", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_recover)

    s = sub.add_parser("rerun", help="replay a subcommand from its runconfig")
    s.add_argument("config")
    s.set_defaults(func=cmd_rerun)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except QaffError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
