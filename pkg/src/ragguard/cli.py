"""Command-line entry points for every pipeline stage.

Subcommands: gen-data, train, probe2d, signals, detect, simulate-bound,
eval, serve. Every subcommand accepts --seed and --config (a JSON file of
flag defaults; explicit flags win). Exit codes: 0 success, 1 usage error,
2 data or format error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import datagen, evaluation, theory
from .decoupler import (
    SURFACE_FORMS,
    TrainConfig,
    embedding_key,
    load_checkpoint,
    orient_to_canonical,
    probe_centroids,
    probe_point,
    save_checkpoint,
    train,
    train_probe_2d,
)
from .embed import hash_embed
from .errors import DataFormatError, RagGuardError
from .gateway import GatewayConfig, GatewayService, make_server, serve
from .policy import PolicyConfig
from .signals import ConflictSignals, SyntheticOracleProvider, format_signal_row
from .signals import sigma_fact as _sigma_fact
from .signals import sigma_sem as _sigma_sem

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parse_fractions(text: str, n: int, flag: str) -> tuple[float, ...]:
    parts = text.split(",")
    if len(parts) != n:
        raise _UsageError(f"{flag} needs {n} comma-separated fractions")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise _UsageError(f"{flag}: {exc}") from exc


def _apply_config_defaults(args: argparse.Namespace) -> None:
    if not getattr(args, "config", None):
        return
    with open(args.config, "r", encoding="utf-8") as fh:
        try:
            defaults = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{args.config}: invalid JSON: {exc}") from exc
    if not isinstance(defaults, dict):
        raise DataFormatError(f"{args.config}: config must be a JSON object")
    for key, value in defaults.items():
        attr = key.replace("-", "_")
        if getattr(args, attr, None) in (None, False):
            setattr(args, attr, value)


def _embed_all_forms(triples, dim: int, seed: int) -> dict:
    out = {}
    for t in triples:
        for form in SURFACE_FORMS:
            out[embedding_key(t.base.id, form)] = hash_embed(getattr(t, form), dim, seed)
    return out


def _cmd_gen_data(args) -> int:
    triples = datagen.build_dataset(
        args.n, args.seed,
        split_ratios=_parse_fractions(args.ratios, 3, "--ratios"),
    )
    datagen.write_triples(args.out, triples)
    print(f"wrote {len(triples)} triples to {args.out}")
    if args.qa_out:
        cases = datagen.build_qa_cases(
            triples,
            mix=_parse_fractions(args.mix, 3, "--mix"),
            noise_rate=args.noise_rate,
            seed=args.seed,
            known_rate=args.known_rate,
        )
        datagen.write_qa_cases(args.qa_out, cases)
        print(f"wrote {len(cases)} QA cases to {args.qa_out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    triples = datagen.read_triples(args.triples)
    base = _embed_all_forms(triples, args.embed_dim, args.embed_seed)
    cfg = TrainConfig(
        tau=args.tau, epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.lr, seed=args.seed, optimizer=args.optimizer,
        head_dim=args.head_dim,
    )
    pair = train(triples, base, cfg)
    pair.train_meta["embed_dim"] = args.embed_dim
    pair.train_meta["embed_seed"] = args.embed_seed
    save_checkpoint(args.out, pair)
    curve = pair.train_meta["loss_curve"]
    print(f"trained {cfg.epochs} epochs; loss {curve[0]:.4f} -> {curve[-1]:.4f}")
    print(f"wrote checkpoint to {args.out}")
    return EXIT_OK


def _cmd_probe2d(args) -> int:
    triples = datagen.read_triples(args.triples)
    base = _embed_all_forms(triples, args.embed_dim, args.embed_seed)
    train_split = [t for t in triples if t.split == "train"]
    if not train_split:
        raise DataFormatError("no train-split triples in input")

    def pair_lists(subset):
        anchors, variants, labels = [], [], []
        for t in subset:
            anchor = base[embedding_key(t.base.id, "statement")]
            for form, label in (("paraphrase", "para"), ("contradiction", "conf"),
                                ("unrelated", "irr")):
                anchors.append(anchor)
                variants.append(base[embedding_key(t.base.id, form)])
                labels.append(label)
        return anchors, variants, labels

    cfg = TrainConfig(seed=args.seed, epochs=args.probe_epochs,
                      learning_rate=args.lr, head_dim=2)
    anchors, variants, labels = pair_lists(train_split)
    head = train_probe_2d(anchors, variants, labels, cfg)

    emit = [t for t in triples if t.split == args.split] or triples
    rows = []
    for t in emit:
        anchor = base[embedding_key(t.base.id, "statement")]
        for form, label in (("paraphrase", "para"), ("contradiction", "conf"),
                            ("unrelated", "irr")):
            x, y = probe_point(head, anchor, base[embedding_key(t.base.id, form)])
            rows.append({"id": t.base.id, "label": label, "x": repr(float(x)),
                         "y": repr(float(y))})
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=("id", "label", "x", "y"),
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    a, v, l = pair_lists(emit)
    oriented = orient_to_canonical(probe_centroids(head, a, v, l))
    summary = {k: [round(float(c), 4) for c in xy] for k, xy in oriented.items()}
    print(f"wrote {len(rows)} probe points to {args.out}")
    print(f"oriented centroids: {json.dumps(summary, sort_keys=True)}")
    return EXIT_OK


def _cmd_signals(args) -> int:
    pair = load_checkpoint(args.checkpoint)
    meta = pair.train_meta
    dim = args.embed_dim or int(meta.get("embed_dim", 256))
    eseed = int(meta.get("embed_seed", args.embed_seed))
    provider = SyntheticOracleProvider(seed=args.seed, noise=args.ans_noise)
    n = 0
    with open(args.infile, "r", encoding="utf-8") as src, \
            open(args.out, "w", encoding="utf-8", newline="\n") as dst:
        for lineno, line in enumerate(src, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                query, context = row["query"], row["context"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataFormatError(f"{args.infile}:{lineno}: {exc}") from exc
            qid = str(row.get("query_id", f"q{lineno:05d}"))
            sig = ConflictSignals(
                sigma_sem=_sigma_sem(hash_embed(query, dim, eseed),
                                     hash_embed(context, dim, eseed), pair),
                sigma_fact=_sigma_fact(hash_embed(query, dim, eseed),
                                       hash_embed(context, dim, eseed), pair),
                sigma_ans=provider.score(query, query_id=qid),
                query_id=qid,
            )
            dst.write(json.dumps(format_signal_row(sig)) + "\n")
            n += 1
    print(f"wrote {n} signal rows to {args.out}")
    return EXIT_OK


def _cmd_detect(args) -> int:
    labels = {}
    for case in datagen.read_qa_cases(args.qa):
        labels[case.id] = int(case.context_type == "conflicting")
    recs = []
    with open(args.signals, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                qid = row["query_id"]
                score = float(row["sigma_sem"]) - float(row["sigma_fact"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"{args.signals}:{lineno}: {exc}") from exc
            if qid not in labels:
                raise DataFormatError(f"{args.signals}:{lineno}: unknown query_id {qid!r}")
            recs.append(evaluation.DetectionRecord(score=score, label=labels[qid]))
    if not recs:
        raise DataFormatError("no signal rows")
    thresholds = sorted({r.score for r in recs})
    sweep_rows = [
        {"threshold": repr(th), "f1": repr(evaluation.detection_f1(recs, th))}
        for th in thresholds
    ]
    best = max(sweep_rows, key=lambda r: float(r["f1"]))
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=("threshold", "f1"),
                                    lineterminator="\n")
            writer.writeheader()
            writer.writerows(sweep_rows)
    result = {
        "auroc": evaluation.auroc(recs),
        "best_threshold": float(best["threshold"]),
        "best_f1": float(best["f1"]),
        "n": len(recs),
    }
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def _cmd_simulate_bound(args) -> int:
    with open(args.grid, "r", encoding="utf-8") as fh:
        try:
            grid = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{args.grid}: invalid JSON: {exc}") from exc
    grid = {k: (v if isinstance(v, list) else [v]) for k, v in grid.items()}
    rows = theory.sweep(grid, n=args.trials, seed=args.seed)
    theory.write_sweep_csv(args.out, rows)
    print(f"wrote {len(rows)} sweep rows to {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    policy_cfg = PolicyConfig(
        sem_threshold=args.sem_threshold, fact_threshold=args.fact_threshold,
        ans_high=args.ans_high, ans_low=args.ans_low,
    )
    report = evaluation.run_benchmark(
        args.qa, args.checkpoint, policy_cfg, seed=args.seed, mode=args.mode,
        ans_noise=args.ans_noise,
    )
    evaluation.write_report(args.out, report)
    print(f"wrote report to {args.out}")
    if args.csv:
        baseline = evaluation.run_benchmark(
            args.qa, args.checkpoint, policy_cfg, seed=args.seed,
            mode="always-context", ans_noise=args.ans_noise,
        )
        rows = evaluation.report_to_csv_rows(
            {args.mode: report, "always-context": baseline}
        )
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=("method", "kgrr", "mcor", "em", "f1"),
                                    lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v
                                 for k, v in row.items()})
        print(f"wrote summary table to {args.csv}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    cfg = GatewayConfig.from_file(args.config) if args.config else GatewayConfig.from_file()
    if args.checkpoint:
        cfg.checkpoint_path = args.checkpoint
    if args.addr:
        cfg.listen_addr = args.addr
    serve(cfg)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="ragguard", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", help="JSON file of flag defaults")

    p = sub.add_parser("gen-data", help="generate the synthetic conflict corpus")
    common(p)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--out", required=True)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--qa-out")
    p.add_argument("--mix", default="0.4,0.3,0.3")
    p.add_argument("--noise-rate", type=float, default=0.0)
    p.add_argument("--known-rate", type=float, default=0.6)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train the projection heads")
    common(p)
    p.add_argument("--triples", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    p.add_argument("--tau", type=float, default=TrainConfig.tau)
    p.add_argument("--head-dim", type=int, default=TrainConfig.head_dim)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--embed-dim", type=int, default=256)
    p.add_argument("--embed-seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("probe2d", help="train the 2-D pair probe and emit scatter CSV")
    common(p)
    p.add_argument("--triples", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=datagen.SPLITS)
    p.add_argument("--probe-epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=5e-2)
    p.add_argument("--embed-dim", type=int, default=256)
    p.add_argument("--embed-seed", type=int, default=0)
    p.set_defaults(func=_cmd_probe2d)

    p = sub.add_parser("signals", help="batch signal extraction, JSONL in/out")
    common(p)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--embed-dim", type=int, default=0,
                   help="0 = use the checkpoint's recorded dim")
    p.add_argument("--embed-seed", type=int, default=0)
    p.add_argument("--ans-noise", type=float, default=0.1)
    p.set_defaults(func=_cmd_signals)

    p = sub.add_parser("detect", help="threshold sweep and AUROC for conflict scores")
    common(p)
    p.add_argument("--signals", required=True)
    p.add_argument("--qa", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("simulate-bound", help="sweep the error-gap closed forms vs simulation")
    common(p)
    p.add_argument("--grid", required=True, help="JSON {param: [values]}")
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate_bound)

    p = sub.add_parser("eval", help="run the end-to-end benchmark")
    common(p)
    p.add_argument("--qa", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.add_argument("--mode", default="policy", choices=evaluation.MODES)
    p.add_argument("--ans-noise", type=float, default=0.25)
    p.add_argument("--sem-threshold", type=float, default=0.65)
    p.add_argument("--fact-threshold", type=float, default=0.40)
    p.add_argument("--ans-high", type=float, default=0.7)
    p.add_argument("--ans-low", type=float, default=0.3)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", help="run the JSON HTTP service")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--addr", help="host:port")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command != "serve":
            _apply_config_defaults(args)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RagGuardError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
