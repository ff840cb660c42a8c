"""Command-line interface.

Subcommands: validate, make-bank, split, ingest, gen-qa, evolve, filter,
reward, eval, serve. Gateway profiles live in a YAML config file under
``gateways.<name>``; auth tokens are referenced by environment variable
name, never stored.
"""
from __future__ import annotations

import argparse
import json
import random
import sys
import time
from pathlib import Path

import yaml

from . import filterbank, ingest, metrics, qagen, records, rewards, templates
from .gateway import gateway_from_config
from .records import DudpRecord, TaskCategory


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}


def _read_jsonl(path: str) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def cmd_validate(args) -> int:
    bad = 0
    total = 0
    with open(args.corpus, encoding="utf-8") as handle:
        seen: set[str] = set()
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            total += 1
            try:
                record = records.validate_record(line, require_schema=True)
                if record.id in seen:
                    raise records.SchemaError("id", "duplicate_id", f"duplicate {record.id!r}")
                seen.add(record.id)
            except records.DudpError as exc:
                bad += 1
                print(f"{args.corpus}:{line_no}: {exc}")
    print(f"validate: {total - bad}/{total} records valid")
    return 1 if bad else 0


def cmd_make_bank(args) -> int:
    bank = templates.build_starter_bank()
    count = templates.save_template_bank(bank, args.out)
    print(f"make-bank: wrote {count} templates to {args.out}")
    return 0


def cmd_split(args) -> int:
    ratios = [float(x) for x in args.ratios.split(",")]
    if len(ratios) != 3:
        print("split: --ratios expects train,val,test", file=sys.stderr)
        return 2
    corpus = list(records.read_corpus(args.corpus))
    assigned = records.partition_splits(
        corpus, dict(zip(records.SPLITS, ratios)), args.seed)
    records.write_corpus(assigned, args.out)
    sizes = {name: sum(1 for r in assigned if r.split == name) for name in records.SPLITS}
    print(f"split: {sizes}")
    return 0


def cmd_ingest(args) -> int:
    config = ingest.AdapterConfig.from_dict(_load_config(args.config))
    errors: list[ingest.SampleError] = []
    emitted = records.write_corpus(
        ingest.ingest_dataset(config, args.root, errors), args.out)
    if args.errors:
        ingest.write_error_report(errors, args.errors)
    print(f"ingest: {emitted} records, {len(errors)} failures")
    return 0


_FORM_DRAW_KEY = "form"


def generate_corpus_qa(corpus: list[DudpRecord], bank: templates.TemplateBank,
                       seed: int, mcq_ratio: float) -> list[qagen.QaPair]:
    """Deterministic QA generation for a whole corpus.

    Each record draws independently (keyed on its id) whether to emit an
    MCQ, so output is stable under corpus reordering and sharding.
    """
    pairs = []
    for record in corpus:
        want_mcq = random.Random(f"{_FORM_DRAW_KEY}|{record.id}|{seed}").random() < mcq_ratio
        if want_mcq:
            pool = qagen.build_distractor_pool(record, corpus)
            if len(pool) >= 3:
                pairs.append(qagen.build_mcq(record, pool, seed))
                continue
        pairs.append(qagen.render_qa(record, bank, seed))
    return pairs


def cmd_gen_qa(args) -> int:
    corpus = list(records.read_corpus(args.corpus))
    bank = templates.load_template_bank(args.bank) if args.bank \
        else templates.build_starter_bank()
    pairs = generate_corpus_qa(corpus, bank, args.seed, args.mcq_ratio)
    qagen.write_qa_corpus(pairs, args.out)
    print(f"gen-qa: {len(pairs)} pairs from {len(corpus)} records")
    return 0


def cmd_evolve(args) -> int:
    config = _load_config(args.config)
    gateway = gateway_from_config(config, args.gateway_profile)
    evolve = qagen.evolve_depth if args.mode == "depth" else qagen.evolve_breadth
    pairs = qagen.read_qa_corpus(args.input)
    out, skipped = [], 0
    for qa in pairs:
        if qa.answer_form != "free_text":
            skipped += 1
            continue
        try:
            out.append(evolve(qa, gateway))
        except qagen.QagenError as exc:
            skipped += 1
            print(f"evolve: {qa.qa_id}: {exc}", file=sys.stderr)
    out.sort(key=lambda qa: qa.qa_id)
    qagen.write_qa_corpus(out, args.out)
    print(f"evolve: {len(out)} evolved, {skipped} skipped")
    return 0


def cmd_filter(args) -> int:
    stages = tuple(s.strip() for s in args.stages.split(",") if s.strip())
    rules_cfg = _load_config(args.rules)
    if "sensitive_patterns" in rules_cfg:
        rules_cfg["sensitive_patterns"] = tuple(rules_cfg["sensitive_patterns"])
    cfg = filterbank.FilterRuleConfig(**rules_cfg) if rules_cfg \
        else filterbank.FilterRuleConfig()
    judge = None
    if "semantic" in stages:
        judge = gateway_from_config(_load_config(args.config), args.judge_profile)
    corpus = qagen.read_qa_corpus(args.input)
    record_index = {r.id: r for r in records.read_corpus(args.records)}
    clock = None
    if args.wall_clock:
        clock = lambda: time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    passed, audit = filterbank.run_pipeline(corpus, record_index, cfg, judge,
                                            stages=stages, clock=clock)
    qagen.write_qa_corpus(passed, args.out)
    filterbank.write_audit_log(audit, args.audit)
    print(f"filter: {len(passed)}/{len(corpus)} passed "
          f"({len(corpus) - len(passed)} rejected)")
    return 0


def cmd_reward(args) -> int:
    spec = rewards.FormatSpec.from_dict(json.loads(Path(args.spec).read_text())) \
        if args.spec else rewards.FormatSpec()
    gold = {qa.qa_id: qa for qa in qagen.read_qa_corpus(args.gold)}
    config = rewards.RewardConfig(spec=spec, tolerance=args.tolerance,
                                  gate_outcome_on_format=args.gate_on_format,
                                  on_ragged_group=args.on_ragged)
    signals = rewards.reward_batch(rewards.read_rollouts(args.rollouts), gold, config)
    rewards.write_reward_signals(signals, args.out)
    mean_total = sum(s.total for s in signals) / len(signals) if signals else 0.0
    print(f"reward: {len(signals)} rollouts, mean total {mean_total:.3f}")
    return 0


_TASK_TO_KIND = {
    TaskCategory.DIAGNOSTIC_CLASSIFICATION: "DD",
    TaskCategory.STANDARD_VIEW: "VRA",
    TaskCategory.TISSUE_SEGMENTATION: "LL",
    TaskCategory.ANATOMICAL_RECOGNITION: "OD",
    TaskCategory.BIOMETRIC_MEASUREMENT: "CVE",
}


def gold_index_from_qa(qa_path: str, records_path: str) -> dict[str, dict]:
    """Build an eval gold index from a QA corpus, mapping protocol task
    categories onto benchmark task kinds."""
    record_index = {r.id: r for r in records.read_corpus(records_path)}
    index = {}
    for qa in qagen.read_qa_corpus(qa_path):
        record = record_index.get(qa.record_id)
        if record is None:
            continue
        index[qa.qa_id] = {"task_kind": _TASK_TO_KIND[record.task],
                           "target": qa.gold_label or qa.answer}
    return index


def cmd_eval(args) -> int:
    preds = _read_jsonl(args.preds)
    first = _read_jsonl(args.gold)[:1]
    if first and "target" in first[0]:
        gold = {g["qa_id"]: g for g in _read_jsonl(args.gold)}
    else:
        if not args.records:
            print("eval: QA-corpus gold needs --records", file=sys.stderr)
            return 2
        gold = gold_index_from_qa(args.gold, args.records)
    weights = json.loads(Path(args.weights).read_text()) if args.weights else {}
    embedder = None
    embedder_profile = args.embedder_profile or ""
    if embedder_profile:
        embedder = gateway_from_config(_load_config(args.config), embedder_profile)
    config = metrics.EvalConfig(tolerance=args.tolerance, weights=weights,
                                embedder_profile=embedder_profile)
    report = metrics.eval_run(preds, gold, config, embedder)
    if args.out:
        metrics.write_report(report, args.out)
    print(metrics.render_table(report, name=args.name))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .review import ReviewService
    from .review_api import create_app

    qa_index = {}
    record_index = {}
    if args.qa:
        qa_index = {qa.qa_id: qa for qa in qagen.read_qa_corpus(args.qa)}
    if args.records:
        record_index = {r.id: r for r in records.read_corpus(args.records)}
    service = ReviewService(store_dir=args.store_dir)
    app = create_app(service, qa_index, record_index)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dudp",
                                     description="ultrasound corpus curation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a corpus file")
    p.add_argument("corpus")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("make-bank", help="write the starter template bank")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_bank)

    p = sub.add_parser("split", help="assign train/val/test splits")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("ingest", help="convert a public dataset layout")
    p.add_argument("--config", required=True, help="adapter config YAML")
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--errors", default="")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("gen-qa", help="generate QA pairs from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--bank", default="")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mcq-ratio", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_qa)

    p = sub.add_parser("evolve", help="rewrite questions via a model gateway")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--mode", choices=("depth", "breadth"), required=True)
    p.add_argument("--gateway-profile", required=True)
    p.add_argument("--config", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("filter", help="run the quality-gate pipeline")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--stages", default="rule")
    p.add_argument("--rules", default="", help="rule config YAML")
    p.add_argument("--judge-profile", default="judge")
    p.add_argument("--config", default="")
    p.add_argument("--out", required=True)
    p.add_argument("--audit", required=True)
    p.add_argument("--wall-clock", action="store_true",
                   help="real timestamps instead of the reproducible default")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("reward", help="score rollouts into reward signals")
    p.add_argument("--rollouts", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--spec", default="", help="format spec JSON")
    p.add_argument("--tolerance", type=float, default=0.02)
    p.add_argument("--gate-on-format", action="store_true")
    p.add_argument("--on-ragged", choices=("warn", "fail"), default="warn")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reward)

    p = sub.add_parser("eval", help="score predictions into a metric report")
    p.add_argument("--preds", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--records", default="", help="corpus file when gold is a QA corpus")
    p.add_argument("--tolerance", type=float, default=0.05)
    p.add_argument("--weights", default="")
    p.add_argument("--embedder-profile", default="")
    p.add_argument("--config", default="")
    p.add_argument("--name", default="model")
    p.add_argument("--out", default="")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the review service API")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--store-dir", required=True)
    p.add_argument("--qa", default="")
    p.add_argument("--records", default="")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
