"""Command-line entry point: ingest, synth, sample, plan, generate, evaluate, stats."""
from __future__ import annotations

import argparse
import json
import logging
import random
import sys

from .catalog import CatalogError, load_catalog, write_catalog
from .dialogue.backends import BackendError, make_backend
from .eval import (ReferenceExtractor, baseline_query, extract_query, gold_query, index_products, metrics, rank)
from .pipeline import (RecordError, RunConfig, episode_seed, generate_records, open_catalog, read_run,
                       run_stats, stats_table, write_run)
from .planner import PlannerConfig, PlanningError, plan_dialogue
from .preference import sample_preference, sample_target
from .synthetic import synthetic_records

logger = logging.getLogger("shopdial")

CRITERIA = ("gain-ratio", "gain", "gini")


def _emit(records, out) -> None:
    lines = [json.dumps(r, ensure_ascii=False, sort_keys=True) for r in records]
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as f:
            f.writelines(line + "\n" for line in lines)
    else:
        for line in lines:
            print(line)


def _run_config(args) -> RunConfig:
    return RunConfig(catalog=args.catalog, domain=args.domain, n=args.n, seed=args.seed,
                     criterion=args.criterion, max_steps_per_turn=args.max_steps_per_turn,
                     strategy=getattr(args, "strategy", "interactive"),
                     backend=getattr(args, "backend", "template"),
                     template_dir=getattr(args, "template_dir", None))


def cmd_ingest(args) -> int:
    catalog = load_catalog(args.catalog, args.domain)
    write_catalog(catalog, args.out)
    r = catalog.report
    print(f"{len(catalog)} products in {len(catalog.categories)} categories written to {args.out} "
          f"({r.skipped} malformed skipped, {r.discarded} discarded with < 2 features)")
    return 0


def cmd_synth(args) -> int:
    _emit(synthetic_records(args.n, args.seed), args.out)
    return 0


def _preferences(catalog, config: RunConfig):
    for i in range(config.n):
        rng = random.Random(episode_seed(config.seed, i))
        yield i, sample_preference(sample_target(catalog, rng), catalog, rng, config.interest_weights)


def cmd_sample(args) -> int:
    config = _run_config(args)
    catalog = open_catalog(config.catalog, config.domain)
    _emit(({"index": i, "preference": p.to_record()} for i, p in _preferences(catalog, config)), args.out)
    return 0


def cmd_plan(args) -> int:
    config = _run_config(args)
    catalog = open_catalog(config.catalog, config.domain)
    planner_config: PlannerConfig = config.planner_config()
    out = []
    for i, pref in _preferences(catalog, config):
        rec = {"index": i, "preference": pref.to_record()}
        try:
            result = plan_dialogue(catalog, pref, planner_config)
        except PlanningError as e:
            rec.update(status="failed", reason=str(e))
        else:
            rec.update(status="ok", plan_history=[e.to_record() for e in result.plan_history],
                       trace=[it.to_record() for it in result.trace], stop_reason=result.stop_reason,
                       converged_ids=list(result.final_candidates))
        out.append(rec)
    _emit(out, args.out)
    return 0


def cmd_generate(args) -> int:
    config = _run_config(args)
    # config and backend problems are fatal before any episode runs
    backend = make_backend(config.backend)
    catalog = open_catalog(config.catalog, config.domain)
    summary = write_run(args.out, config, generate_records(catalog, config, backend, args.workers))
    print(f"episodes: {summary['n']}  ok: {summary['ok']}  failed: {summary['failed']}")
    for reason, count in summary["failure_reasons"].items():
        print(f"  {reason}: {count}")
    return 0


def cmd_evaluate(args) -> int:
    run = read_run(args.records)
    spec = args.catalog or (run.header or {}).get("config", {}).get("catalog")
    if not spec:
        raise RecordError("no catalog given and none recorded in the file header")
    catalog = open_catalog(spec, args.domain)
    convs = run.conversations()
    if not convs:
        raise RecordError(f"{args.records}: no successful episodes to evaluate")
    index = index_products(catalog)
    extractor = ReferenceExtractor(catalog.categories)
    rankings, queries = [], []
    for rec, conv in zip(run.ok(), convs):
        gold = gold_query(conv).serialize()
        if args.extractor == "baseline":
            pred = baseline_query(conv)
            result = rank(index, pred, args.k)
        else:
            query = extract_query(conv, extractor)
            pred = query.serialize()
            result = rank(index, query, args.k)
        relevant = rec["converged_ids"] if args.gold == "family" else conv.preference.target_id
        rankings.append((result, relevant))
        queries.append((pred, gold))
    report = metrics(rankings, args.ks, queries)
    record = {"type": "metrics", "extractor": args.extractor, "gold": args.gold, "records": args.records,
              **report.to_record()}
    print(json.dumps(record, sort_keys=True))
    print(report.table())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")
    return 0


def cmd_stats(args) -> int:
    run = read_run(args.records)
    stats = run_stats(run.episodes)
    if args.json:
        print(json.dumps(stats, sort_keys=True))
    print(stats_table(stats))
    return 0


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shopdial", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def episode_flags(p, out_required=False):
        p.add_argument("--catalog", default="synthetic:1000:0",
                       help="catalog file, or synthetic:N[:SEED] (default %(default)s)")
        p.add_argument("--domain", default="")
        p.add_argument("--n", type=int, default=10, help="episode count")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--criterion", choices=CRITERIA, default="gain-ratio")
        p.add_argument("--max-steps-per-turn", type=_positive_int, default=None)
        p.add_argument("--out", required=out_required)

    p = sub.add_parser("ingest", help="normalize a raw product file")
    p.add_argument("--catalog", required=True)
    p.add_argument("--domain", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="write a synthetic raw product file")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sample", help="sample preferences")
    episode_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("plan", help="sample and plan episodes without verbalizing")
    episode_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("generate", help="generate conversation episodes")
    episode_flags(p, out_required=True)
    p.add_argument("--strategy", choices=("single-pass", "interactive"), default="interactive")
    p.add_argument("--backend", choices=("template", "remote"), default="template")
    p.add_argument("--template-dir", default=None, help="directory overriding the bundled prompt templates")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="query generation and ranking metrics over a run file")
    p.add_argument("records")
    p.add_argument("--catalog", default=None, help="defaults to the catalog named in the file header")
    p.add_argument("--domain", default="")
    p.add_argument("--extractor", choices=("reference", "baseline"), default="reference")
    p.add_argument("--gold", choices=("family", "target"), default="family",
                   help="relevant products: the converged candidate family, or the sampled target only")
    p.add_argument("--k", type=_positive_int, default=100, help="ranking depth")
    p.add_argument("--ks", type=_positive_int, nargs="+", default=[1, 10, 100])
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="per-domain dataset statistics")
    p.add_argument("records")
    p.add_argument("--json", action="store_true", help="also print the statistics as one JSON record")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CatalogError, RecordError, BackendError, OSError, ValueError) as e:
        print(f"shopdial {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
