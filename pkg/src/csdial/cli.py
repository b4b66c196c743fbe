"""Command-line entry points.

Verbs: synth, ingest, clean, build-kb, train-ie, eval-ie, eval-tod, serve.
Global flags --config/--seed/--debug; --config names a JSON file whose keys
preset any flag's default (explicit flags still win).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .cleaning import CleaningConfig, clean_corpus
from .corpus import CorpusSplit, load_corpus, repair_entity_types, write_corpus
from .generators import OracleGenerator, RetrievalGenerator
from .ie.pipeline import ModelBundle, evaluate_ie, train_models
from .ie.tagger import TrainingConfig
from .kb import build_local_kb, build_user_goal, write_local_kbs
from .runtime import evaluate_tod
from .schema import example_schema, load_schema, write_schema
from .service import EvalService, SessionAsset, make_server
from .synth import synthesize_corpus


def _load_split(args) -> tuple[CorpusSplit, object]:
    schema = load_schema(args.schema)
    split = load_corpus(args.corpus, schema)
    return split, schema


def _pick(split: CorpusSplit, name: str):
    return {"train": split.train, "dev": split.dev, "test": split.test, "all": split.all_dialogues()}[name]


def _emit_json(payload: dict, path: str | None) -> None:
    if path:
        Path(path).write_text(json.dumps(payload, ensure_ascii=False, indent=1), encoding="utf-8")


def cmd_synth(args) -> int:
    schema = load_schema(args.schema) if args.schema else example_schema()
    split = synthesize_corpus(args.seed, args.n, schema, redundancy_rate=args.redundancy)
    write_corpus(split, args.out)
    if not args.schema:
        write_schema(schema, Path(args.out) / "schema.json")
    print(f"wrote {args.n} dialogues to {args.out} "
          f"(train/dev/test = {len(split.train)}/{len(split.dev)}/{len(split.test)})")
    return 0


def cmd_ingest(args) -> int:
    split, schema = _load_split(args)
    dialogues = split.all_dialogues()
    n_turns = sum(len(d.turns) for d in dialogues)
    print(f"loaded {len(dialogues)} dialogues, {n_turns} turns: all valid")
    if args.repair:
        diags = []
        split = CorpusSplit(
            train=tuple(repair_entity_types(d, schema, diags) for d in split.train),
            dev=tuple(repair_entity_types(d, schema, diags) for d in split.dev),
            test=tuple(repair_entity_types(d, schema, diags) for d in split.test),
        )
        retyped = sum(1 for x in diags if x.new_type)
        unrepairable = sum(1 for x in diags if x.new_type is None)
        print(f"repair: {retyped} clusters retyped, {unrepairable} unrepairable")
        if args.debug:
            for x in diags:
                print(f"  {x.dialogue_id}/{x.entity_id}: {x.old_type} -> {x.new_type}")
    if args.out:
        write_corpus(split, args.out)
        print(f"wrote normalized corpus to {args.out}")
    return 0


def cmd_clean(args) -> int:
    split, _ = _load_split(args)
    cfg = CleaningConfig.from_json(args.cleaning_config) if args.cleaning_config else CleaningConfig()
    out_split = {}
    totals = None
    for name in ("train", "dev", "test"):
        cleaned, stats = clean_corpus(list(getattr(split, name)), cfg)
        out_split[name] = tuple(cleaned)
        if totals is None:
            totals = stats
        else:
            totals.add(stats)
    write_corpus(CorpusSplit(**out_split), args.out)
    print(f"turns: {totals.original_turns} -> {totals.final_turns} "
          f"({totals.percent_removed:.1%} removed)")
    print(f"verdicts: repetition={totals.repetition} confirmation={totals.confirmation} "
          f"interjection={totals.interjection}")
    return 0


def cmd_build_kb(args) -> int:
    split, schema = _load_split(args)
    dialogues = _pick(split, args.split)
    paths = write_local_kbs(list(dialogues), schema, args.out)
    print(f"wrote {len(paths)} local KBs to {args.out}")
    return 0


def _training_config(args) -> TrainingConfig:
    if args.train_config:
        return TrainingConfig.from_json(json.loads(Path(args.train_config).read_text(encoding="utf-8")))
    return TrainingConfig(seed=args.seed)


def cmd_train_ie(args) -> int:
    split, schema = _load_split(args)
    cfg = _training_config(args)
    bundle = train_models(list(split.train), schema, cfg, seed=args.seed, verbose=args.debug)
    bundle.save(args.out)
    print(f"saved models to {args.out}")
    return 0


def cmd_eval_ie(args) -> int:
    split, schema = _load_split(args)
    bundle = ModelBundle.load(args.models, schema)
    dialogues = list(_pick(split, args.split))
    report = evaluate_ie(bundle, dialogues, golden_sf=args.golden_sf)
    print(report.render_task1())
    _emit_json(report.as_dict(), args.json_out)
    return 0


def cmd_eval_tod(args) -> int:
    split, schema = _load_split(args)
    dialogues = list(_pick(split, args.split))
    if args.oracle:
        factory = lambda d, kb: OracleGenerator(d, kb)  # noqa: E731
        mode = "oracle"
    else:
        if args.index:
            index = RetrievalGenerator.load(args.index)
        else:
            index = RetrievalGenerator.build(list(split.train))
        if args.save_index:
            index.save(args.save_index)
        factory = lambda d, kb: RetrievalGenerator(index.entries, index.known_names)  # noqa: E731
        mode = "retrieval"
    report = evaluate_tod(dialogues, schema, factory, notes={"generator": mode})
    print(report.render_task2())
    _emit_json(report.as_dict(), args.json_out)
    return 0


def cmd_serve(args) -> int:
    split, schema = _load_split(args)
    assets = []
    for d in _pick(split, args.split):
        kb = build_local_kb(d, schema)
        goal, _ = build_user_goal(d, kb)
        assets.append(SessionAsset(d.id, kb, goal))
    if args.index:
        index = RetrievalGenerator.load(args.index)
    else:
        index = RetrievalGenerator.build(list(split.train))
    factory = lambda: RetrievalGenerator(index.entries, index.known_names)  # noqa: E731
    service = EvalService(assets, factory, schema, args.log_dir, seed=args.seed, debug=args.debug)
    server = make_server(service, host=args.host, port=args.port, ui_dir=args.ui_dir)
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port} ({len(assets)} goal cards, log={args.log_dir})",
          flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("shutting down")
    finally:
        server.server_close()
    return 0


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    # present on the root parser and on every verb; a verb-level occurrence
    # wins, an absent one leaves the root value alone (SUPPRESS)
    s = argparse.SUPPRESS
    p.add_argument("--config", default=s if suppress else None,
                   help="JSON file presetting any flag defaults")
    p.add_argument("--seed", type=int, default=s if suppress else 0)
    p.add_argument("--debug", action="store_true", default=s if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csdial", description=__doc__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _global_flags(p, suppress=True)
    p.add_argument("--out", required=True)
    p.add_argument("--schema", help="schema file; defaults to the bundled example schema")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--redundancy", type=float, default=0.15)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="load, validate and optionally repair a corpus")
    _global_flags(p, suppress=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out")
    p.add_argument("--repair", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("clean", help="remove redundant turns")
    _global_flags(p, suppress=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cleaning-config")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("build-kb", help="emit one local-KB JSON per dialogue")
    _global_flags(p, suppress=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="all", choices=["train", "dev", "test", "all"])
    p.set_defaults(func=cmd_build_kb)

    p = sub.add_parser("train-ie", help="train the four extraction models")
    _global_flags(p, suppress=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--train-config", help="JSON TrainingConfig")
    p.set_defaults(func=cmd_train_ie)

    p = sub.add_parser("eval-ie", help="score the extraction pipeline")
    _global_flags(p, suppress=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--split", default="dev", choices=["train", "dev", "test", "all"])
    p.add_argument("--golden-sf", action="store_true",
                   help="slot-filling F1 with golden prerequisite labels")
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_eval_ie)

    p = sub.add_parser("eval-tod", help="corpus-mode dialogue evaluation")
    _global_flags(p, suppress=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--split", default="dev", choices=["train", "dev", "test", "all"])
    p.add_argument("--oracle", action="store_true", help="replay gold system side")
    p.add_argument("--index", help="load a saved retrieval index")
    p.add_argument("--save-index", help="save the built retrieval index")
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_eval_tod)

    p = sub.add_parser("serve", help="run the human-evaluation HTTP service")
    _global_flags(p, suppress=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--split", default="dev", choices=["train", "dev", "test", "all"])
    p.add_argument("--index")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8020)
    p.add_argument("--log-dir", default="eval-logs")
    p.add_argument("--ui-dir", help="serve a static UI build from this directory")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if "--config" in argv:
        cfg_path = argv[argv.index("--config") + 1]
        presets = json.loads(Path(cfg_path).read_text(encoding="utf-8"))
        parser.set_defaults(**presets)
        for p in parser._subparsers._group_actions[0].choices.values():  # noqa: SLF001
            p.set_defaults(**{k: v for k, v in presets.items()})
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
