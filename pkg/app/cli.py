"""Command-line interface of the memory engine."""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from collections.abc import Awaitable, Callable
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ValidationError

from app.errors import BindFailure, MemoryEngineError

logger = logging.getLogger(__name__)

DEFAULT_SPACE = "default"


def setup_logging(verbose: bool = False) -> None:
    """Set up logging configuration."""
    level = logging.INFO if verbose else logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
        stream=sys.stderr,
        force=True,
    )


def emit(result: Any) -> None:
    """Print a result as JSON on stdout."""
    if isinstance(result, BaseModel):
        print(result.model_dump_json(indent=2, exclude_none=True))
    else:
        print(json.dumps(result, indent=2, sort_keys=True, default=str))


def _with_service(action: Callable[[Any], Awaitable[Any]]) -> Any:
    from app.services.memory_service import MemoryService

    async def runner() -> Any:
        service = MemoryService()
        await service.start()
        try:
            return await action(service)
        finally:
            await service.close()

    return asyncio.run(runner())


def cmd_ingest(args: argparse.Namespace) -> int:
    from app.services.corpus_service import read_dialogue

    turns = read_dialogue(args.file)

    async def action(service):
        return await service.ingest_many(args.space, turns)

    receipts = _with_service(action)
    emit(
        {
            "space_id": args.space,
            "utterances": len(receipts),
            "units": len({uid for r in receipts for uid in r.unit_ids}),
            "fact_units": len({uid for r in receipts for uid in r.fact_unit_ids}),
        }
    )
    return 0


def cmd_query(args: argparse.Namespace) -> int:
    from app.models.api import QueryRequest

    request = QueryRequest(text=args.text, k=args.k, tags=args.tags or (), now=args.now)
    emit(_with_service(lambda service: service.query(args.space, request)))
    return 0


def _maintain(args: argparse.Namespace, *passes: str) -> int:
    from app.models.api import MaintainRequest

    request = MaintainRequest(passes=list(passes), now=args.now, dry_run=args.dry_run)
    emit(_with_service(lambda service: service.maintain(args.space, request)))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    return _maintain(args, "forget")


def cmd_reflect(args: argparse.Namespace) -> int:
    return _maintain(args, "reflect")


def cmd_prune(args: argparse.Namespace) -> int:
    return _maintain(args, "prune")


def cmd_merge(args: argparse.Namespace) -> int:
    return _maintain(args, "merge")


def cmd_export(args: argparse.Namespace) -> int:
    path = _with_service(lambda service: service.export(args.space, args.out))
    emit({"space_id": args.space, "path": str(path)})
    return 0


def cmd_import(args: argparse.Namespace) -> int:
    emit(_with_service(lambda service: service.import_snapshot(args.path, args.space)))
    return 0


def cmd_compact(args: argparse.Namespace) -> int:
    emit(_with_service(lambda service: service.compact(args.space)))
    return 0


def cmd_purge(args: argparse.Namespace) -> int:
    emit(_with_service(lambda service: service.compact(args.space, purge=True, confirm=args.confirm)))
    return 0


def cmd_gen_corpus(args: argparse.Namespace) -> int:
    from app.config import get_settings
    from app.models.corpus import CorpusConfig
    from app.services.annotation_service import build_annotator
    from app.services.corpus_service import generate_corpus, write_corpus

    settings = get_settings()
    config = CorpusConfig(
        facts=args.facts,
        dup=args.dup,
        ack_rate=args.ack_rate,
        contradictions=args.contradictions,
        seed=args.seed,
    )
    corpus = generate_corpus(
        config,
        annotator=build_annotator(settings),
        functional_relations=settings.memory.functional_relations,
    )
    dialogue, probes = write_corpus(corpus, args.out)
    emit(
        {
            "dialogue": str(dialogue),
            "probes": str(probes),
            "turns": len(corpus.turns),
            "fact_keys": len(corpus.fact_keys),
            "redundant_tokens": corpus.redundant_tokens,
        }
    )
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    from app.config import get_settings
    from app.models.corpus import Corpus, CorpusConfig
    from app.services import bench_service
    from app.services.annotation_service import build_annotator
    from app.services.corpus_service import (
        DIALOGUE_FILE,
        PROBES_FILE,
        generate_corpus,
        read_dialogue,
        read_probes,
    )
    from app.utils.text import count_tokens

    settings = get_settings()
    annotator = build_annotator(settings)

    if args.space:
        if not args.probes:
            raise ValueError("--space needs --probes")
        probes = read_probes(args.probes)

        async def load(service):
            store = await service.get_store(args.space)
            return store.clone()

        store = _with_service(load)
        if args.pad_to:
            bench_service.pad_store(store, args.pad_to, args.now or 0, args.seed)
        now = args.now if args.now is not None else max(
            (u.created_at for u in store.units.values()), default=0
        )
        report = bench_service.bench_store(
            store,
            probes,
            now=now,
            tokens_full_history=sum(count_tokens(u.text) for u in store.utterances.values()),
            k=args.k,
            repeat=args.repeat,
            target_ms=args.target_ms,
            settings=settings,
            annotator=annotator,
        )
    else:
        if args.corpus:
            corpus_dir = Path(args.corpus)
            corpus = Corpus(
                config=CorpusConfig(seed=args.seed),
                turns=read_dialogue(corpus_dir / DIALOGUE_FILE),
                probes=read_probes(corpus_dir / PROBES_FILE),
            )
        else:
            corpus = generate_corpus(
                CorpusConfig(
                    facts=args.facts,
                    dup=args.dup,
                    ack_rate=args.ack_rate,
                    contradictions=args.contradictions,
                    seed=args.seed,
                ),
                annotator=annotator,
                functional_relations=settings.memory.functional_relations,
            )
        report = bench_service.run_bench(
            corpus,
            k=args.k,
            maintain=not args.no_maintain,
            pad_to=args.pad_to,
            repeat=args.repeat,
            target_ms=args.target_ms,
            settings=settings,
            annotator=annotator,
        )
    emit(report)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from app.config import get_settings

    settings = get_settings()
    host = args.host or settings.app_host
    port = args.port if args.port is not None else settings.app_port
    try:
        uvicorn.run("app.main:app", host=host, port=port, log_level=settings.log_level.lower())
    except (OSError, SystemExit) as exc:
        raise BindFailure(f"cannot serve on {host}:{port}: {exc}") from exc
    return 0


def _space_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--space", default=DEFAULT_SPACE, help=f"Memory space id (default: {DEFAULT_SPACE})")


def _now_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--now", type=int, default=None, help="Timestamp in seconds (default: current time)")


def _corpus_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--facts", type=int, default=100, help="Distinct facts (default: 100)")
    parser.add_argument("--dup", type=int, default=1, help="Times each fact is stated (default: 1)")
    parser.add_argument("--ack-rate", type=float, default=0.0, help="Acknowledgment probability per statement")
    parser.add_argument("--contradictions", type=int, default=0, help="Residence facts restated with a new value")
    parser.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memory-engine",
        description="Long-term memory engine for conversational agents",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Verbose (INFO) logging")
    subparsers = parser.add_subparsers(dest="command", required=True, help="Command to execute")

    ingest = subparsers.add_parser("ingest", help="Ingest a JSON-lines dialogue file")
    ingest.add_argument("file", help="JSONL file of {utterance, speaker, ts} rows")
    _space_argument(ingest)
    ingest.set_defaults(handler=cmd_ingest)

    query = subparsers.add_parser("query", help="Retrieve the top-k memories for a text")
    query.add_argument("text")
    query.add_argument("-k", type=int, default=5, help="Number of results (default: 5)")
    query.add_argument("--tags", nargs="*", default=None, help="Preference tags")
    _space_argument(query)
    _now_argument(query)
    query.set_defaults(handler=cmd_query)

    for name, handler, help_text in (
        ("sweep", cmd_sweep, "Run a forgetting sweep"),
        ("reflect", cmd_reflect, "Run a reflection cycle"),
        ("prune", cmd_prune, "Merge duplicates and drop redundant units"),
        ("merge", cmd_merge, "Merge near-identical graph nodes"),
    ):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--dry-run", action="store_true", help="Report without writing")
        _space_argument(sub)
        _now_argument(sub)
        sub.set_defaults(handler=handler)

    export = subparsers.add_parser("export", help="Write a space snapshot")
    export.add_argument("--out", required=True, help="Snapshot directory")
    _space_argument(export)
    export.set_defaults(handler=cmd_export)

    import_parser = subparsers.add_parser("import", help="Load a snapshot as a space's content")
    import_parser.add_argument("path", help="Snapshot directory")
    import_parser.add_argument("--space", default=None, help="Target space (default: the snapshot's)")
    import_parser.set_defaults(handler=cmd_import)

    compact = subparsers.add_parser("compact", help="Rewrite a space log to one record per element")
    _space_argument(compact)
    compact.set_defaults(handler=cmd_compact)

    purge = subparsers.add_parser("purge", help="Permanently delete soft-deleted units")
    purge.add_argument("--confirm", action="store_true", help="Confirm permanent deletion")
    _space_argument(purge)
    purge.set_defaults(handler=cmd_purge)

    gen = subparsers.add_parser("gen-corpus", help="Generate a synthetic dialogue corpus with probes")
    _corpus_arguments(gen)
    gen.add_argument("--out", required=True, help="Output directory")
    gen.set_defaults(handler=cmd_gen_corpus)

    bench = subparsers.add_parser("bench", help="Report retrieval latency and token reduction")
    _corpus_arguments(bench)
    bench.add_argument("--corpus", default=None, help="Directory written by gen-corpus")
    bench.add_argument("--space", default=None, help="Bench a stored space instead of a corpus")
    bench.add_argument("--probes", default=None, help="Probe file for --space")
    bench.add_argument("-k", type=int, default=5, help="Results per query (default: 5)")
    bench.add_argument("--pad-to", type=int, default=0, help="Grow the store to this many units")
    bench.add_argument("--repeat", type=int, default=1, help="Timing passes over the probes")
    bench.add_argument("--target-ms", type=float, default=100.0, help="p95 latency target")
    bench.add_argument("--no-maintain", action="store_true", help="Skip the reflection cycle")
    _now_argument(bench)
    bench.set_defaults(handler=cmd_bench)

    serve = subparsers.add_parser("serve", help="Run the HTTP API")
    serve.add_argument("--host", default=None)
    serve.add_argument("--port", type=int, default=None)
    serve.set_defaults(handler=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    try:
        return args.handler(args)
    except MemoryEngineError as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return 1
    except (ValidationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
