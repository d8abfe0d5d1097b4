"""Command line driver.

Exit codes: 0 success, 1 validation/assertion/engine failure, 2 parse or
usage failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .archive import EpisodeArchive
from .errors import CaseflowError, ParseError
from .model import parse_model, validate_model
from .scripting import LibraryDriver, ScriptError, parse_script, run_script
from .taxonomy import load_taxonomy


def _read(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise ParseError(f"no such file: {path}")
    return p.read_text()


def cmd_validate(args) -> int:
    taxonomy = load_taxonomy(_read(args.taxonomy))
    model = parse_model(_read(args.model), taxonomy)
    report = validate_model(model)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0 if report.ok else 1


def cmd_run(args) -> int:
    taxonomy = load_taxonomy(_read(args.taxonomy))
    model = parse_model(_read(args.model), taxonomy)
    Path(args.data).mkdir(parents=True, exist_ok=True)
    archive = EpisodeArchive(args.data)
    episode_id = args.episode_id or (f"ep-{args.seed}" if args.seed is not None else None)
    driver = LibraryDriver(model, archive=archive, episode_id=episode_id)

    if args.script:
        directives = parse_script(_read(args.script))
        try:
            view = run_script(driver, directives)
        except ScriptError as exc:
            seq = len(driver.state.log) if driver.state else 0
            print(f"script failed after event {seq}: {exc}", file=sys.stderr)
            return 1
        print(json.dumps(view, indent=2, sort_keys=True, default=str))
        return 0
    return _interactive(driver)


def _interactive(driver: LibraryDriver) -> int:
    from . import engine

    driver.start({})
    state = driver.state
    while not state.terminated:
        choices = engine.ready_choices(state)
        if not choices:
            print("nothing ready; stopping")
            return 1
        for i, c in enumerate(choices):
            print(f"[{i}] {c['id']} -> {c['outcome']}")
        raw = input("choose (index, or q): ").strip()
        if raw == "q":
            return 0
        picked = choices[int(raw)]["id"]
        engine.choose_activity(state, picked)
        a = state.model.activity(picked)
        if a.kind == "simple":
            values = {}
            for tid in a.outcome:
                values[tid] = json.loads(input(f"value for {tid} (JSON): "))
            engine.complete_activity(state, picked, values)
    print("episode complete")
    return 0


def cmd_query(args) -> int:
    archive = EpisodeArchive(args.data)
    probe = json.loads(_read(args.probe))
    if not archive.fragments():
        if args.allow_empty:
            print("(empty archive)")
            return 0
        print("archive is empty", file=sys.stderr)
        return 1
    result = archive.retrieve_similar(probe, args.k, include_zero=args.include_zero)
    for entry in result.ranked:
        print(f"{entry['fragment_id']}\t{entry['score']:.4f}")
    return 0


def cmd_reconstruct(args) -> int:
    archive = EpisodeArchive(args.data)
    record = archive.reconstruct_episode(args.episode)
    print(json.dumps(record, indent=2, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    from .api import serve

    serve(args.data, args.models, args.host, args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="caseflow")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model against the structural rules")
    p.add_argument("model")
    p.add_argument("--taxonomy", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run a scripted or interactive episode")
    p.add_argument("model")
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--script")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--episode-id")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("query", help="retrieve similar episode fragments")
    p.add_argument("--data", required=True)
    p.add_argument("--probe", required=True)
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--allow-empty", action="store_true")
    p.add_argument("--include-zero", action="store_true")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("reconstruct", help="rebuild an episode record from the archive")
    p.add_argument("--data", required=True)
    p.add_argument("--episode", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("serve", help="start the network service")
    p.add_argument("--data", required=True)
    p.add_argument("--models")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8400)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CaseflowError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
