"""Command line entry points: ingest a WAV manifest into a dataset directory,
run simulated campaigns, serve the human labeling API, and render reports."""
from __future__ import annotations

import argparse
import json
from pathlib import Path

from .campaign import config_from_json, load_result, report, run_campaign
from .data import ingest_dataset


def _cmd_ingest(args) -> int:
    out = ingest_dataset(args.manifest, args.audio_root, args.out,
                         standardize=args.standardize)
    print(f"ingested dataset -> {out}")
    return 0


def _load_config(path: str) -> dict:
    return json.loads(Path(path).read_text())


def _cmd_run_sim(args) -> int:
    payload = _load_config(args.config)
    if args.strategy:
        payload["strategy"] = args.strategy
    if args.seed is not None:
        payload["seeds"] = [args.seed]
    if args.rounds is not None:
        payload["end_labels"] = payload.get("start_labels", 10) + args.rounds * payload.get("b", 10)
    if args.out:
        payload["out_dir"] = args.out
    cfg = config_from_json(payload)
    result = run_campaign(cfg)
    mean, std = result.mean_std()
    for labeled, m, s in zip(result.labeled_counts(), mean, std):
        print(f"labels={labeled:4d}  accuracy={m:.4f} +/- {s:.4f}")
    if cfg.out_dir:
        print(f"logs -> {cfg.out_dir}")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    serve(_load_config(args.config), host=args.host, port=args.port)
    return 0


def _cmd_report(args) -> int:
    results = [load_result(Path(p)) for p in args.runs]
    text = report(results)
    if args.out:
        Path(args.out).write_text(text)
        print(f"report -> {args.out}")
    else:
        print(text, end="")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="batchal",
                                     description="batch active learning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="decode a WAV manifest into a dataset directory")
    p.add_argument("--manifest", required=True)
    p.add_argument("--audio-root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--standardize", action="store_true")
    p.set_defaults(fn=_cmd_ingest)

    p = sub.add_parser("run-sim", help="run a simulated-oracle campaign")
    p.add_argument("--config", required=True)
    p.add_argument("--strategy", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_run_sim)

    p = sub.add_parser("serve", help="serve the human labeling API")
    p.add_argument("--config", required=True)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("report", help="summarize one or more campaign runs")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_report)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
