"""Command-line entry points.

Exit codes: 0 success, 1 invalid config or manifest, 2 run finished but
some items errored, 3 the run itself failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from cola.config import ConfigError, load_config
from cola.frames import FrameSource, open_frame_source
from cola.metrics import render_text_table
from cola.mockserver import serve_mock
from cola.pipeline import export_training_data, run_har, run_vqa
from cola.selection import SelectionParams, save_keyframes, select_keyframes

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ITEM_ERRORS = 2
EXIT_FAILURE = 3

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cola",
        description="Keyframe selection and model-coordination pipeline runs.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured evaluation")
    p_run.add_argument("--config", required=True, help="TOML run config")
    p_run.add_argument("--task", choices=["har", "vqa"], help="override configured task")
    p_run.add_argument("--mode", choices=["ensemble", "cola"], help="override vqa mode")

    p_kf = sub.add_parser("extract-keyframes", help="select keyframes from one video")
    p_kf.add_argument("--video", required=True, help="frame directory or framestream file")
    p_kf.add_argument("--out", required=True, help="output directory")
    p_kf.add_argument("--max-frames", type=int, default=10)
    p_kf.add_argument("--fps", type=float, default=None, help="timestamp hint")
    p_kf.add_argument(
        "--decoder", default=None,
        help="decoder command template with an {input} placeholder",
    )

    p_train = sub.add_parser("export-train", help="export prompt/target training records")
    p_train.add_argument("--config", required=True)

    p_mock = sub.add_parser("serve-mock", help="serve deterministic mock model endpoints")
    p_mock.add_argument("--fixtures", default=None, help="fixture JSON file")
    p_mock.add_argument("--port", type=int, required=True)
    p_mock.add_argument("--host", default="127.0.0.1")

    p_report = sub.add_parser("report", help="print the report of a finished run")
    p_report.add_argument("--run", required=True, help="run output directory")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.task:
        task = "vqa-mcq" if args.task == "vqa" else "har"
        config = _override(config, task=task)
    if args.mode:
        config = _override(config, mode=args.mode)
    result = run_har(config) if config.task == "har" else run_vqa(config)
    print(f"task={result.task} evaluated={result.evaluated} errored={result.errored}")
    if result.accuracy is not None:
        print(f"accuracy={result.accuracy:.4f}")
    if result.prf is not None:
        print(
            f"macro P={result.prf.macro_precision:.4f} "
            f"R={result.prf.macro_recall:.4f} F1={result.prf.macro_f1:.4f}"
        )
    print(f"outputs under {result.output_dir}")
    return EXIT_ITEM_ERRORS if result.errored else EXIT_OK


def _override(config, **changes):
    from dataclasses import replace

    return replace(config, **changes)


def _cmd_extract_keyframes(args) -> int:
    path = Path(args.video)
    kind = "image-directory" if path.is_dir() else "framestream"
    if args.decoder:
        kind = "decoder-subprocess"
    source = FrameSource(
        kind=kind, uri=str(path), fps_hint=args.fps, decoder_cmd=args.decoder
    )
    params = SelectionParams(max_keyframes=args.max_frames)
    keyframes = select_keyframes(
        open_frame_source(source), params, video_id=path.stem or "video"
    )
    if not keyframes:
        print("no keyframes selected (all frames failed the gates)")
        return EXIT_OK
    out = save_keyframes(keyframes, args.out)
    for kf in keyframes:
        print(
            f"kf_{kf.cluster_id}.png  frame={kf.frame.index}  "
            f"t={kf.frame.timestamp_ms}ms  sharpness={kf.features.laplacian_variance:.2f}"
        )
    print(f"wrote {len(keyframes)} keyframes under {out}")
    return EXIT_OK


def _cmd_export_train(args) -> int:
    config = load_config(args.config)
    path = export_training_data(config)
    count = sum(1 for line in path.read_text(encoding="utf-8").splitlines() if line)
    print(f"wrote {count} training records to {path}")
    return EXIT_OK


def _cmd_serve_mock(args) -> int:
    server = serve_mock(args.fixtures, args.port, host=args.host)
    print(f"mock model server listening on {server.base_url}")
    try:
        import threading

        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


def _cmd_report(args) -> int:
    run_dir = Path(args.run)
    report_path = run_dir / "report.json"
    if not report_path.is_file():
        raise ConfigError(f"no report.json under {run_dir}")
    report = json.loads(report_path.read_text(encoding="utf-8"))
    summary_path = run_dir / "run_summary.json"
    if summary_path.is_file():
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
        print(
            f"task={summary.get('task')} evaluated={summary.get('evaluated')} "
            f"errored={summary.get('errored')}"
        )
    text_path = run_dir / "report.txt"
    if text_path.is_file():
        print(text_path.read_text(encoding="utf-8"), end="")
    elif "accuracy" in report:
        print(f"accuracy: {report['accuracy']:.4f}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {
        "run": _cmd_run,
        "extract-keyframes": _cmd_extract_keyframes,
        "export-train": _cmd_export_train,
        "serve-mock": _cmd_serve_mock,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # total failure: the run itself broke
        logger.exception("run failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
