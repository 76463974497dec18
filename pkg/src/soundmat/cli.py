"""Headless entry points: serve, train-eval from a WAV corpus, scripted scenarios.

Exit codes are a stable contract: 0 success, 1 runtime failure,
2 invalid input. Set SOUNDMAT_LOG_LEVEL to control logging.
"""

from __future__ import annotations

import argparse
import asyncio
import dataclasses
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from .actions import ACTION_NAMES, Action, action_from_name
from .audio import CANONICAL_RATE_HZ, FeatureConfig, LogMelExtractor, validate_clip
from .device import (
    DeviceClient,
    SimDevice,
    SoundSource,
    run_inference_loop,
    move_to_zone,
    record_from,
    source_from_json,
)
from .errors import (
    ConfigInvalid,
    InsufficientClasses,
    ScriptInvalid,
    SoundmatError,
    UnreadableWav,
)
from .forest import ForestConfig, model_to_json_bytes, predict_top, train_forest
from .rng import SplitMix64
from .reports import config_echo, write_report
from .server import ServerConfig, SoundServer, serve_forever
from .session import Mode
from .wavio import load_wav, resample_linear

log = logging.getLogger("soundmat.cli")

# errors that mean the caller handed us bad input (exit code 2)
_INVALID_INPUT = (ConfigInvalid, InsufficientClasses, ScriptInvalid)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def load_app_config(path: str | None) -> tuple[FeatureConfig, ForestConfig]:
    feature, forest = FeatureConfig(), ForestConfig()
    if path is None:
        return feature, forest
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict) or not set(doc) <= {"feature", "forest"}:
        raise ConfigInvalid("config must be an object with 'feature' and/or 'forest'")
    try:
        if "feature" in doc:
            feature = dataclasses.replace(feature, **doc["feature"])
        if "forest" in doc:
            forest = dataclasses.replace(forest, **doc["forest"])
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad config values: {exc}") from exc
    return feature, forest


def _parse_bind(bind: str) -> tuple[str, int]:
    host, _, port = bind.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigInvalid(f"--bind must look like host:port, got {bind!r}")
    return host, int(port)


# -- serve --------------------------------------------------------------------


def cmd_serve(args: argparse.Namespace) -> int:
    feature, forest = load_app_config(args.config)
    config = ServerConfig(feature_config=feature, forest_config=forest, session_seed=args.seed)
    host, port = _parse_bind(args.bind)
    try:
        asyncio.run(serve_forever(config, host, port, args.ws_port))
    except KeyboardInterrupt:
        pass
    return 0


# -- train-eval ---------------------------------------------------------------


def _shuffle(items: list, rng: SplitMix64) -> None:
    for i in range(len(items) - 1, 0, -1):
        j = rng.next_below(i + 1)
        items[i], items[j] = items[j], items[i]


def _load_corpus(data_dir: Path, extractor: LogMelExtractor):
    """Per-action feature lists from action-named WAV directories."""
    if not data_dir.is_dir():
        raise ConfigInvalid(f"data dir {data_dir} does not exist")
    per_class: dict[Action, list] = {}
    skipped = 0
    for entry in sorted(data_dir.iterdir()):
        if not entry.is_dir():
            continue
        if entry.name not in ACTION_NAMES:
            raise ConfigInvalid(
                f"unknown action directory {entry.name!r}; the action set is fixed: {', '.join(ACTION_NAMES)}"
            )
        action = action_from_name(entry.name)
        features = []
        for wav_path in sorted(entry.glob("*.wav")):
            try:
                samples, rate = load_wav(wav_path)
            except UnreadableWav as exc:
                log.warning("skipping %s: %s", wav_path, exc)
                skipped += 1
                continue
            if rate != CANONICAL_RATE_HZ:
                samples = resample_linear(samples, rate, CANONICAL_RATE_HZ)
            clip = validate_clip(samples, CANONICAL_RATE_HZ)
            features.append(extractor.extract(clip))
        if features:
            per_class[action] = features
    if len(per_class) < 2:
        raise InsufficientClasses(
            f"need WAVs for at least 2 actions, found {len(per_class)}"
        )
    return per_class, skipped


def cmd_train_eval(args: argparse.Namespace) -> int:
    from .forest import LabeledSample

    feature_cfg, forest_cfg = load_app_config(args.config)
    extractor = LogMelExtractor(feature_cfg)
    per_class, skipped = _load_corpus(Path(args.data_dir), extractor)

    rng = SplitMix64(args.seed)
    train_samples: list[LabeledSample] = []
    holdout_samples: list[LabeledSample] = []
    train_counts: dict[str, int] = {}
    holdout_counts: dict[str, int] = {}
    for action in sorted(per_class):  # ascending label id keeps the split reproducible
        features = per_class[action]
        order = list(range(len(features)))
        _shuffle(order, rng)
        n_hold = int(args.holdout_frac * len(features) + 0.5)
        n_hold = min(n_hold, len(features) - 1)
        for pos, idx in enumerate(order):
            sample = LabeledSample(features=features[idx], label=action)
            if pos < n_hold:
                holdout_samples.append(sample)
            else:
                train_samples.append(sample)
        train_counts[action.canonical_name] = len(features) - n_hold
        holdout_counts[action.canonical_name] = n_hold

    start = time.perf_counter()
    model = train_forest(train_samples, forest_cfg, args.seed)
    duration_ms = int((time.perf_counter() - start) * 1000)

    confusion = [[0] * 6 for _ in range(6)]
    correct = 0
    for sample in holdout_samples:
        predicted = predict_top(model, sample.features)
        confusion[int(sample.label)][int(predicted)] += 1
        correct += int(predicted == sample.label)
    holdout = None
    if holdout_samples:
        holdout = {
            "counts": holdout_counts,
            "confusion": confusion,
            "accuracy": correct / len(holdout_samples),
        }

    report = {
        "version": 1,
        "command": "train-eval",
        "seed": args.seed,
        "config": config_echo(feature_cfg, forest_cfg),
        "class_counts": train_counts,
        "skipped_files": skipped,
        "timing": {"generated_at": _utc_now(), "training_duration_ms": duration_ms},
        "holdout": holdout,
        "loop": None,
    }
    write_report(args.out, report)
    if args.model_out:
        Path(args.model_out).write_bytes(model_to_json_bytes(model))
    accuracy_text = f"{holdout['accuracy']:.3f}" if holdout else "n/a"
    print(
        f"trained {len(train_samples)} samples / {len(model.classes_present)} classes "
        f"in {duration_ms} ms; holdout {len(holdout_samples)} clips, accuracy {accuracy_text}"
    )
    return 0


# -- scenario -----------------------------------------------------------------

_SCENARIO_COMMANDS = {
    "move_to_zone": {"action"},
    "record_from": {"source", "repeat", "amplitude"},
    "press_button": set(),
    "run_loop": {"cycles", "source"},
    "delete_last": set(),
    "reset_all": set(),
    "wait": {"seconds"},
}


def _validate_script(script) -> list[dict]:
    if not isinstance(script, list):
        raise ScriptInvalid("scenario script must be a JSON list of commands")
    for i, cmd in enumerate(script):
        if not isinstance(cmd, dict) or "cmd" not in cmd:
            raise ScriptInvalid(f"command {i} must be an object with a 'cmd' field")
        name = cmd["cmd"]
        if name not in _SCENARIO_COMMANDS:
            raise ScriptInvalid(f"command {i}: unknown command {name!r}")
        extra = set(cmd) - _SCENARIO_COMMANDS[name] - {"cmd"}
        if extra:
            raise ScriptInvalid(f"command {i} ({name}): unknown fields {sorted(extra)}")
    return script


def _build_source(doc, default_seed: int) -> SoundSource:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ScriptInvalid("source must be an object with a 'kind' field")
    try:
        if doc["kind"] == "white_noise" and "seed" not in doc:
            doc = {**doc, "seed": default_seed}
        return source_from_json(doc)
    except (TypeError, ValueError, UnreadableWav) as exc:
        raise ScriptInvalid(f"bad sound source {doc!r}: {exc}") from exc


async def _run_scenario(script: list[dict], config: ServerConfig, seed: int) -> dict:
    server = SoundServer(config)
    tcp_port, _ = await server.start(tcp_port=0)
    device = SimDevice(layout=config.layout)
    client = await DeviceClient.connect("127.0.0.1", tcp_port, "scenario", device=device)
    events: list[dict] = []
    loop_cycles = []
    counts: dict[Action, int] = dict(client.known_counts)
    mode = Mode.TRAINING
    try:
        for cmd in script:
            name = cmd["cmd"]
            if name == "move_to_zone":
                action = await move_to_zone(device, client, cmd["action"])
                events.append({"cmd": name, "zone": action.canonical_name})
            elif name == "record_from":
                source = _build_source(cmd["source"], seed)
                acks = await record_from(
                    device, client, source,
                    repeat=int(cmd.get("repeat", 1)),
                    amplitude=cmd.get("amplitude"),
                )
                counts[device.zone] = acks[-1]
                events.append({"cmd": name, "zone": device.zone.canonical_name, "counts": acks})
            elif name == "press_button":
                await client.send("MODE_BUTTON", {})
                if mode is Mode.TRAINING:
                    await client.expect("TRAIN_STATUS")  # started
                    status = await client.expect("TRAIN_STATUS", timeout=120.0)
                    if status.payload["state"] == "done":
                        await client.expect("MODE_CHANGED")  # inference
                        mode = Mode.INFERENCE
                    events.append({"cmd": name, "train": status.payload})
                else:
                    await client.expect("MODE_CHANGED")
                    mode = Mode.TRAINING
                    events.append({"cmd": name, "mode": mode.value})
            elif name == "run_loop":
                source = _build_source(cmd["source"], seed)
                cycles = await run_inference_loop(device, client, source, int(cmd["cycles"]))
                loop_cycles.extend(cycles)
                events.append({
                    "cmd": name,
                    "actions": [c.action_executed.canonical_name for c in cycles],
                })
            elif name == "delete_last":
                await client.send("DELETE_LAST", {})
                ack = await client.expect("RECORD_ACK")
                counts[Action(ack.payload["action_id"])] = ack.payload["count"]
                events.append({"cmd": name, "ack": ack.payload})
            elif name == "reset_all":
                await client.send("RESET_ALL", {})
                for _ in Action:
                    ack = await client.expect("RECORD_ACK")
                    counts[Action(ack.payload["action_id"])] = ack.payload["count"]
                events.append({"cmd": name})
            elif name == "wait":
                device.clock.advance(float(cmd["seconds"]))
                events.append({"cmd": name, "seconds": cmd["seconds"]})
    finally:
        await client.close()
        await server.stop()

    starts = [c.capture_start_s for c in loop_cycles]
    deltas = [round(b - a, 9) for a, b in zip(starts, starts[1:])]
    loop_report = None
    if loop_cycles:
        loop_report = {
            "capture_starts_s": starts,
            "round_trips_ms": [c.round_trip_ms for c in loop_cycles],
            "latencies_ms": [c.result.latency_ms for c in loop_cycles],
            "actions": [c.action_executed.canonical_name for c in loop_cycles],
            "cadence_exact": all(d == 2.5 for d in deltas),
            "latency_budget_ms": 3000.0,
            "latency_ok": all(c.round_trip_ms <= 3000.0 for c in loop_cycles),
        }
    return {
        "version": 1,
        "command": "scenario",
        "seed": seed,
        "config": config_echo(config.feature_config, config.forest_config),
        "class_counts": {a.canonical_name: n for a, n in counts.items()},
        "skipped_files": 0,
        "timing": {"generated_at": _utc_now()},
        "holdout": None,
        "loop": loop_report,
        "events": events,
    }


def cmd_scenario(args: argparse.Namespace) -> int:
    try:
        with open(args.script, "r", encoding="utf-8") as fh:
            script = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ScriptInvalid(f"cannot read script {args.script}: {exc}") from exc
    script = _validate_script(script)
    feature, forest = load_app_config(args.config)
    config = ServerConfig(feature_config=feature, forest_config=forest, session_seed=args.seed)
    report = asyncio.run(_run_scenario(script, config, args.seed))
    write_report(args.out, report)
    executed = len(report["events"])
    print(f"scenario complete: {executed} command(s)")
    if report["loop"]:
        print(
            f"loop: actions {report['loop']['actions']}, cadence_exact={report['loop']['cadence_exact']}, "
            f"latency_ok={report['loop']['latency_ok']}"
        )
    return 0


# -- wiring -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="soundmat",
        description="Few-shot sound-to-action trainer: server, simulator scenarios, corpus evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the protocol server")
    p_serve.add_argument("--bind", default="127.0.0.1:7440", help="host:port for the TCP endpoint")
    p_serve.add_argument("--ws-port", type=int, default=None, help="optional WebSocket port for browser clients")
    p_serve.add_argument("--config", default=None, help="JSON config overriding feature/forest settings")
    p_serve.add_argument("--seed", type=int, default=42, help="seed for sessions created by this server")
    p_serve.set_defaults(func=cmd_serve)

    p_train = sub.add_parser("train-eval", help="train on a WAV corpus and evaluate a holdout split")
    p_train.add_argument("--data-dir", required=True, help="directory with one subdirectory per action name")
    p_train.add_argument("--seed", type=int, default=42)
    p_train.add_argument("--holdout-frac", type=float, default=0.25)
    p_train.add_argument("--out", required=True, help="path for the run report JSON")
    p_train.add_argument("--model-out", default=None, help="optional path for the serialized model")
    p_train.add_argument("--config", default=None)
    p_train.set_defaults(func=cmd_train_eval)

    p_scen = sub.add_parser("scenario", help="drive the simulator against an in-process server")
    p_scen.add_argument("--script", required=True, help="JSON list of scenario commands")
    p_scen.add_argument("--out", required=True, help="path for the run report JSON")
    p_scen.add_argument("--seed", type=int, default=42)
    p_scen.add_argument("--config", default=None)
    p_scen.set_defaults(func=cmd_scenario)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("SOUNDMAT_LOG_LEVEL", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _INVALID_INPUT as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except SoundmatError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
