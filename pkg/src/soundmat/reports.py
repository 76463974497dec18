"""Run reports: construction helpers and schema validation."""

from __future__ import annotations

import json
from dataclasses import asdict
from importlib import resources

import jsonschema

from .audio import FeatureConfig
from .forest import ForestConfig


def load_schema(name: str) -> dict:
    with resources.files("soundmat.schemas").joinpath(name).open("r", encoding="utf-8") as fh:
        return json.load(fh)


def validate_report(report: dict) -> None:
    jsonschema.validate(report, load_schema("run_report.schema.json"))


def validate_protocol_body(body: dict) -> None:
    jsonschema.validate(body, load_schema("protocol.schema.json"))


def config_echo(feature: FeatureConfig, forest: ForestConfig) -> dict:
    return {"feature": asdict(feature), "forest": asdict(forest)}


def write_report(path, report: dict) -> None:
    validate_report(report)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
