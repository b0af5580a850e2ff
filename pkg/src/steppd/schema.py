"""Declarative instrument schemas.

A schema file lists, per instrument, the raw item columns, the items that
are dropped, and the rules that turn items into features.  The shipped file
(``data/schema.yaml``) reproduces the 15-instrument, 230-item, 208-feature
layout; edit a copy when column names differ between data releases.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .errors import SchemaError

EXPECTED_FEATURE_COUNTS = {
    "EPW": 9,
    "GDS": 16,
    "UPDRS-I": 7,
    "UPDRS-II": 13,
    "QUIP": 13,
    "REM": 20,
    "SCOPA-AUT": 21,
    "STAI": 42,
    "Benton": 1,
    "Hopkins": 4,
    "LNS": 1,
    "UPDRS-III": 32,
    "MoCA": 27,
    "Semantic Fluency": 1,
    "Symbol Digit": 1,
}
TOTAL_FEATURES = 208
TOTAL_ITEMS = 230

RULE_KINDS = ("passthrough", "sum", "external_score")


@dataclass(frozen=True)
class FeatureRule:
    name: str
    kind: str
    sources: tuple[str, ...]
    domain: str = ""
    nf: str = ""


@dataclass(frozen=True)
class InstrumentSchema:
    name: str
    items: tuple[str, ...]
    features: tuple[FeatureRule, ...]
    excluded: tuple[str, ...] = ()
    file: str = ""
    item_range: tuple[float, float] = (0.0, 4.0)
    domain: str = ""
    nf: str = ""
    row_filter: dict | None = None

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def required_columns(self) -> list[str]:
        """Item columns plus any external score columns and filter column."""
        cols = list(self.items)
        for rule in self.features:
            if rule.kind == "external_score" and rule.sources[0] not in cols:
                cols.append(rule.sources[0])
        if self.row_filter:
            cols.append(self.row_filter["column"])
        return cols

    def validate(self) -> None:
        names = self.feature_names
        if len(set(names)) != len(names):
            raise SchemaError(f"{self.name}: duplicate feature names")
        items = set(self.items)
        for item in self.excluded:
            if item not in items:
                raise SchemaError(f"{self.name}: excluded item {item!r} is not an item")
        for rule in self.features:
            if rule.kind not in RULE_KINDS:
                raise SchemaError(f"{self.name}: unknown rule kind {rule.kind!r}")
            if not rule.sources:
                raise SchemaError(f"{self.name}: rule {rule.name!r} has no sources")
            if rule.kind == "passthrough" and len(rule.sources) != 1:
                raise SchemaError(f"{self.name}: passthrough {rule.name!r} needs one item")
            if rule.kind == "external_score":
                continue
            for src in rule.sources:
                if src not in items:
                    raise SchemaError(f"{self.name}: rule {rule.name!r} uses unknown item {src!r}")
                if src in self.excluded:
                    raise SchemaError(
                        f"{self.name}: excluded item {src!r} used by rule {rule.name!r}"
                    )


@dataclass(frozen=True)
class SchemaSet:
    instruments: tuple[InstrumentSchema, ...]
    subject_column: str = "PATNO"
    visit_column: str = "EVENT_ID"
    version: int = 1
    source: str = ""

    @property
    def feature_names(self) -> list[str]:
        return [n for inst in self.instruments for n in inst.feature_names]

    @property
    def n_items(self) -> int:
        return sum(len(inst.items) for inst in self.instruments)

    def instrument(self, name: str) -> InstrumentSchema:
        for inst in self.instruments:
            if inst.name == name:
                return inst
        raise KeyError(name)

    def feature_metadata(self) -> dict[str, dict[str, str]]:
        """feature name -> {instrument, domain, nf}."""
        meta = {}
        for inst in self.instruments:
            for rule in inst.features:
                meta[rule.name] = {
                    "instrument": inst.name,
                    "domain": rule.domain or inst.domain,
                    "nf": rule.nf or inst.nf,
                }
        return meta

    def validate(self, strict_counts: bool = False) -> None:
        names = self.feature_names
        if len(set(names)) != len(names):
            raise SchemaError("feature names collide across instruments")
        for inst in self.instruments:
            inst.validate()
        if strict_counts:
            check_reference_counts(self)


def check_reference_counts(schemas: SchemaSet) -> None:
    """Raise unless per-instrument and total counts match the reference layout."""
    got = {inst.name: len(inst.features) for inst in schemas.instruments}
    if got != EXPECTED_FEATURE_COUNTS:
        raise SchemaError(f"per-instrument feature counts differ: {got}")
    if len(schemas.feature_names) != TOTAL_FEATURES:
        raise SchemaError(f"expected {TOTAL_FEATURES} features")
    if schemas.n_items != TOTAL_ITEMS:
        raise SchemaError(f"expected {TOTAL_ITEMS} items, found {schemas.n_items}")


def _parse_rule(raw: dict, inst_name: str) -> FeatureRule:
    kinds = [k for k in RULE_KINDS if k in raw]
    if len(kinds) != 1:
        raise SchemaError(f"{inst_name}: rule {raw!r} must name exactly one of {RULE_KINDS}")
    kind = kinds[0]
    src = raw[kind]
    sources = tuple(src) if isinstance(src, list) else (str(src),)
    name = raw.get("name") or (sources[0] if kind != "sum" else None)
    if not name:
        raise SchemaError(f"{inst_name}: sum rule needs a name")
    return FeatureRule(
        name=str(name),
        kind=kind,
        sources=tuple(str(s) for s in sources),
        domain=raw.get("domain", ""),
        nf=raw.get("nf", ""),
    )


def parse_schema(doc: dict, source: str = "") -> SchemaSet:
    if not isinstance(doc, dict) or "instruments" not in doc:
        raise SchemaError("schema document needs an 'instruments' list")
    instruments = []
    for raw in doc["instruments"]:
        name = raw["name"]
        lo, hi = raw.get("range", [0, 4])
        inst = InstrumentSchema(
            name=name,
            items=tuple(str(i) for i in raw["items"]),
            features=tuple(_parse_rule(r, name) for r in raw["features"]),
            excluded=tuple(str(i) for i in raw.get("excluded", [])),
            file=raw.get("file", f"{name}.csv"),
            item_range=(float(lo), float(hi)),
            domain=raw.get("domain", ""),
            nf=raw.get("nf", ""),
            row_filter=raw.get("row_filter"),
        )
        instruments.append(inst)
    schemas = SchemaSet(
        instruments=tuple(instruments),
        subject_column=doc.get("subject_column", "PATNO"),
        visit_column=doc.get("visit_column", "EVENT_ID"),
        version=int(doc.get("version", 1)),
        source=source,
    )
    schemas.validate()
    return schemas


def load_schema(path: str | Path | None = None) -> SchemaSet:
    """Load a schema file; ``None`` loads the shipped default."""
    if path is None:
        text = resources.files("steppd").joinpath("data/schema.yaml").read_text()
        source = "builtin:schema.yaml"
    else:
        text = Path(path).read_text()
        source = str(path)
    return parse_schema(yaml.safe_load(text), source=source)


def default_schema() -> SchemaSet:
    return load_schema(None)


__all__ = [
    "FeatureRule",
    "InstrumentSchema",
    "SchemaSet",
    "SchemaError",
    "load_schema",
    "default_schema",
    "check_reference_counts",
    "EXPECTED_FEATURE_COUNTS",
]
