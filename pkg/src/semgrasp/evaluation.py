"""Agreement between method grasp frequencies and human part preferences.

For an object split into parts a and b, a method's frequency ``p_a`` is the
share of its grasps that land on part a. Its similarity to the human survey
frequency is ``1 - |p_a_human - p_a_method|``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal

from .language import normalize_part_label
from .planner import GraspSet
from .projection import Region, RegionPartition, region_of_grasp

STANDARD_N_GRASPS = 20


class EvaluationError(Exception):
    pass


class OutOfRange(EvaluationError):
    pass


class InvalidFraction(EvaluationError):
    pass


class SurveyParseError(EvaluationError):
    pass


class EmptyGraspSet(EvaluationError):
    pass


class MissingSurveyRow(EvaluationError):
    pass


class DuplicateObject(EvaluationError):
    pass


class ReportInconsistent(EvaluationError):
    pass


@dataclass(frozen=True)
class SurveyRecord:
    object_label: str
    part_a: str
    part_b: str
    p_a_human: float

    def __post_init__(self):
        if not 0.0 <= self.p_a_human <= 1.0:
            raise InvalidFraction(f"{self.object_label}: p_a = {self.p_a_human} outside [0, 1]")
        if self.part_a.strip().casefold() == self.part_b.strip().casefold():
            raise SurveyParseError(f"{self.object_label}: part_a and part_b are the same")


@dataclass(frozen=True)
class MethodFrequency:
    object_label: str
    method: str
    p_a_method: float
    n_grasps: int = STANDARD_N_GRASPS

    def __post_init__(self):
        if not 0.0 <= self.p_a_method <= 1.0:
            raise OutOfRange(f"p_a = {self.p_a_method} outside [0, 1]")
        if self.n_grasps > 0:
            k = self.p_a_method * self.n_grasps
            if abs(k - round(k)) > 1e-9:
                raise InvalidFraction(f"{self.p_a_method} is not a count over {self.n_grasps} grasps")


def similarity_score(p_a_human: float, p_a_method: float) -> float:
    for p in (p_a_human, p_a_method):
        if not (0.0 <= p <= 1.0):
            raise OutOfRange(f"frequency {p} outside [0, 1]")
    return 1.0 - abs(p_a_human - p_a_method)


def empirical_frequency(
    grasps: GraspSet, partition: RegionPartition, object_label: str = "", method: str = "measured"
) -> MethodFrequency:
    """Share of grasps whose contacts all fall in region a of ``partition``."""
    n = len(grasps)
    if n == 0:
        raise EmptyGraspSet("cannot take a frequency over zero grasps")
    inside = sum(region_of_grasp(partition, g.contact_faces) is Region.INSIDE_A for g in grasps)
    return MethodFrequency(object_label, method, inside / n, n)


def deterministic_frequency(
    record: SurveyRecord, chosen_part: str, method: str = "semantic", n_grasps: int = STANDARD_N_GRASPS
) -> MethodFrequency:
    """All grasps go to the chosen part, so ``p_a`` is 1 when it is part a and 0 otherwise."""
    chosen = normalize_part_label(chosen_part)
    p = 1.0 if chosen == normalize_part_label(record.part_a) else 0.0
    return MethodFrequency(record.object_label, method, p, n_grasps)


def backsolve_counts(p_a_human: float, published: float, n: int = STANDARD_N_GRASPS, tol: float = 0.005) -> list[int]:
    """Counts ``k`` in ``0..n`` whose similarity lies within ``tol`` of a published value."""
    return [k for k in range(n + 1) if abs(similarity_score(p_a_human, k / n) - published) <= tol + 1e-12]


def round_half_even(x: float, places: int = 2) -> str:
    return str(Decimal(repr(float(x))).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_EVEN))


# ---------------------------------------------------------------- ingest


def ingest_survey(path) -> list[SurveyRecord]:
    """Read ``object,part_a,part_b,p_a[,unit]``; unit is ``percent`` or ``fraction`` (default)."""
    records: list[SurveyRecord] = []
    seen: set[str] = set()
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = {"object", "part_a", "part_b", "p_a"} - set(reader.fieldnames or ())
            if missing:
                raise SurveyParseError(f"{path}: missing columns {sorted(missing)}")
            for lineno, row in enumerate(reader, 2):
                obj = (row["object"] or "").strip()
                unit = (row.get("unit") or "fraction").strip().lower()
                try:
                    value = float(row["p_a"])
                except (TypeError, ValueError) as exc:
                    raise SurveyParseError(f"{path}:{lineno}: bad p_a {row['p_a']!r}") from exc
                if unit == "percent":
                    value /= 100.0
                elif unit != "fraction":
                    raise SurveyParseError(f"{path}:{lineno}: unknown unit {unit!r}")
                if not obj:
                    raise SurveyParseError(f"{path}:{lineno}: empty object label")
                if obj in seen:
                    raise DuplicateObject(f"{path}:{lineno}: {obj!r} listed twice")
                seen.add(obj)
                records.append(SurveyRecord(obj, row["part_a"].strip(), row["part_b"].strip(), value))
    except OSError as exc:
        raise SurveyParseError(f"cannot read {path}: {exc}") from exc
    return records


@dataclass(frozen=True)
class ReferenceSim:
    """A published similarity value, taken as given."""

    object_label: str
    method: str
    sim: float


def ingest_reference(path) -> list[ReferenceSim]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [ReferenceSim(r["object"].strip(), r["method"].strip(), float(r["sim"])) for r in csv.DictReader(fh)]


def ingest_frequencies(path) -> list[MethodFrequency]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            MethodFrequency(r["object"].strip(), r["method"].strip(), float(r["p_a"]), int(r.get("n_grasps") or 20))
            for r in csv.DictReader(fh)
        ]


# ---------------------------------------------------------------- report


@dataclass(frozen=True)
class ReportRow:
    object_label: str
    part_a: str
    p_a_human: float
    sims: dict  # method -> sim or None


@dataclass(frozen=True)
class SimilarityReport:
    rows: tuple[ReportRow, ...]
    methods: tuple[str, ...]
    averages: dict
    provenance: dict = field(default_factory=dict)

    def check_consistency(self) -> None:
        for m in self.methods:
            vals = [r.sims[m] for r in self.rows if r.sims.get(m) is not None]
            for v in vals:
                if not 0.0 <= v <= 1.0:
                    raise ReportInconsistent(f"{m}: similarity {v} outside [0, 1]")
            expected = math.fsum(vals) / len(vals) if vals else None
            got = self.averages.get(m)
            if (expected is None) != (got is None) or (expected is not None and abs(expected - got) > 1e-12):
                raise ReportInconsistent(f"{m}: average {got} does not match rows ({expected})")

    def to_dict(self) -> dict:
        self.check_consistency()
        return {
            "rows": [
                {
                    "object": r.object_label,
                    "part_a": r.part_a,
                    "p_a_human": r.p_a_human,
                    "sims": {m: r.sims.get(m) for m in self.methods},
                }
                for r in self.rows
            ],
            "averages": dict(self.averages),
            "provenance": dict(self.provenance),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        self.check_consistency()
        header = ["Object", "Preferred Part", *(f"{m} ({self.provenance.get(m, '?')})" for m in self.methods)]
        body = [
            [
                r.object_label,
                f"{r.part_a} {r.p_a_human * 100:.1f}%",
                *("-" if r.sims.get(m) is None else round_half_even(r.sims[m]) for m in self.methods),
            ]
            for r in self.rows
        ]
        avg = ["Average", "", *("-" if self.averages[m] is None else round_half_even(self.averages[m]) for m in self.methods)]
        table = [header, *body, avg]
        widths = [max(len(row[i]) for row in table) for i in range(len(header))]

        def fmt(row):
            return "  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))).rstrip()

        rule = "-" * len(fmt(header))
        return "\n".join([fmt(header), rule, *map(fmt, body), rule, fmt(avg)]) + "\n"


def build_report(
    survey: list[SurveyRecord],
    freqs: list[MethodFrequency],
    reference: list[ReferenceSim] = (),
    provenance: dict | None = None,
) -> SimilarityReport:
    """Per-object similarities and per-method means.

    Measured columns come from ``freqs``; ``reference`` supplies published
    similarity values verbatim. Rows follow the survey order.
    """
    by_obj: dict[str, SurveyRecord] = {}
    for rec in survey:
        if rec.object_label in by_obj:
            raise DuplicateObject(f"survey lists {rec.object_label!r} twice")
        by_obj[rec.object_label] = rec
    if not freqs and not reference:
        raise MissingSurveyRow("no method frequencies to match against the survey")

    cells: dict[tuple[str, str], float] = {}
    methods: list[str] = []
    prov: dict[str, str] = {}
    for obj, method, sim, kind in [
        *((f.object_label, f.method, None, "measured") for f in freqs),
        *((r.object_label, r.method, r.sim, "reference") for r in reference),
    ]:
        if obj not in by_obj:
            raise MissingSurveyRow(f"no survey row for {obj!r} ({method})")
        if (obj, method) in cells:
            raise DuplicateObject(f"{obj!r} appears twice for {method}")
        if method not in prov:
            methods.append(method)
            prov[method] = kind
        elif prov[method] != kind:
            raise EvaluationError(f"{method} mixes measured and reference values")
        cells[(obj, method)] = sim
    for f in freqs:
        cells[(f.object_label, f.method)] = similarity_score(by_obj[f.object_label].p_a_human, f.p_a_method)
    if provenance:
        prov.update(provenance)

    rows = tuple(
        ReportRow(rec.object_label, rec.part_a, rec.p_a_human, {m: cells.get((rec.object_label, m)) for m in methods})
        for rec in survey
    )
    averages = {}
    for m in methods:
        vals = [r.sims[m] for r in rows if r.sims[m] is not None]
        averages[m] = math.fsum(vals) / len(vals) if vals else None
    report = SimilarityReport(rows, tuple(methods), averages, prov)
    report.check_consistency()
    return report
