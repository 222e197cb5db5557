"""Bias report assembly and emission.

Rows are (method, attribute) cells per language holding |50 - metric|, plus
a rounded row average. Output formats: an aligned text table (best score per
language column flagged), a long-form CSV, and one plot CSV per table for
bar charts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .biaseval import MetricScore, bias_score, round_half_up
from .lexicon import Attribute

_LANG_ORDER = {"DE": 0, "ZH": 1, "ES": 2, "JA": 3, "EN": 4}


def _language_sort_key(code: str):
    return (_LANG_ORDER.get(code, 99), code)


@dataclass(frozen=True)
class ReportEntry:
    method: str
    attribute: Attribute
    language: str
    metric: MetricScore


@dataclass
class ReportRow:
    method: str
    attribute: Attribute
    kind: str
    cells: dict[str, float]        # language -> bias score, 2 decimals
    metrics: dict[str, MetricScore]
    avg: float


class BiasReport:
    """Tables grouped by (metric kind, attribute), rows per method."""

    def __init__(self, rows: Sequence[ReportRow], entries: Sequence[ReportEntry]):
        self.rows = list(rows)
        self.entries = list(entries)

    def tables(self) -> dict[tuple[str, Attribute], list[ReportRow]]:
        grouped: dict[tuple[str, Attribute], list[ReportRow]] = {}
        for row in self.rows:
            grouped.setdefault((row.kind, row.attribute), []).append(row)
        return grouped

    def row(self, method: str, attribute: Attribute, kind: str) -> ReportRow:
        for r in self.rows:
            if (r.method, r.attribute, r.kind) == (method, attribute, kind):
                return r
        raise KeyError((method, attribute, kind))

    # ---- emission ----------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for (kind, attribute), rows in self.tables().items():
            languages = sorted(rows[0].cells, key=_language_sort_key)
            best = {
                lang: min(r.cells[lang] for r in rows) for lang in languages
            }
            header = ["method"] + languages + ["Avg."]
            width0 = max(len("method"), max(len(r.method) for r in rows))
            lines.append(f"== {kind} / {attribute.value} ==")
            lines.append(
                header[0].ljust(width0) + "".join(h.rjust(9) for h in header[1:])
            )
            for r in rows:
                cells = []
                for lang in languages:
                    flag = "*" if r.cells[lang] == best[lang] else " "
                    cells.append(f"{r.cells[lang]:8.2f}{flag}")
                cells.append(f"{r.avg:8.2f} ")
                lines.append(r.method.ljust(width0) + "".join(cells))
            lines.append("")
        return "\n".join(lines)

    def to_csv(self, path) -> None:
        """Long form: one row per cell plus an Avg row per method."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["kind", "attribute", "method", "language", "metric", "bias_score"]
            )
            for row in self.rows:
                languages = sorted(row.cells, key=_language_sort_key)
                for lang in languages:
                    writer.writerow(
                        [
                            row.kind,
                            row.attribute.value,
                            row.method,
                            lang,
                            f"{row.metrics[lang].value:.6f}",
                            f"{row.cells[lang]:.2f}",
                        ]
                    )
                writer.writerow(
                    [row.kind, row.attribute.value, row.method, "Avg", "", f"{row.avg:.2f}"]
                )

    def figure_data(self) -> dict[str, list[tuple[str, str, float]]]:
        """Per-table bar chart rows: (method, language, bias score)."""
        figures = {}
        for (kind, attribute), rows in self.tables().items():
            name = f"fig_{kind}_{attribute.value}"
            data = []
            for row in rows:
                for lang in sorted(row.cells, key=_language_sort_key):
                    data.append((row.method, lang, row.cells[lang]))
            figures[name] = data
        return figures

    def write_figure_csvs(self, out_dir) -> list[str]:
        import os

        written = []
        for name, rows in self.figure_data().items():
            path = os.path.join(str(out_dir), f"{name}.csv")
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["method", "language", "bias_score"])
                writer.writerows(rows)
            written.append(path)
        return written


def make_report(entries: Iterable[ReportEntry]) -> BiasReport:
    """Assemble rows; every method within a table must cover every language."""
    entries = list(entries)
    grouped: dict[tuple[str, Attribute, str], dict[str, MetricScore]] = {}
    order: list[tuple[str, Attribute, str]] = []
    table_langs: dict[tuple[str, Attribute], set[str]] = {}
    for e in entries:
        key = (e.method, e.attribute, e.metric.kind)
        if key not in grouped:
            grouped[key] = {}
            order.append(key)
        if e.language in grouped[key]:
            raise ValueError(f"duplicate cell {key} / {e.language}")
        grouped[key][e.language] = e.metric
        table_langs.setdefault((e.metric.kind, e.attribute), set()).add(e.language)
    rows = []
    for method, attribute, kind in order:
        metrics = grouped[(method, attribute, kind)]
        expected = table_langs[(kind, attribute)]
        missing = expected - set(metrics)
        if missing:
            raise ValueError(
                f"method {method!r} ({kind}/{attribute.value}) missing languages "
                f"{sorted(missing)}"
            )
        cells = {lang: bias_score(m) for lang, m in metrics.items()}
        mean = sum(Fraction(str(v)) for v in cells.values()) / len(cells)
        rows.append(
            ReportRow(
                method=method,
                attribute=attribute,
                kind=kind,
                cells=cells,
                metrics=dict(metrics),
                avg=round_half_up(mean),
            )
        )
    return BiasReport(rows, entries)


# ---- raw score files (written by scorers, merged by the report command) ----

_RAW_HEADER = [
    "method", "attribute", "kind", "language",
    "value", "exact_num", "exact_den", "n_pairs", "n_skipped",
]


def write_raw_scores(path, entries: Iterable[ReportEntry]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_RAW_HEADER)
        for e in entries:
            m = e.metric
            writer.writerow(
                [
                    e.method, e.attribute.value, m.kind, e.language,
                    f"{m.value:.10f}", m.exact.numerator, m.exact.denominator,
                    m.n_pairs, m.n_skipped,
                ]
            )


def read_raw_scores(path) -> list[ReportEntry]:
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != _RAW_HEADER:
            raise ValueError(f"{path}: not a raw score file")
        for record in reader:
            exact = Fraction(int(record["exact_num"]), int(record["exact_den"]))
            entries.append(
                ReportEntry(
                    method=record["method"],
                    attribute=Attribute(record["attribute"]),
                    language=record["language"],
                    metric=MetricScore(
                        value=float(record["value"]),
                        n_pairs=int(record["n_pairs"]),
                        kind=record["kind"],
                        exact=exact,
                        n_skipped=int(record["n_skipped"]),
                    ),
                )
            )
    return entries
