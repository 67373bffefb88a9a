"""Bit-exact file formats: probability tables, predictor documents,
simulation reports.

Parsing is total (any byte input either yields values or raises
``ParseError`` with a row/column or JSON-path location) and writing is
deterministic: fixed key order, reals at 17 significant digits so doubles
round-trip, LF line endings. The stdlib JSON encoder cannot pin float
formatting, so documents are emitted by a small writer of our own and
parsed with the stdlib.
"""

from __future__ import annotations

import json
import math
import re

from .core import COVER_ALL, CalibratedPredictor, ProbabilityRecord, PROB_SUM_TOL, calibration_rank
from .errors import FormatVersionError, ParseError
from .simulation import SimulationReport

FORMAT_VERSION = 1

_ID_PATTERN = re.compile(r"[A-Za-z0-9_-]+\Z")
_PREDICTOR_KEYS = ("format_version", "alpha", "m", "score_fn", "q_hat", "ties_warning")


def _fmt_real(x: float) -> str:
    """A real as a JSON/CSV number token with 17 significant digits."""
    x = float(x)
    if not math.isfinite(x):
        raise ParseError(f"cannot serialize non-finite real {x!r}")
    return format(x, ".17g")


def render_json(doc) -> bytes:
    """Deterministic JSON: insertion key order, 17-digit reals, LF, 2-space indent."""
    out: list[str] = []
    _render(doc, out, 0)
    out.append("\n")
    return "".join(out).encode("utf-8")


def _render(value, out: list[str], depth: int) -> None:
    pad = "  " * (depth + 1)
    if value is None:
        out.append("null")
    elif isinstance(value, bool):
        out.append("true" if value else "false")
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        out.append(_fmt_real(value))
    elif isinstance(value, str):
        out.append(json.dumps(value))
    elif isinstance(value, dict):
        if not value:
            out.append("{}")
            return
        out.append("{\n")
        for i, (key, item) in enumerate(value.items()):
            out.append(f"{pad}{json.dumps(str(key))}: ")
            _render(item, out, depth + 1)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append("  " * depth + "}")
    elif isinstance(value, (list, tuple)):
        if not value:
            out.append("[]")
            return
        out.append("[\n")
        for i, item in enumerate(value):
            out.append(pad)
            _render(item, out, depth + 1)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append("  " * depth + "]")
    else:
        raise ParseError(f"cannot serialize value of type {type(value).__name__}")


# ---------------------------------------------------------------------------
# Probability tables
# ---------------------------------------------------------------------------


def parse_probability_file(data: bytes) -> list[ProbabilityRecord]:
    """Parse a probability table: header ``id,label,p_0,...,p_{C-1}``,
    one record per row, label column optionally empty.

    Raises ``ParseError`` naming the 1-based row (and column where it
    applies) for every malformed input; never any other exception.
    """
    lines = data.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()  # trailing newline
    if not lines:
        raise ParseError("empty file, expected a header row", row=1)

    header = _decode_line(lines[0], row=1)
    columns = header.split(",")
    if len(columns) < 4 or columns[0] != "id" or columns[1] != "label":
        raise ParseError(
            "header must be 'id,label,p_0,...,p_{C-1}' with at least two classes", row=1
        )
    num_classes = len(columns) - 2
    for c in range(num_classes):
        if columns[2 + c] != f"p_{c}":
            raise ParseError(
                f"expected header column 'p_{c}', found {columns[2 + c]!r}",
                row=1,
                column=3 + c,
            )

    records: list[ProbabilityRecord] = []
    for i, raw in enumerate(lines[1:]):
        row = i + 2
        text = _decode_line(raw, row=row)
        cells = text.split(",")
        if len(cells) != num_classes + 2:
            raise ParseError(
                f"expected {num_classes + 2} columns, found {len(cells)}", row=row
            )
        rec_id = cells[0]
        if not _ID_PATTERN.match(rec_id):
            raise ParseError(
                f"id {rec_id!r} must match [A-Za-z0-9_-]+", row=row, column=1
            )
        label: int | None
        if cells[1] == "":
            label = None
        else:
            try:
                label = int(cells[1])
            except ValueError:
                raise ParseError(
                    f"label {cells[1]!r} is not an integer", row=row, column=2
                ) from None
            if not (0 <= label < num_classes):
                raise ParseError(
                    f"label {label} out of range for {num_classes} classes",
                    row=row,
                    column=2,
                )
        probs = []
        for c in range(num_classes):
            cell = cells[2 + c]
            try:
                p = float(cell)
            except ValueError:
                raise ParseError(
                    f"cell {cell!r} is not a number", row=row, column=3 + c
                ) from None
            if not math.isfinite(p) or p < 0.0 or p > 1.0:
                raise ParseError(
                    f"probability {cell!r} not in [0, 1]", row=row, column=3 + c
                )
            probs.append(p)
        total = math.fsum(probs)
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ParseError(
                f"row {rec_id!r}: probabilities sum to {total!r}, "
                f"expected 1 within {PROB_SUM_TOL}",
                row=row,
            )
        records.append(ProbabilityRecord(id=rec_id, label=label, probs=tuple(probs)))
    return records


def _decode_line(raw: bytes, row: int) -> str:
    if raw.endswith(b"\r"):
        raw = raw[:-1]  # CRLF
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"invalid UTF-8 ({exc.reason})", row=row) from None


def render_probability_file(records: list[ProbabilityRecord]) -> bytes:
    """Inverse of ``parse_probability_file`` (used by demos and tests)."""
    if not records:
        raise ParseError("cannot render a table with no records")
    num_classes = records[0].num_classes
    lines = ["id,label," + ",".join(f"p_{c}" for c in range(num_classes))]
    for r in records:
        if r.num_classes != num_classes:
            raise ParseError(f"record {r.id!r} has inconsistent class count")
        label = "" if r.label is None else str(r.label)
        lines.append(",".join([r.id, label] + [_fmt_real(p) for p in r.probs]))
    return ("\n".join(lines) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# Predictor documents
# ---------------------------------------------------------------------------


def serialize_predictor(predictor: CalibratedPredictor) -> bytes:
    doc = {
        "format_version": FORMAT_VERSION,
        "alpha": predictor.alpha,
        "m": predictor.m,
        "score_fn": predictor.score_fn,
        "q_hat": "COVER_ALL" if predictor.covers_all else predictor.q_hat,
        "ties_warning": predictor.ties_warning,
    }
    return render_json(doc)


def parse_predictor(data: bytes) -> CalibratedPredictor:
    """Parse and validate a predictor document; exact inverse of
    ``serialize_predictor`` including the COVER_ALL sentinel."""
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"not a JSON document ({exc})", json_path="$") from None
    if not isinstance(doc, dict):
        raise ParseError("top-level value must be an object", json_path="$")
    for key in _PREDICTOR_KEYS:
        if key not in doc:
            raise ParseError(f"missing field {key!r}", json_path=f"$.{key}")
    for key in doc:
        if key not in _PREDICTOR_KEYS:
            raise ParseError(f"unknown field {key!r}", json_path=f"$.{key}")

    version = doc["format_version"]
    if not isinstance(version, int) or isinstance(version, bool):
        raise ParseError("format_version must be an integer", json_path="$.format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionError(
            f"unsupported format_version {version} (supported: {FORMAT_VERSION})",
            json_path="$.format_version",
        )

    alpha = doc["alpha"]
    if not _is_real(alpha) or not (0.0 < float(alpha) < 1.0):
        raise ParseError(f"alpha must be a real in (0, 1), got {alpha!r}", json_path="$.alpha")
    m = doc["m"]
    if not isinstance(m, int) or isinstance(m, bool) or m < 1:
        raise ParseError(f"m must be an integer >= 1, got {m!r}", json_path="$.m")
    score_fn = doc["score_fn"]
    if not isinstance(score_fn, str) or not score_fn:
        raise ParseError("score_fn must be a non-empty string", json_path="$.score_fn")
    ties = doc["ties_warning"]
    if not isinstance(ties, bool):
        raise ParseError("ties_warning must be a boolean", json_path="$.ties_warning")

    raw_q = doc["q_hat"]
    if raw_q == "COVER_ALL":
        q_hat = COVER_ALL
    elif _is_real(raw_q) and math.isfinite(float(raw_q)) and float(raw_q) >= 0.0:
        q_hat = float(raw_q)
    else:
        raise ParseError(
            f"q_hat must be a finite non-negative number or \"COVER_ALL\", got {raw_q!r}",
            json_path="$.q_hat",
        )
    degenerate = calibration_rank(m, float(alpha)) > m
    if degenerate != (q_hat is COVER_ALL):
        raise ParseError(
            "q_hat sentinel inconsistent with alpha and m "
            f"(COVER_ALL applies exactly when ceil((1-alpha)(m+1)) > m)",
            json_path="$.q_hat",
        )
    return CalibratedPredictor(
        alpha=float(alpha), m=m, score_fn=score_fn, q_hat=q_hat, ties_warning=ties
    )


def _is_real(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


# ---------------------------------------------------------------------------
# Simulation reports
# ---------------------------------------------------------------------------

REPORT_JSON_NAME = "report.json"
HISTOGRAM_TABLE_NAME = "histogram.csv"


def write_report(report: SimulationReport) -> dict[str, bytes]:
    """Render a simulation report as its two files: the JSON summary and
    the sibling histogram table, keyed by canonical file name."""
    config = report.config
    law = report.analytic_law
    doc = {
        "format_version": FORMAT_VERSION,
        "config": {
            "m": config.m,
            "alpha": config.alpha,
            "trials": config.trials,
            "eval_size": config.eval_size,
            "seed": config.seed,
            "shortfall_threshold": config.shortfall_threshold,
            "sampling": config.sampling,
            "histogram_bins": config.histogram_bins,
            "source": report.source_kind,
            "num_classes": report.num_classes,
            "pool_size": report.pool_size,
            "seed_mixer": "splitmix64",
            "rng": "philox",
        },
        "summary": {
            "mean_coverage": report.mean_coverage,
            "shortfall_fraction": report.shortfall_fraction,
            "analytic_law": None
            if law is None
            else {
                "degenerate": law.degenerate,
                "a": law.a,
                "b": law.b,
                "mean": law.mean,
            },
        },
    }
    hist = report.histogram
    lines = ["bin_left,bin_right,count,frequency"]
    for i, count in enumerate(hist.counts):
        lines.append(
            ",".join(
                [
                    _fmt_real(hist.bin_edges[i]),
                    _fmt_real(hist.bin_edges[i + 1]),
                    str(count),
                    _fmt_real(hist.frequencies[i]),
                ]
            )
        )
    table = ("\n".join(lines) + "\n").encode("utf-8")
    return {REPORT_JSON_NAME: render_json(doc), HISTOGRAM_TABLE_NAME: table}
