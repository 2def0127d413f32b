"""Dataset files and synthetic data generation.

Datasets travel as plain CSV for auditability: header ``id,col0[,col1,...]``
with 1..4 value columns, one record per row, identifiers unique, values
non-negative integers within the active bound.  The parser is strict;
a file that loads is a file the protocol will accept.

gen_data builds matched client/server files with a controlled overlap
plus an expected-results file computed by the plaintext oracle, so a
protocol run over the generated files can be checked against a value
that never touched the protocol code.  Everything is driven by one
seeded generator: the same arguments always produce byte-identical
files.
"""

from __future__ import annotations

import csv
import io
import random
import re

from . import oracle
from .commutative import MAX_IDENTIFIER_BYTES
from .errors import (
    BadHeader,
    BoundExceeded,
    ColumnMismatch,
    DuplicateIdentifier,
    InfeasibleParams,
    InvalidIdentifier,
    NonIntegerValue,
)
from .protocol import AggregationSpec, Dataset, Operator, Record

MAX_COLUMNS = 4

# unsigned decimal only: no sign, no spaces, no underscores
_VALUE_RE = re.compile(r"[0-9]+\Z")


def _expected_header(columns: int) -> list[str]:
    return ["id"] + [f"col{i}" for i in range(columns)]


def load_dataset(path, bound: int) -> Dataset:
    """Parse a CSV dataset file, enforcing the value bound."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise BadHeader("empty file, expected header id,col0[,col1,...]")
    header = rows[0]
    columns = len(header) - 1
    if not 1 <= columns <= MAX_COLUMNS or header != _expected_header(columns):
        raise BadHeader(
            f"bad header {','.join(header)!r}, expected id,col0[,col1,...] "
            f"with 1..{MAX_COLUMNS} columns"
        )
    seen: set[bytes] = set()
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != columns + 1:
            raise ColumnMismatch(
                f"line {lineno}: {len(row)} fields, header has {columns + 1}"
            )
        ident = row[0].encode("utf-8")
        if not 1 <= len(ident) <= MAX_IDENTIFIER_BYTES:
            raise InvalidIdentifier(
                f"line {lineno}: identifier must be 1..{MAX_IDENTIFIER_BYTES} bytes"
            )
        if ident in seen:
            raise DuplicateIdentifier(
                f"line {lineno}: duplicate identifier {row[0]!r}"
            )
        seen.add(ident)
        values = []
        for col, text in enumerate(row[1:]):
            if not _VALUE_RE.match(text):
                raise NonIntegerValue(
                    f"line {lineno} col{col}: {text!r} is not a "
                    "non-negative integer"
                )
            v = int(text)
            if v > bound:
                raise BoundExceeded(
                    f"line {lineno} col{col}: {v} exceeds bound {bound}"
                )
            values.append(v)
        records.append(Record(ident, tuple(values)))
    return Dataset(tuple(records), columns, bound)


def dump_dataset(ds: Dataset) -> str:
    """Inverse of load_dataset; deterministic CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_expected_header(ds.column_count))
    for rec in ds.records:
        w.writerow([rec.identifier.decode("utf-8"), *rec.values])
    return buf.getvalue()


def gen_data(
    seed: int,
    size_a: int,
    size_b: int,
    intersection: int,
    columns: int,
    bound: int,
) -> tuple[str, str, str]:
    """Synthetic (client CSV, server CSV, expected-results text).

    Exactly `intersection` identifiers are shared; values are uniform in
    [0, bound].  The expected-results text holds the oracle cardinality
    plus sum and sum-of-squares for every column, as key=value lines.
    """
    if not 1 <= columns <= MAX_COLUMNS:
        raise InfeasibleParams(f"columns must be 1..{MAX_COLUMNS}, got {columns}")
    if bound < 1:
        raise InfeasibleParams(f"bound must be >= 1, got {bound}")
    if size_a < 0 or size_b < 0 or intersection < 0:
        raise InfeasibleParams("sizes must be non-negative")
    if intersection > min(size_a, size_b):
        raise InfeasibleParams(
            f"intersection {intersection} exceeds min({size_a}, {size_b})"
        )
    rng = random.Random(seed)

    total = size_a + size_b - intersection
    idents: list[str] = []
    seen: set[str] = set()
    while len(idents) < total:
        tok = f"u{rng.getrandbits(48):012x}"
        if tok not in seen:
            seen.add(tok)
            idents.append(tok)
    shared = idents[:intersection]
    a_only = idents[intersection:size_a]
    b_only = idents[size_a:]

    def make_rows(ids: list[str]) -> list[Record]:
        return [
            Record(
                i.encode("utf-8"),
                tuple(rng.randrange(bound + 1) for _ in range(columns)),
            )
            for i in ids
        ]

    a_rows = make_rows(shared + a_only)
    b_rows = make_rows(shared + b_only)
    rng.shuffle(a_rows)
    rng.shuffle(b_rows)
    client = Dataset(tuple(a_rows), columns, bound)
    server = Dataset(tuple(b_rows), columns, bound)

    spec = AggregationSpec(
        tuple(
            (c, op)
            for c in range(columns)
            for op in (Operator.SUM, Operator.SUM_OF_SQUARES)
        )
    )
    expected = oracle.intersection_stats(
        client, [r.identifier for r in b_rows], spec
    )
    lines = [f"cardinality={expected.cardinality}"]
    for c in range(columns):
        lines.append(f"sum_col{c}={expected.aggregates[(c, Operator.SUM)]}")
        lines.append(
            f"sumsq_col{c}={expected.aggregates[(c, Operator.SUM_OF_SQUARES)]}"
        )
    return dump_dataset(client), dump_dataset(server), "\n".join(lines) + "\n"


def parse_expected(text: str) -> dict[str, int]:
    """key=value lines from gen_data back into a dict."""
    out = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        if not _VALUE_RE.match(value):
            raise NonIntegerValue(f"bad expected-results line {line!r}")
        out[key] = int(value)
    return out
