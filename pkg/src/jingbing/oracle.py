"""Plaintext reference for intersection statistics.

Sees both inputs in the clear, so it can never be part of a protocol
path; it exists to judge protocol runs and to emit expected-results files
next to generated datasets.  Arithmetic is exact integer arithmetic with
no modular reduction, matching what the homomorphic pipeline must
reproduce.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import ColumnMismatch
from .protocol import AggregationSpec, Dataset, Operator


@dataclass(frozen=True)
class OracleResult:
    cardinality: int
    aggregates: dict[tuple[int, Operator], int]


def intersection_stats(
    client_ds: Dataset,
    server_ids: Iterable[bytes],
    spec: AggregationSpec,
) -> OracleResult:
    """Cardinality and exact per-(column, operator) aggregates.

    Identifiers match on byte equality, mirroring the protocol's
    canonical-encoding equality rule.
    """
    spec.check()
    for col, _ in spec.entries:
        if col >= client_ds.column_count:
            raise ColumnMismatch(
                f"spec column {col} outside dataset's "
                f"{client_ds.column_count} columns"
            )
    ids = set(server_ids)
    matching = [rec for rec in client_ds.records if rec.identifier in ids]
    aggregates: dict[tuple[int, Operator], int] = {}
    for col, op in spec.entries:
        if op is Operator.SUM:
            total = sum(rec.values[col] for rec in matching)
        else:
            total = sum(rec.values[col] ** 2 for rec in matching)
        aggregates[(col, op)] = total
    return OracleResult(len(matching), aggregates)
