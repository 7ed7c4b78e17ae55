"""Reading and validating the harness result CSV.

The renderer only ever consumes the aggregated CSV interface, never the
simulator internals, so this module is the single place where the expected
schema lives.  Anything that does not match it raises ``SchemaError``.
"""

import csv
from dataclasses import dataclass

CSV_COLUMNS = (
    "experiment",
    "sweep_name",
    "sweep_value",
    "scheme",
    "metric",
    "mean",
    "stderr",
    "trials",
    "seed",
)


class SchemaError(ValueError):
    """Raised when a CSV file does not match the harness result schema."""


@dataclass(frozen=True)
class ResultRow:
    """One aggregated point: a (sweep value, scheme, metric) cell."""

    experiment: str
    sweep_name: str
    sweep_value: float
    scheme: str
    metric: str
    mean: float
    stderr: float
    trials: int
    seed: int


def read_results(path):
    """Parse a result CSV into a tuple of rows.

    The header must match ``CSV_COLUMNS`` exactly and every data cell must
    parse as its declared type; the file is opened read-only and never
    modified.
    """
    rows = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {','.join(CSV_COLUMNS)}")
        if tuple(header) != CSV_COLUMNS:
            raise SchemaError(
                f"{path}: header {','.join(header)!r} does not match the "
                f"result schema {','.join(CSV_COLUMNS)!r}"
            )
        for lineno, cells in enumerate(reader, start=2):
            if len(cells) != len(CSV_COLUMNS):
                raise SchemaError(
                    f"{path}:{lineno}: expected {len(CSV_COLUMNS)} cells, got {len(cells)}"
                )
            try:
                rows.append(
                    ResultRow(
                        experiment=cells[0],
                        sweep_name=cells[1],
                        sweep_value=float(cells[2]),
                        scheme=cells[3],
                        metric=cells[4],
                        mean=float(cells[5]),
                        stderr=float(cells[6]),
                        trials=int(cells[7]),
                        seed=int(cells[8]),
                    )
                )
            except ValueError:
                raise SchemaError(
                    f"{path}:{lineno}: non-numeric value in a numeric column"
                ) from None
    return tuple(rows)
