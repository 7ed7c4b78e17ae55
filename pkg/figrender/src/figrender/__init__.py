"""Line-plot renderer for simulator result tables.

Reads the aggregated result CSV written by the ``lisim`` harness and turns
it into the five standard figures (estimation error against SNR and against
conditioning, achievable rate against SNR, training length and element
count) with one errorbar series per scheme.  Output bytes are deterministic
for a fixed input file and style version.
"""

from figrender.figures import (
    FIGURE_NAMES,
    STYLE_VERSION,
    FigureSpec,
    RenderResult,
    preset_spec,
    render,
)
from figrender.reader import CSV_COLUMNS, ResultRow, SchemaError, read_results

__all__ = [
    "CSV_COLUMNS",
    "FIGURE_NAMES",
    "STYLE_VERSION",
    "FigureSpec",
    "RenderResult",
    "ResultRow",
    "SchemaError",
    "preset_spec",
    "read_results",
    "render",
]
