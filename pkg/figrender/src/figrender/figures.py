"""Figure presets and deterministic errorbar rendering.

Every stylistic choice (sizes, fonts, colors, markers, dashes) lives in the
versioned style map below, and the SVG id salt is derived from the style
version, so a fixed input CSV renders to byte-identical output until the
style version is bumped.
"""

from dataclasses import dataclass, field

import matplotlib
from matplotlib.figure import Figure

from figrender.reader import SchemaError, read_results

STYLE_VERSION = "1"

_RC_STYLE = {
    "figure.figsize": (6.4, 4.4),
    "figure.dpi": 100.0,
    "savefig.dpi": 100.0,
    "font.family": "DejaVu Sans",
    "font.size": 10.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.framealpha": 0.9,
    "axes.unicode_minus": False,
    "svg.fonttype": "path",
    "svg.hashsalt": f"figrender-{STYLE_VERSION}",
}

_SCHEME_STYLE = {
    "proposed": ("C0", "o"),
    "perfect_csi": ("C1", "s"),
    "random": ("C2", "^"),
    "no_lis": ("C3", "v"),
    "half": ("C0", "o"),
    "four": ("C1", "s"),
}

_METRIC_STYLE = {
    "nmse_H_db": ("C0", "o"),
    "nmse_G_db": ("C1", "s"),
    "nmse_Z_db": ("C2", "^"),
    "rate_bps_hz": ("C0", "o"),
}

_FALLBACK_STYLE = (("C4", "d"), ("C5", "P"), ("C6", "X"), ("C7", "*"))

_LINESTYLES = ("-", "--", ":", "-.")

_SCHEME_LABEL = {
    "perfect_csi": "perfect CSI",
    "no_lis": "no LIS",
    "random": "random phases",
    "half": "half-wave spacing",
    "four": "four-wave spacing",
}

_CHANNEL_LABEL = {
    "nmse_H_db": "H",
    "nmse_G_db": "G",
    "nmse_Z_db": "Z",
    "rate_bps_hz": "rate",
}

_X_LABEL = {
    "snr_db": "SNR (dB)",
    "kappa": "condition number",
    "t_r": "training length (channel uses)",
    "num_elements": "surface elements",
}


@dataclass(frozen=True)
class FigureSpec:
    """One figure: which CSV slice to plot and where to write the image.

    ``x_column`` names the sweep (matched against the CSV ``sweep_name``
    column), ``y_metric`` the metric series to draw, and ``group_by``
    whether colors follow the scheme column or the per-channel metric.
    """

    csv_path: str
    x_column: str
    y_metric: tuple
    group_by: str
    output_path: str
    log_y: bool = False

    def __post_init__(self):
        metrics = (self.y_metric,) if isinstance(self.y_metric, str) else tuple(self.y_metric)
        if not metrics:
            raise ValueError("y_metric must name at least one metric")
        object.__setattr__(self, "y_metric", metrics)
        if self.group_by not in ("scheme", "channel"):
            raise ValueError("group_by must be 'scheme' or 'channel'")


@dataclass(frozen=True)
class RenderResult:
    """What a render call produced, for cross-checks against the CSV."""

    output_path: str
    series: tuple
    rows_used: int
    points: tuple = field(default=())


_PRESETS = {
    "nmse-snr": ("snr_db", ("nmse_H_db", "nmse_G_db"), "channel"),
    "nmse-kappa": ("kappa", ("nmse_H_db", "nmse_G_db"), "channel"),
    "rate-snr": ("snr_db", ("rate_bps_hz",), "scheme"),
    "rate-tr": ("t_r", ("rate_bps_hz",), "scheme"),
    "rate-l": ("num_elements", ("rate_bps_hz",), "scheme"),
}

FIGURE_NAMES = tuple(_PRESETS)


def preset_spec(name, csv_path, output_path):
    """Build the spec for one of the five named figures."""
    if name not in _PRESETS:
        raise ValueError(f"unknown figure {name!r}; choose from {', '.join(FIGURE_NAMES)}")
    x_column, metrics, group_by = _PRESETS[name]
    return FigureSpec(
        csv_path=csv_path,
        x_column=x_column,
        y_metric=metrics,
        group_by=group_by,
        output_path=output_path,
    )


def _select(rows, spec):
    """Filter rows to the requested sweep and metrics, with clear errors."""
    sweeps = {row.sweep_name for row in rows}
    if spec.x_column not in sweeps:
        raise SchemaError(
            f"{spec.csv_path}: no rows with sweep {spec.x_column!r}; "
            f"file contains {sorted(sweeps) or ['nothing']}"
        )
    metrics = {row.metric for row in rows}
    if not any(m in metrics for m in spec.y_metric):
        raise SchemaError(
            f"{spec.csv_path}: none of the metrics {list(spec.y_metric)} present; "
            f"file contains {sorted(metrics)}"
        )
    selected = [
        row for row in rows if row.sweep_name == spec.x_column and row.metric in spec.y_metric
    ]
    if not selected:
        raise SchemaError(
            f"{spec.csv_path}: empty selection for sweep {spec.x_column!r} "
            f"and metrics {list(spec.y_metric)}"
        )
    return selected


def _series_groups(selected, spec):
    """Group rows into (metric, scheme) series, points sorted by x.

    Metric order follows the spec; scheme order follows first appearance in
    the file, which the harness writes deterministically.
    """
    schemes = []
    for row in selected:
        if row.scheme not in schemes:
            schemes.append(row.scheme)
    groups = []
    for metric in spec.y_metric:
        for scheme in schemes:
            points = sorted(
                (row for row in selected if row.metric == metric and row.scheme == scheme),
                key=lambda row: row.sweep_value,
            )
            if points:
                groups.append((metric, scheme, points))
    return groups, schemes


def _series_label(metric, scheme, spec, many_metrics, many_schemes):
    channel = _CHANNEL_LABEL.get(metric, metric)
    scheme_label = _SCHEME_LABEL.get(scheme, scheme)
    if many_metrics and many_schemes:
        return f"{channel}, {scheme_label}"
    if many_metrics:
        return channel
    if many_schemes:
        return scheme_label
    return scheme_label if spec.group_by == "scheme" else channel


def _series_style(metric, scheme, spec, schemes, metric_idx):
    """Color and marker follow the grouping column; dashes follow the other."""
    if spec.group_by == "scheme":
        key, table, dash_idx = scheme, _SCHEME_STYLE, metric_idx
        order = [s for s in schemes if s not in table]
    else:
        key, table, dash_idx = metric, _METRIC_STYLE, schemes.index(scheme)
        order = [m for m in spec.y_metric if m not in table]
    if key in table:
        color, marker = table[key]
    else:
        color, marker = _FALLBACK_STYLE[order.index(key) % len(_FALLBACK_STYLE)]
    return color, marker, _LINESTYLES[dash_idx % len(_LINESTYLES)]


def _y_label(metrics):
    if all(m.startswith("nmse") for m in metrics):
        return "NMSE (dB)"
    if metrics == ("rate_bps_hz",):
        return "achievable rate (bits/s/Hz)"
    return " / ".join(metrics)


def render(spec):
    """Render one figure to ``spec.output_path`` (.svg or .png).

    The input CSV is only ever read.  Returns the series labels and row
    count actually drawn so callers can cross-check them against the file.
    """
    suffix = spec.output_path.rsplit(".", 1)[-1].lower()
    if suffix not in ("svg", "png"):
        raise ValueError(f"unsupported output format {suffix!r}; use .svg or .png")
    rows = read_results(spec.csv_path)
    selected = _select(rows, spec)
    groups, schemes = _series_groups(selected, spec)
    many_metrics = len({metric for metric, _, _ in groups}) > 1
    many_schemes = len(schemes) > 1

    with matplotlib.rc_context(_RC_STYLE):
        fig = Figure()
        ax = fig.add_subplot()
        labels = []
        points_per_series = []
        for metric_idx, metric in enumerate(spec.y_metric):
            for _, scheme, points in (g for g in groups if g[0] == metric):
                label = _series_label(metric, scheme, spec, many_metrics, many_schemes)
                color, marker, dashes = _series_style(metric, scheme, spec, schemes, metric_idx)
                ax.errorbar(
                    [p.sweep_value for p in points],
                    [p.mean for p in points],
                    yerr=[p.stderr for p in points],
                    color=color,
                    marker=marker,
                    linestyle=dashes,
                    linewidth=1.4,
                    markersize=5,
                    capsize=3,
                    label=label,
                )
                labels.append(label)
                points_per_series.append(len(points))
        if spec.log_y:
            ax.set_yscale("log")
        ax.set_xlabel(_X_LABEL.get(spec.x_column, spec.x_column))
        ax.set_ylabel(_y_label(spec.y_metric))
        ax.legend()
        if suffix == "svg":
            fig.savefig(spec.output_path, format="svg", metadata={"Date": None})
        else:
            fig.savefig(
                spec.output_path,
                format="png",
                metadata={"Software": f"figrender {STYLE_VERSION}"},
            )
    return RenderResult(
        output_path=spec.output_path,
        series=tuple(labels),
        rows_used=len(selected),
        points=tuple(points_per_series),
    )
