# report_generator.py - JSON, CSV, Excel and SVG chart writers

import io
import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path

import matplotlib
import numpy as np
import pandas as pd

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from config import FORMAT_VERSION, TOOL_VERSION
from utils import ensure_directory_exists, get_file_size_mb, safe_write_file, sanitize_filename

logger = logging.getLogger(__name__)

HEADER_FILL = "366092"
SHEET_NAME_LIMIT = 31

# ─── JSON ──────────────────────────────────────────────────────────
def to_jsonable(obj):
    """Plain JSON types; non-finite floats become null"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, pd.DataFrame):
        return to_jsonable(obj.to_dict(orient='records'))
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def envelope(payload, seed=None, config_echo=None):
    doc = {
        'tool_version': TOOL_VERSION,
        'format_version': FORMAT_VERSION,
        'seed': seed,
        'config_echo': config_echo or {},
    }
    doc.update(payload or {})
    return doc


def dumps(doc):
    return json.dumps(to_jsonable(doc), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path, payload, seed=None, config_echo=None, wrap=True):
    """Write a report document; byte-identical for identical inputs"""
    doc = envelope(payload, seed, config_echo) if wrap else payload
    path = safe_write_file(path, dumps(doc))
    logger.info(f"✓ JSON saved: {path}")
    return path


def read_json(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)

# ─── CSV ───────────────────────────────────────────────────────────
def write_csv(frame: pd.DataFrame, path):
    path = Path(path)
    ensure_directory_exists(path.parent)
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.info(f"✓ CSV saved: {path} ({len(frame)} rows)")
    return path

# ─── EXCEL ─────────────────────────────────────────────────────────
def sheet_title(name, taken=()):
    """Workbook-safe sheet name, unique among ``taken``"""
    base = sanitize_filename(name, max_length=SHEET_NAME_LIMIT)
    title, i = base, 2
    while title in taken:
        suffix = f"_{i}"
        title = base[:SHEET_NAME_LIMIT - len(suffix)] + suffix
        i += 1
    return title


def create_excel_report(sheets, path):
    """One styled sheet per result table.

    ``sheets`` maps a sheet name to a DataFrame; order is kept.
    """
    from openpyxl import Workbook
    from openpyxl.styles import Alignment, Font, PatternFill
    from openpyxl.utils import get_column_letter

    path = Path(path)
    ensure_directory_exists(path.parent)
    wb = Workbook()
    wb.remove(wb.active)

    header_font = Font(bold=True, color="FFFFFF")
    header_fill = PatternFill(start_color=HEADER_FILL, end_color=HEADER_FILL, fill_type="solid")

    taken = []
    for name, frame in sheets.items():
        if frame is None:
            continue
        title = sheet_title(name, taken)
        taken.append(title)
        ws = wb.create_sheet(title)
        ws.append([str(c) for c in frame.columns])
        for cell in ws[1]:
            cell.font = header_font
            cell.fill = header_fill
            cell.alignment = Alignment(horizontal="center")

        for row in frame.itertuples(index=False):
            ws.append([_cell_value(v) for v in row])

        for j, column in enumerate(frame.columns, start=1):
            longest = max([len(str(column))] + [len(str(v)) for v in frame[column].head(200)])
            ws.column_dimensions[get_column_letter(j)].width = min(max(12, longest + 2), 60)

    if not taken:
        wb.create_sheet("empty")
    wb.save(path)
    logger.info(f"✓ Excel saved: {path} ({len(taken)} sheets, {get_file_size_mb(path):.2f} MB)")
    return path


def _cell_value(v):
    if isinstance(v, (dict, list, tuple)):
        return json.dumps(to_jsonable(v), sort_keys=True)
    v = to_jsonable(v)
    return v

# ─── SVG ───────────────────────────────────────────────────────────
FIGURE_SIZE = (6.4, 4.0)
PALETTE = ["#366092", "#c0504d", "#9bbb59", "#8064a2", "#4bacc6", "#f79646"]
SVG_RC = {
    'svg.hashsalt': 'tabkit',
    'svg.fonttype': 'none',
    'font.family': 'DejaVu Sans',
    'axes.unicode_minus': False,
}


def _save_svg(fig, path):
    """Serialize without a timestamp so reruns are byte-identical"""
    buffer = io.StringIO()
    fig.savefig(buffer, format='svg', metadata={'Date': None})
    plt.close(fig)
    return safe_write_file(path, buffer.getvalue())


def write_svg_bar_chart(labels, values, path, title=""):
    """Vertical bars around a zero line; negative values hang below it"""
    labels = [str(label) for label in labels]
    values = [float(v) for v in values]
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=FIGURE_SIZE, constrained_layout=True)
        positions = np.arange(len(values))
        ax.bar(positions, values, color=[PALETTE[0] if v >= 0 else PALETTE[1] for v in values])
        ax.axhline(0.0, color='black', linewidth=0.8)
        ax.set_xticks(positions)
        if len(labels) > 6:
            ax.set_xticklabels(labels, rotation=45, ha='right')
        else:
            ax.set_xticklabels(labels)
        ax.set_title(title)
        ax.grid(True, axis='y', alpha=0.3)
        return _save_svg(fig, path)


def write_svg_line_chart(series, path, title=""):
    """``series`` maps a label to ``(xs, ys)``; one line per series"""
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=FIGURE_SIZE, constrained_layout=True)
        for i, (label, (xs, ys)) in enumerate(series.items()):
            ax.plot([float(x) for x in xs], [float(y) for y in ys], marker='o', markersize=3,
                    color=PALETTE[i % len(PALETTE)], label=str(label))
        if series:
            ax.legend(loc='best', fontsize=8)
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
        return _save_svg(fig, path)

# ─── RUN METADATA ──────────────────────────────────────────────────
def write_metadata(out_dir, command, started_at, duration, extra=None):
    """Timing lives here so the primary outputs stay byte-identical across reruns"""
    doc = {
        'command': command,
        'started_at': datetime.fromtimestamp(started_at, tz=timezone.utc).isoformat(),
        'duration_seconds': round(duration, 3),
        'tool_version': TOOL_VERSION,
    }
    doc.update(extra or {})
    return safe_write_file(Path(out_dir) / "metadata.json", dumps(doc))


def write_error(out_dir, error_doc):
    return safe_write_file(Path(out_dir) / "error.json", dumps(error_doc))
