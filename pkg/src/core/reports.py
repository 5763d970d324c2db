import csv
import logging
import math
import os
from collections import defaultdict
from io import StringIO

import numpy as np
from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from reportlab.graphics import renderSVG
from reportlab.graphics.shapes import Circle, Drawing, Line, String
from reportlab.lib import colors

from src.core.errors import ParseError, ReportIoError
from src.core.harness import MetricReport

logger = logging.getLogger(__name__)

CSV_COLUMNS = ['seed', 'config_id', 'method', 'rmse', 'procrustes_rmse', 'rot_err_deg',
               'trans_err', 'chamfer', 'status', 'iters', 'wall_ms']
FLOAT_COLUMNS = ('rmse', 'procrustes_rmse', 'rot_err_deg', 'trans_err', 'chamfer', 'wall_ms')
INT_COLUMNS = ('seed', 'iters')

METHOD_COLORS = {
    'ns': colors.HexColor('#4F81BD'),
    'nsc': colors.HexColor('#C0504D'),
    'silhouette_ns': colors.HexColor('#9BBB59'),
    'silhouette_nsc': colors.HexColor('#8064A2'),
    'trivial_repeated_sft': colors.HexColor('#F79646'),
    'trivial_repeated_nsc': colors.HexColor('#4BACC6'),
}


def _format(value):
    if isinstance(value, float):
        return repr(value)
    return value


def reports_to_csv_text(reports, include_timing=False):
    output = StringIO()
    writer = csv.DictWriter(output, fieldnames=CSV_COLUMNS, lineterminator='\n')
    writer.writeheader()
    for report in reports:
        row = report.as_row(include_timing)
        writer.writerow({k: _format(v) for k, v in row.items()})
    return output.getvalue()


def emit_report(reports, path, svg_path=None, include_timing=False):
    """Writes the CSV (and the optional SVG scatter). wall_ms stays empty unless include_timing."""
    text = reports_to_csv_text(reports, include_timing)
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', newline='') as f:
            f.write(text)
    except OSError as err:
        raise ReportIoError(f"No se pudo escribir el reporte {path}: {err}") from err
    if svg_path:
        render_scatter_svg(reports, svg_path)
    logger.debug("Reporte escrito en %s (%d filas)", path, len(reports))
    return path


def _parse_value(column, raw, line):
    if column in INT_COLUMNS:
        try:
            return int(raw)
        except ValueError as exc:
            raise ParseError("Entero inválido", line=line, field=column) from exc
    if column in FLOAT_COLUMNS:
        if raw == '':
            return float('nan')
        try:
            return float(raw)
        except ValueError as exc:
            raise ParseError("Número inválido", line=line, field=column) from exc
    return raw


def parse_report_csv(path):
    try:
        with open(path, 'r', newline='') as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != CSV_COLUMNS:
                raise ParseError("Encabezado de reporte inesperado", line=1)
            rows = []
            for line, raw in enumerate(reader, start=2):
                if None in raw.values() or None in raw:
                    raise ParseError("Fila incompleta", line=line)
                values = {c: _parse_value(c, raw[c], line) for c in CSV_COLUMNS}
                rows.append(MetricReport(**values))
            return rows
    except OSError as err:
        raise ReportIoError(f"No se pudo leer el reporte {path}: {err}") from err


def _config_position(config_id, order):
    try:
        return float(config_id)
    except ValueError:
        return float(order.index(config_id) + 1)


def render_scatter_svg(reports, path, width=480, height=320):
    """RMSE against configuration, one colour per method."""
    margin = 48
    points = [r for r in reports if not math.isnan(r.rmse)]
    order = sorted({r.config_id for r in reports})
    drawing = Drawing(width, height)
    drawing.add(Line(margin, margin, width - margin / 2, margin, strokeColor=colors.black))
    drawing.add(Line(margin, margin, margin, height - margin / 2, strokeColor=colors.black))
    drawing.add(String(width / 2, 12, "configuración", textAnchor='middle', fontSize=10))
    drawing.add(String(12, height / 2, "RMSE", fontSize=10))

    if points:
        xs = [_config_position(r.config_id, order) for r in points]
        ys = [r.rmse for r in points]
        x_lo, x_hi = min(xs) - 0.5, max(xs) + 0.5
        y_hi = max(ys) * 1.1 if max(ys) > 0.0 else 1.0
        plot_w = width - 1.5 * margin
        plot_h = height - 1.5 * margin
        for r, x, y in zip(points, xs, ys):
            px = margin + (x - x_lo) / (x_hi - x_lo) * plot_w
            py = margin + y / y_hi * plot_h
            fill = METHOD_COLORS.get(r.method, colors.grey)
            drawing.add(Circle(px, py, 3, fillColor=fill, strokeColor=fill))
        drawing.add(String(margin - 4, height - margin / 2, f"{y_hi:.3g}", textAnchor='end', fontSize=8))
        for cid in order:
            x = _config_position(cid, order)
            px = margin + (x - x_lo) / (x_hi - x_lo) * plot_w
            drawing.add(String(px, margin - 12, str(cid), textAnchor='middle', fontSize=8))
    try:
        renderSVG.drawToFile(drawing, path)
    except OSError as err:
        raise ReportIoError(f"No se pudo escribir el gráfico {path}: {err}") from err
    return path


def export_reports_to_excel(reports, path, include_timing=False):
    wb = Workbook()
    ws = wb.active
    ws.title = "Resultados"
    ws.append(CSV_COLUMNS)

    header_font = Font(bold=True, color="FFFFFF")
    header_fill = PatternFill(start_color="4F81BD", end_color="4F81BD", fill_type="solid")
    for cell in ws[1]:
        cell.font = header_font
        cell.fill = header_fill
        cell.alignment = Alignment(horizontal='center', vertical='center')

    for report in reports:
        row = report.as_row(include_timing)
        ws.append([None if isinstance(v, float) and math.isnan(v) else v for v in row.values()])

    thin_border = Border(left=Side(style='thin'), right=Side(style='thin'), top=Side(style='thin'), bottom=Side(style='thin'))
    for row in ws.iter_rows():
        for cell in row:
            cell.border = thin_border
    for row in ws.iter_rows(min_row=2, min_col=4, max_col=8):
        for cell in row:
            cell.number_format = '0.000000'

    column_widths = {'A': 8, 'B': 10, 'C': 22, 'D': 14, 'E': 16, 'F': 12, 'G': 12, 'H': 12, 'I': 18, 'J': 8, 'K': 10}
    for col, width in column_widths.items():
        ws.column_dimensions[col].width = width

    try:
        wb.save(path)
    except OSError as err:
        raise ReportIoError(f"No se pudo escribir {path}: {err}") from err
    return path


def summarize(reports):
    """Mean/median RMSE and failure count per (config_id, method), in first-seen order."""
    groups = defaultdict(list)
    for r in reports:
        groups[(r.config_id, r.method)].append(r)
    summary = []
    for (config_id, method), items in groups.items():
        values = [r.rmse for r in items if not math.isnan(r.rmse)]
        summary.append({
            'config_id': config_id,
            'method': method,
            'count': len(items),
            'failures': len(items) - len(values),
            'mean_rmse': float(np.mean(values)) if values else float('nan'),
            'median_rmse': float(np.median(values)) if values else float('nan'),
        })
    return summary
