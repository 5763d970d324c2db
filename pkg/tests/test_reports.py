import math

import pytest
from openpyxl import load_workbook

from src.core.errors import ParseError, ReportIoError
from src.core.harness import MetricReport
from src.core.reports import (CSV_COLUMNS, emit_report, export_reports_to_excel, parse_report_csv,
                              render_scatter_svg, reports_to_csv_text, summarize)


@pytest.fixture
def reports():
    return [
        MetricReport(0, '1', 'ns', rmse=1e-4, procrustes_rmse=8e-5, rot_err_deg=0.01, trans_err=1e-4,
                     chamfer=5e-5, status='optimal', iters=0, wall_ms=120.5),
        MetricReport(1, '1', 'nsc', rmse=2e-3, status='high_rank', wall_ms=300.0),
        MetricReport(0, '5', 'trivial_repeated_sft', status='degenerate'),
    ]


def test_empty_report_is_header_only():
    assert reports_to_csv_text([]) == ','.join(CSV_COLUMNS) + '\n'


def test_one_line_per_report(reports):
    lines = reports_to_csv_text(reports).splitlines()
    assert len(lines) == 4
    assert lines[0].split(',') == CSV_COLUMNS
    assert lines[1].split(',')[-1] == ''
    assert reports_to_csv_text(reports, include_timing=True).splitlines()[1].split(',')[-1] == '120.5'


def test_emit_and_parse_back(reports, tmp_path):
    path = emit_report(reports, str(tmp_path / 'out' / 'bench.csv'), include_timing=True)
    parsed = parse_report_csv(path)
    assert len(parsed) == 3
    first = parsed[0]
    assert (first.seed, first.config_id, first.method, first.status) == (0, '1', 'ns', 'optimal')
    assert first.rmse == reports[0].rmse
    assert first.wall_ms == 120.5
    assert math.isnan(parsed[2].rmse)


def test_timing_is_empty_without_the_flag(reports, tmp_path):
    parsed = parse_report_csv(emit_report(reports, str(tmp_path / 'bench.csv')))
    assert all(math.isnan(r.wall_ms) for r in parsed)


def test_parse_rejects_bad_files(tmp_path):
    bad_header = tmp_path / 'header.csv'
    bad_header.write_text('seed,method\n0,ns\n')
    with pytest.raises(ParseError):
        parse_report_csv(str(bad_header))

    bad_value = tmp_path / 'value.csv'
    bad_value.write_text(','.join(CSV_COLUMNS) + '\nzero,1,ns,,,,,,optimal,0,\n')
    with pytest.raises(ParseError) as info:
        parse_report_csv(str(bad_value))
    assert info.value.line == 2 and info.value.field == 'seed'

    with pytest.raises(ReportIoError):
        parse_report_csv(str(tmp_path / 'missing.csv'))


def test_emit_reports_unwritable_path(reports, tmp_path):
    blocker = tmp_path / 'file'
    blocker.write_text('')
    with pytest.raises(ReportIoError):
        emit_report(reports, str(blocker / 'bench.csv'))


def test_scatter_svg(reports, tmp_path):
    path = render_scatter_svg(reports, str(tmp_path / 'bench.svg'))
    assert '<svg' in open(path).read()
    empty = render_scatter_svg([], str(tmp_path / 'empty.svg'))
    assert '<svg' in open(empty).read()


def test_excel_export(reports, tmp_path):
    path = export_reports_to_excel(reports, str(tmp_path / 'bench.xlsx'))
    ws = load_workbook(path).active
    assert ws.title == 'Resultados'
    assert [c.value for c in ws[1]] == CSV_COLUMNS
    assert ws['A1'].font.bold
    assert ws.max_row == 4
    assert ws['C2'].value == 'ns'
    assert ws['D4'].value is None


def test_summarize(reports):
    summary = summarize(reports + [MetricReport(2, '1', 'ns', rmse=3e-4)])
    assert [(s['config_id'], s['method']) for s in summary] == [('1', 'ns'), ('1', 'nsc'), ('5', 'trivial_repeated_sft')]
    ns = summary[0]
    assert ns['count'] == 2 and ns['failures'] == 0
    assert ns['mean_rmse'] == pytest.approx(2e-4)
    assert summary[2]['failures'] == 1 and math.isnan(summary[2]['mean_rmse'])
