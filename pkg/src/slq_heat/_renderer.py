"""HTML rendering of experiment reports, inline in a notebook or to a file."""

from __future__ import annotations

import html
import logging
import os
import webbrowser
from importlib.resources import files

from slq_heat._constants import CSV_HEADER
from slq_heat._runner import Report
from slq_heat._types import ReportRow

logger = logging.getLogger("slq_heat")


def format_cell(value: object) -> str:
    """CSV/HTML text of one cell: round-trippable floats, empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _render_row(row: ReportRow) -> str:
    cells = []
    for column in CSV_HEADER:
        value = row[column]  # type: ignore[literal-required]
        css = ""
        if column == "metric":
            css = ' class="metric"'
        elif column == "passed" and value is not None:
            css = ' class="pass"' if value else ' class="fail"'
        cells.append(f"<td{css}>{html.escape(format_cell(value))}</td>")
    return "<tr>" + "".join(cells) + "</tr>"


def _build_html_string(report: Report, title: str) -> str:
    """Fill the packaged HTML template with the report rows."""
    template_path = files("slq_heat").joinpath("report_template.html")
    template_content = template_path.read_text(encoding="utf-8")

    header = "".join(f"<th>{html.escape(column)}</th>" for column in CSV_HEADER)
    body = "\n".join(_render_row(row) for row in report.rows())
    verdict = "passed" if report.passed else "failed"
    replacements = {
        "{{ TITLE }}": html.escape(title),
        "{{ VERDICT }}": verdict,
        "{{ VERDICT_CLASS }}": "pass" if report.passed else "fail",
        "{{ HEADER }}": header,
        "{{ ROWS }}": body,
    }
    for marker, text in replacements.items():
        template_content = template_content.replace(marker, text)
    return template_content


def render_report(
    report: Report,
    notebook: bool = True,
    output_file: str = "slqheat_report.html",
    title: str = "slq-heat report",
    open_browser: bool = False,
) -> str:
    """
    Render a rate, gradient-descent or cross-check report as an HTML table.

    Args:
        report: Any report returned by an experiment driver.
        notebook: If True (default), displays the table inline in a notebook.
            If False, writes it to ``output_file``.
        output_file: Target HTML file (used only when notebook=False).
        title: Heading shown above the table.
        open_browser: If True, opens the written file in a browser
            when notebook=False.

    Returns:
        The rendered HTML document.
    """
    html_content = _build_html_string(report, title)

    if notebook:
        logger.info("Rendering inline (notebook mode)...")
        try:
            from IPython.display import HTML, display

            display(HTML(html_content))
        except ImportError:
            logger.error("IPython is not installed. Cannot display inline.")
    else:
        logger.info("Writing report to %s...", output_file)
        with open(output_file, "w", encoding="utf-8") as f:
            f.write(html_content)

        path = os.path.abspath(output_file)
        logger.info("Done! File saved to: %s", path)
        if open_browser:
            webbrowser.open("file://" + path)

    return html_content
