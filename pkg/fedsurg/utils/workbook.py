#!/usr/bin/env python3
"""
Workbook Report - styled Excel copy of the result tables
One sheet per table, bold filled header row, thin borders and fitted column widths
"""

import logging
from typing import Mapping

import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter

logger = logging.getLogger(__name__)

HEADER_FILL = PatternFill(start_color="87CEEB", end_color="87CEEB", fill_type="solid")
HIGHLIGHT_FILL = PatternFill(start_color="FFFF00", end_color="FFFF00", fill_type="solid")
THIN = Side(style="thin")
BORDER = Border(left=THIN, right=THIN, top=THIN, bottom=THIN)

MAX_COLUMN_WIDTH = 40


def _write_sheet(ws, frame: pd.DataFrame, highlight_column: str = None) -> None:
    columns = list(frame.columns)
    for col_idx, header in enumerate(columns, start=1):
        cell = ws.cell(row=1, column=col_idx, value=header)
        cell.font = Font(bold=True)
        cell.fill = HEADER_FILL
        cell.border = BORDER
        cell.alignment = Alignment(horizontal="center", vertical="center")

    for row_idx, record in enumerate(frame.itertuples(index=False), start=2):
        for col_idx, value in enumerate(record, start=1):
            if isinstance(value, float) and value != value:
                value = None
            elif hasattr(value, "item"):
                value = value.item()
            cell = ws.cell(row=row_idx, column=col_idx, value=value)
            cell.border = BORDER
            if isinstance(value, float):
                cell.number_format = "0.0000"
            if highlight_column and columns[col_idx - 1] == highlight_column and value == 1:
                cell.fill = HIGHLIGHT_FILL

    for col_idx, header in enumerate(columns, start=1):
        width = max([len(str(header))] + [len(str(v)) for v in frame.iloc[:, col_idx - 1]])
        ws.column_dimensions[get_column_letter(col_idx)].width = min(MAX_COLUMN_WIDTH, width + 2)
    ws.freeze_panes = "A2"


def write_report(path: str, sheets: Mapping[str, pd.DataFrame]) -> str:
    """
    Save every table to one workbook

    Args:
        path: Target .xlsx path
        sheets: Sheet title -> table (titles are cut to Excel's 31 characters)

    Returns:
        The written path
    """
    wb = Workbook()
    wb.remove(wb.active)
    for title, frame in sheets.items():
        ws = wb.create_sheet(title=title[:31])
        _write_sheet(ws, frame, highlight_column="final_rank" if title == "leaderboard" else None)
    wb.save(path)
    logger.info(f"Wrote workbook {path} ({len(sheets)} sheets)")
    return path
