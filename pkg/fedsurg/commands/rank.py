#!/usr/bin/env python3
"""
Rank Command - leaderboard from a metric table, plus bootstrap analysis from prediction files
"""

import logging
import os

import pandas as pd

from fedsurg.datagen import load_metric_table, load_predictions
from fedsurg.errors import ValidationError
from fedsurg.ranking import (
    bootstrap_ranking,
    leaderboard_from_table,
    metric_table_from_predictions,
    plotdata_frame,
    rankfreq_frame,
    summary_frame,
    winprob_frame,
    wilcoxon_frame,
)
from fedsurg.utils.file_utils import write_csv
from fedsurg.utils.task_runner import log_progress
from fedsurg.utils.theme import banner, leaderboard_table
from fedsurg.utils.validators import check_readable_file, check_writable_dir, require
from fedsurg.utils.workbook import write_report

logger = logging.getLogger(__name__)


def detect_input_kind(path: str) -> str:
    """'metrics' for a team,task,center,metric,value table, else 'predictions'"""
    try:
        header = pd.read_csv(path, nrows=0)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ValidationError(f"cannot read {path}: {e}") from e
    columns = {c.strip().lower() for c in header.columns}
    return "metrics" if {"metric", "value"} <= columns else "predictions"


class RankCommand:
    """rank: leaderboard.csv, and with predictions the bootstrap/Wilcoxon tables"""

    name = "rank"
    help = "rank teams from a metric table or prediction files"

    def __init__(self, app):
        self.app = app

    def add_arguments(self, parser):
        parser.add_argument("inputs", nargs="+", help="metric table CSV, or one or more prediction CSVs")
        self.app.add_common_arguments(parser)
        parser.add_argument("--bootstrap-iters", type=int, help="bootstrap iterations (default 10000)")
        parser.add_argument("--wilcoxon-mode", choices=["auto", "exact", "normal_approx"],
                            help="Wilcoxon p-value computation")
        parser.add_argument("--f1-absent-convention", choices=["zero", "exclude-absent"],
                            help="F1 of classes absent from truths and predictions")
        parser.add_argument("--task2-resampling", choices=["stratified", "pooled"],
                            help="resample task 2 cases per center or pooled")
        parser.add_argument("--holdout-center", help="center forming task 1 in prediction files")
        parser.add_argument("--workers", type=int, help="bootstrap threads")
        parser.add_argument("--xlsx", action="store_true", default=None, help="also write report.xlsx")

    def run(self, args) -> None:
        cfg = self.app.load_config(args)
        out_dir = args.out or cfg.output_dir
        require(check_writable_dir(out_dir))
        for path in args.inputs:
            require(check_readable_file(path, "input file"))

        kinds = {detect_input_kind(p) for p in args.inputs}
        if kinds == {"metrics"}:
            if len(args.inputs) != 1:
                raise ValidationError("rank takes a single metric table")
            table = load_metric_table(args.inputs[0])
            predictions = None
        elif kinds == {"predictions"}:
            predictions = load_predictions(args.inputs, cfg.generator.num_classes)
            if not predictions:
                raise ValidationError("prediction files contain no rows")
            table = metric_table_from_predictions(predictions, cfg.challenge.holdout_center,
                                                  cfg.generator.num_classes, cfg.challenge.absent_convention)
        else:
            raise ValidationError("cannot mix metric tables and prediction files")

        leaderboard = leaderboard_from_table(table)
        sheets = {"leaderboard": leaderboard.to_frame()}
        write_csv(sheets["leaderboard"], os.path.join(out_dir, "leaderboard.csv"))
        self.app.emit(banner("Leaderboard"))
        self.app.emit(leaderboard_table(leaderboard))

        if predictions is not None:
            report = bootstrap_ranking(predictions, cfg.challenge.holdout_center, cfg.bootstrap,
                                       progress_callback=log_progress("bootstrap"))
            sheets.update({
                "bootstrap_rankfreq": rankfreq_frame(report),
                "winprob": winprob_frame(report),
                "wilcoxon": wilcoxon_frame(report),
                "rankstability_plotdata": plotdata_frame(report),
                "bootstrap_summary": summary_frame(report),
            })
            for name in ("bootstrap_rankfreq", "winprob", "wilcoxon", "rankstability_plotdata", "bootstrap_summary"):
                write_csv(sheets[name], os.path.join(out_dir, f"{name}.csv"))
            final = report.scope("final") if "final" in report.scopes else report.results[-1]
            self.app.emit(banner(f"Bootstrap rank stability ({final.scope}, B={final.iterations})"))
            for t, team in enumerate(final.teams):
                self.app.emit(
                    f"  {team}: median rank {final.median_rank[t]:g}, "
                    f"CI [{final.ci_low[t]:g}, {final.ci_high[t]:g}], kept rank {100 * final.retention[t]:.1f}%"
                )

        if cfg.xlsx:
            write_report(os.path.join(out_dir, "report.xlsx"), sheets)
        self.app.emit(f"Ranking written to {out_dir}")
