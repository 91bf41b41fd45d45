#!/usr/bin/env python3
"""
Metrics Command - per-team, per-center macro-F1 and Expected Cost from prediction files
"""

import logging
import os

import pandas as pd

from fedsurg.datagen import load_predictions
from fedsurg.errors import ValidationError
from fedsurg.metrics import LabelSpace, evaluate_predictions
from fedsurg.utils.file_utils import write_csv
from fedsurg.utils.theme import banner, metrics_table
from fedsurg.utils.validators import check_readable_file, check_writable_dir, require

logger = logging.getLogger(__name__)


class MetricsCommand:
    """metrics: metrics.csv with team, center, n, f1, ec"""

    name = "metrics"
    help = "compute macro-F1 and Expected Cost from prediction files"

    def __init__(self, app):
        self.app = app

    def add_arguments(self, parser):
        parser.add_argument("inputs", nargs="+", help="prediction CSV files")
        self.app.add_common_arguments(parser)
        parser.add_argument("--f1-absent-convention", choices=["zero", "exclude-absent"],
                            help="F1 of classes absent from truths and predictions")

    def run(self, args) -> None:
        cfg = self.app.load_config(args)
        out_dir = args.out or cfg.output_dir
        require(check_writable_dir(out_dir))
        for path in args.inputs:
            require(check_readable_file(path, "predictions file"))

        labels = LabelSpace(cfg.generator.num_classes)
        predictions = load_predictions(args.inputs, labels.num_classes)
        if not predictions:
            raise ValidationError("prediction files contain no rows")

        records = []
        for team, per_center in predictions.items():
            for center, group in per_center.items():
                if len(group) == 0:
                    raise ValidationError(f"team {team} has an empty prediction group for {center}")
                report = evaluate_predictions(group.truths, group.preds, labels, cfg.challenge.absent_convention)
                records.append({"team": team, "center": center, "n": len(group),
                                "f1": report.f1_macro, "ec": report.expected_cost})
        frame = pd.DataFrame.from_records(records, columns=["team", "center", "n", "f1", "ec"])
        write_csv(frame, os.path.join(out_dir, "metrics.csv"))

        self.app.emit(banner("Metrics"))
        self.app.emit(metrics_table(frame))
