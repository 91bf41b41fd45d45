#!/usr/bin/env python3
"""
Simulate Command - federated training of every pipeline and evaluation on both tasks
Writes results.json, one predictions CSV per pipeline, metrics.csv and leaderboard.csv
"""

import logging
import os

import pandas as pd

from fedsurg.datagen import generate_multicenter
from fedsurg.fedsim import run_challenge
from fedsurg.ranking import leaderboard_from_table
from fedsurg.utils.file_utils import load_bundle, write_csv, write_json
from fedsurg.utils.task_runner import log_progress
from fedsurg.utils.theme import banner, leaderboard_table, simulation_table
from fedsurg.utils.validators import check_writable_dir, require
from fedsurg.utils.workbook import write_report

logger = logging.getLogger(__name__)


def metrics_frame(table) -> pd.DataFrame:
    """Long metric table -> one row per (team, task, center) with f1 and ec"""
    records = {}
    for (team, task, center, metric), value in sorted(table.values.items()):
        records.setdefault((team, task, center), {"team": team, "task": task, "center": center})[metric] = value
    return pd.DataFrame.from_records(list(records.values()), columns=["team", "task", "center", "f1", "ec"])


class SimulateCommand:
    """simulate: run the challenge on generated or bundled data"""

    name = "simulate"
    help = "run the federated challenge simulation"

    def __init__(self, app):
        self.app = app

    def add_arguments(self, parser):
        self.app.add_common_arguments(parser)
        parser.add_argument("--data", help="dataset bundle directory (overrides data.path)")
        parser.add_argument("--pipelines", help="comma-separated preset names to run")
        parser.add_argument("--workers", type=int, help="client training threads")
        parser.add_argument("--holdout-center", help="center excluded from training (task 1)")
        parser.add_argument("--f1-absent-convention", choices=["zero", "exclude-absent"],
                            help="F1 of classes absent from truths and predictions")
        parser.add_argument("--xlsx", action="store_true", default=None, help="also write report.xlsx")

    def run(self, args) -> None:
        cfg = self.app.load_config(args)
        out_dir = args.out or cfg.output_dir
        require(check_writable_dir(out_dir))

        if cfg.data_path:
            datasets, manifest = load_bundle(cfg.data_path)
            data_info = {"source": "bundle", "path": cfg.data_path, "generator": manifest.get("generator")}
        else:
            datasets = generate_multicenter(cfg.generator)
            data_info = {"source": "generator", "generator": cfg.generator.to_dict()}

        result = run_challenge(cfg.pipelines, datasets, cfg.challenge,
                               progress_callback=log_progress("simulate"))

        write_json({"config": cfg.to_dict(), "seed": cfg.seed, "data": data_info, "result": result.to_dict()},
                   os.path.join(out_dir, "results.json"))
        for res in result.pipelines:
            frame = pd.DataFrame.from_records(res.prediction_rows(),
                                              columns=["team", "case_id", "center", "true_label", "pred_label"])
            write_csv(frame, os.path.join(out_dir, f"predictions_{res.name}.csv"))
        table = result.metric_table()
        metrics = metrics_frame(table)
        write_csv(metrics, os.path.join(out_dir, "metrics.csv"))
        leaderboard = leaderboard_from_table(table)
        write_csv(leaderboard.to_frame(), os.path.join(out_dir, "leaderboard.csv"))

        if cfg.xlsx:
            write_report(os.path.join(out_dir, "report.xlsx"),
                         {"leaderboard": leaderboard.to_frame(), "metrics": metrics})

        self.app.emit(banner(f"Simulation results (holdout {result.holdout_center}, seed {cfg.seed})"))
        self.app.emit(simulation_table(result))
        self.app.emit(banner("Leaderboard"))
        self.app.emit(leaderboard_table(leaderboard))
        self.app.emit(f"Results written to {out_dir}")
