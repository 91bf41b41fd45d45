#!/usr/bin/env python3
"""
Generate Data Command - writes a synthetic multi-center dataset bundle
"""

import logging
import os

from fedsurg.datagen import generate_multicenter
from fedsurg.utils.file_utils import save_bundle
from fedsurg.utils.validators import check_writable_dir, require

logger = logging.getLogger(__name__)


class GenDataCommand:
    """gen-data: one CSV per center plus manifest.json"""

    name = "gen-data"
    help = "generate a synthetic multi-center dataset bundle"

    def __init__(self, app):
        self.app = app

    def add_arguments(self, parser):
        self.app.add_common_arguments(parser)

    def run(self, args) -> None:
        cfg = self.app.load_config(args)
        out_dir = args.out or os.path.join(cfg.output_dir, "data")
        require(check_writable_dir(out_dir))

        logger.info(f"Generating dataset (seed {cfg.generator.seed}) into {out_dir}")
        datasets = generate_multicenter(cfg.generator)
        save_bundle(datasets, cfg.generator, out_dir)

        self.app.emit(f"Dataset bundle written to {out_dir}")
        for dataset in datasets:
            self.app.emit(f"  {dataset.center_id}: {len(dataset.train)} train / {len(dataset.test)} test videos")
