#!/usr/bin/env python3
"""
File Utilities - Helper functions for file I/O operations
Handles dataset bundles, result CSVs and JSON manifests
"""

import json
import logging
import os
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from fedsurg.datagen import CenterDataset, GeneratorConfig
from fedsurg.errors import ValidationError
from fedsurg.models import VideoInstance

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
BUNDLE_COLUMNS = ["case_id", "split", "label", "frame"]


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_csv(frame: pd.DataFrame, path: str) -> str:
    """Write without index and with '\\n' line endings so reruns are byte-identical"""
    ensure_dir(os.path.dirname(os.path.abspath(path)))
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.info(f"Wrote {path} ({len(frame)} rows)")
    return path


def write_json(data, path: str) -> str:
    ensure_dir(os.path.dirname(os.path.abspath(path)))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Wrote {path}")
    return path


def center_frame(dataset: CenterDataset) -> pd.DataFrame:
    """One row per frame: case_id, split, label, frame index, features"""
    blocks = []
    for split, videos in (("train", dataset.train), ("test", dataset.test)):
        for video in videos:
            n_frames, dim = video.frames.shape
            block = pd.DataFrame(video.frames, columns=[f"f{j}" for j in range(dim)])
            block.insert(0, "frame", np.arange(n_frames))
            block.insert(0, "label", video.label)
            block.insert(0, "split", split)
            block.insert(0, "case_id", video.case_id)
            blocks.append(block)
    return pd.concat(blocks, ignore_index=True)


def save_bundle(datasets: List[CenterDataset], cfg: GeneratorConfig, out_dir: str) -> List[str]:
    """
    Write one <center_id>.csv per center plus manifest.json

    Returns:
        Paths of the written files
    """
    ensure_dir(out_dir)
    written = []
    centers = []
    for dataset in datasets:
        path = os.path.join(out_dir, f"{dataset.center_id}.csv")
        written.append(write_csv(center_frame(dataset), path))
        centers.append({
            "center_id": dataset.center_id,
            "file": os.path.basename(path),
            "train": len(dataset.train),
            "test": len(dataset.test),
            "class_priors": list(dataset.class_priors),
        })
    manifest = {"generator": cfg.to_dict(), "seed": cfg.seed, "centers": centers}
    written.append(write_json(manifest, os.path.join(out_dir, MANIFEST_NAME)))
    return written


def _read_center(path: str, center_id: str, priors) -> CenterDataset:
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ValidationError(f"cannot read center file {path}: {e}") from e
    missing = [c for c in BUNDLE_COLUMNS if c not in frame.columns]
    feature_cols = [c for c in frame.columns if c.startswith("f") and c[1:].isdigit()]
    if missing or not feature_cols:
        raise ValidationError(f"{path}: expected columns {','.join(BUNDLE_COLUMNS)},f0..; missing {missing or ['f0']}")
    feature_cols.sort(key=lambda c: int(c[1:]))

    splits: Dict[str, List[VideoInstance]] = {"train": [], "test": []}
    for case_id, rows in frame.groupby("case_id", sort=False):
        rows = rows.sort_values("frame")
        split = str(rows["split"].iloc[0])
        if split not in splits:
            raise ValidationError(f"{path}: case {case_id} has unknown split '{split}'")
        labels = rows["label"].unique()
        if len(labels) != 1:
            raise ValidationError(f"{path}: case {case_id} has inconsistent labels {list(labels)}")
        splits[split].append(VideoInstance(frames=rows[feature_cols].to_numpy(dtype=np.float64),
                                           label=int(labels[0]), center_id=center_id, case_id=str(case_id)))
    return CenterDataset(center_id=center_id, train=tuple(splits["train"]), test=tuple(splits["test"]),
                         class_priors=tuple(priors))


def load_bundle(bundle_dir: str) -> Tuple[List[CenterDataset], dict]:
    """
    Read a bundle written by save_bundle

    Returns:
        Tuple (datasets in manifest order, manifest dict)
    """
    manifest_path = os.path.join(bundle_dir, MANIFEST_NAME)
    if not os.path.isfile(manifest_path):
        raise ValidationError(f"not a dataset bundle (no {MANIFEST_NAME}): {bundle_dir}")
    with open(manifest_path, "r", encoding="utf-8") as f:
        try:
            manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise ValidationError(f"{manifest_path}: invalid JSON: {e.msg}") from e
    datasets = []
    for entry in manifest.get("centers", []):
        path = os.path.join(bundle_dir, entry["file"])
        datasets.append(_read_center(path, entry["center_id"], entry["class_priors"]))
    if not datasets:
        raise ValidationError(f"{manifest_path}: bundle lists no centers")
    logger.info(f"Loaded bundle {bundle_dir}: {len(datasets)} centers")
    return datasets, manifest
