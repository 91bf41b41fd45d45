import os
import sys

import hypothesis
import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

hypothesis.settings.register_profile("default", max_examples=100, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Published per-team values: task 1 on the held-out center, task 2 per training center (percent)
TABLE_ROWS = [
    ("Camma", 1, "4", "ec", 57.24), ("Camma", 1, "4", "f1", 4.76),
    ("Elbflorenz", 1, "4", "ec", 24.14), ("Elbflorenz", 1, "4", "f1", 7.83),
    ("Santhi", 1, "4", "ec", 12.41), ("Santhi", 1, "4", "f1", 23.03),
    ("Camma", 2, "1", "ec", 26.67), ("Camma", 2, "2", "ec", 17.78), ("Camma", 2, "3", "ec", 20.91),
    ("Camma", 2, "1", "f1", 3.70), ("Camma", 2, "2", "f1", 30.28), ("Camma", 2, "3", "f1", 22.76),
    ("Elbflorenz", 2, "1", "ec", 20.00), ("Elbflorenz", 2, "2", "ec", 22.22), ("Elbflorenz", 2, "3", "ec", 21.82),
    ("Elbflorenz", 2, "1", "f1", 10.00), ("Elbflorenz", 2, "2", "f1", 14.29), ("Elbflorenz", 2, "3", "f1", 15.14),
    ("Santhi", 2, "1", "ec", 22.22), ("Santhi", 2, "2", "ec", 17.78), ("Santhi", 2, "3", "ec", 21.32),
    ("Santhi", 2, "1", "f1", 17.14), ("Santhi", 2, "2", "f1", 13.33), ("Santhi", 2, "3", "f1", 15.73),
]


@pytest.fixture
def challenge_table_csv(tmp_path):
    path = tmp_path / "challenge_metrics.csv"
    lines = ["team,task,center,metric,value"] + [f"{t},{k},{c},{m},{v}" for t, k, c, m, v in TABLE_ROWS]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)
