#!/usr/bin/env python3
"""Smoke test for the realsim_py extension module.

Builds the cdylib with cargo, loads it, and checks a handful of known values.
Run from the repository root (or anywhere): python python/smoke_test.py
"""

import json
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def build_and_import():
    subprocess.run(
        ["cargo", "build", "-p", "realsim-py"], cwd=REPO, check=True
    )
    built = REPO / "target" / "debug" / "librealsim_py.so"
    stage = Path(tempfile.mkdtemp(prefix="realsim_py_"))
    shutil.copy(built, stage / "realsim_py.so")
    sys.path.insert(0, str(stage))
    import realsim_py

    return realsim_py


def approx(a, b, tol=1e-9):
    assert math.isclose(a, b, abs_tol=tol), f"{a} != {b} (tol {tol})"


def main():
    rs = build_and_import()

    # Text metrics.
    assert rs.tokenize_words("The cat sat.") == ["The", "cat", "sat"]
    assert rs.count_syllables("syllable") == 3
    assert len(rs.split_sentences("One. Two? Three!")) == 3
    approx(rs.flesch_kincaid_grade("The cat sat on the mat."), -1.45, tol=0.01)
    assert rs.mtld(["a"]) is None  # undefined on an all-unique sequence
    assert rs.mtld(["a", "b", "a", "a", "b", "a", "a", "b"]) > 0

    # Distribution comparison.
    approx(rs.tvd([1, 0], [0, 1]), 1.0)
    approx(rs.tvd([1, 1], [1, 1]), 0.0)
    approx(rs.wasserstein1([7, 7], [5, 9]), 2.0)
    approx(rs.pearson([1.0, 2.0, 3.0], [2.0, 4.0, 6.0]), 1.0)
    v = 1.0 / math.sqrt(2.0)
    approx(rs.knowledge_similarity([[1.0, 0.0]], [[v, v]], "centroid_cosine"), v)

    # Annotation parsers.
    tags = rs.parse_intent_tags(
        "USER TURN 1: #system_management, #method_guidance\nUSER TURN 2: N/A", 2
    )
    assert tags == [["system_management", "method_guidance"], []]
    fb = rs.parse_feedback_tags("USER TURN 1: #negative_feedback", 1)
    assert fb == [["explicit_negative"]]
    knows, gaps = rs.parse_knowledge(
        "- the user knows that trains exist\n- the user does not know the fare"
    )
    assert len(knows) == 1 and len(gaps) == 1

    # Corpus loading and domain registry.
    assert len(rs.domains()) == 16
    fixture = REPO / "crates" / "core" / "tests" / "fixtures" / "real.jsonl"
    loaded = rs.load_dialogues(str(fixture))
    assert len(loaded["dialogues"]) == 4
    assert loaded["rejections"] == []

    # End-to-end pipeline against the built-in mock endpoints.
    work = Path(tempfile.mkdtemp(prefix="realsim_smoke_"))
    config = work / "run.toml"
    config.write_text(
        f"""
seed = 42

[paths]
real_dialogues = "{fixture}"
work_dir = "{work / 'work'}"

[cache]
dir = "{work / 'cache'}"

[endpoints.chat]
base_url = "mock:"
model = "mock-chat"

[endpoints.embed]
base_url = "mock:"
model = "mock-embed"

[endpoints.emotion]
base_url = "mock:"

[endpoints.grammar]
base_url = "mock:"

[annotation]
model = "mock-annotator"

[simulation]
assistant_model = "mock-assistant"

[[simulators]]
id = "simA"
persona_mode = "informed"
model = "mock-user-a"
"""
    )
    manifest = rs.run_pipeline(str(config))
    assert all(stage["failed"] == 0 for stage in manifest["stages"].values()), manifest
    report = work / "work" / "report"
    assert (report / "table1.csv").exists()
    assert (report / "manifest.json").exists()
    files = json.loads((report / "manifest.json").read_text())["files"]
    assert files, "report manifest lists no files"

    print("smoke test: all checks passed")


if __name__ == "__main__":
    main()
