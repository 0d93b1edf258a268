import json
from pathlib import Path

import pytest

from src import app

DESK = Path(__file__).resolve().parents[1] / "configs" / "desk.json"


@pytest.mark.slow
def test_desk_run_separates_synthetic_falls(tmp_path):
    corpus, run_dir, report = tmp_path / "synth", tmp_path / "run", tmp_path / "eval.json"
    assert app.run(["synth", "--out", str(corpus), "--seed", "0"]) == 0
    assert app.run(["train", "--config", str(DESK), "--data-dir", str(corpus), "--out", str(run_dir)]) == 0

    history = [json.loads(line) for line in (run_dir / "history.jsonl").read_text().splitlines()]
    assert len(history) == 30
    assert history[-1]["loss"] < history[0]["loss"]

    argv = ["eval", "--checkpoint", str(run_dir / "best.ckpt"), "--data-dir", str(corpus), "--out", str(report)]
    assert app.run(argv) == 0
    metrics = json.loads(report.read_text())["report"]["metrics"]
    assert metrics["accuracy"] >= 0.95
    assert metrics["auc"] >= 0.99
