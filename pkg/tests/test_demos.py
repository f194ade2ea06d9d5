import os
import subprocess
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
DEMOS = sorted((ROOT / "demos").glob("0*.py"))


@pytest.mark.parametrize("script", DEMOS, ids=lambda p: p.name)
def test_demo_runs(script):
    env = dict(os.environ)
    env["PYTHONPATH"] = str(ROOT / "src") + os.pathsep + env.get("PYTHONPATH", "")
    args = [sys.executable, str(script)]
    if script.name.startswith("06"):
        args += ["30", "60"]  # keep the benchmark demo cheap under pytest
    proc = subprocess.run(
        args, capture_output=True, text=True, timeout=180, env=env, cwd=ROOT
    )
    assert proc.returncode == 0, proc.stderr[-2000:]
    assert proc.stdout.strip()


def test_delivery_cli_round_trip(tmp_path):
    env = dict(os.environ)
    env["PYTHONPATH"] = str(ROOT / "src") + os.pathsep + env.get("PYTHONPATH", "")
    weights = tmp_path / "plan.csv"
    proc = subprocess.run(
        [
            sys.executable, "-m", "lpcq", "solve",
            str(ROOT / "demos/delivery/delivery.lpcq"),
            str(ROOT / "demos/delivery/data"),
            "--mode", "factorized",
            "--decomp", str(ROOT / "demos/delivery/decomp.json"),
            "--weights", str(weights),
        ],
        capture_output=True, text=True, timeout=120, env=env,
    )
    assert proc.returncode == 0, proc.stderr[-2000:]
    assert "value: 33" in proc.stdout
    assert weights.exists() and weights.read_text().strip()
