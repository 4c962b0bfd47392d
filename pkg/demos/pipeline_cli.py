"""Driving the whole chain through the ``rlforge`` command.

Equivalent shell session::

    rlforge simulate --config configs/three_pedestrians.yaml --out /tmp/rl
    rlforge process  --config configs/three_pedestrians.yaml --out /tmp/rl
    rlforge fuse     --config configs/three_pedestrians.yaml --out /tmp/rl
    rlforge evaluate --config configs/three_pedestrians.yaml --out /tmp/rl
    rlforge report   --config configs/three_pedestrians.yaml --out /tmp/rl

This script runs a shortened campaign (20 s) so it finishes in seconds.
"""
import sys
import tempfile
from pathlib import Path

import yaml

from rlforge.cli import main

config = Path(__file__).resolve().parents[1] / "configs" / "three_pedestrians.yaml"
with tempfile.TemporaryDirectory() as tmp:
    d = yaml.safe_load(config.read_text())
    d["scene"]["duration"] = 20.0
    short = Path(tmp) / "short.yaml"
    short.write_text(yaml.safe_dump(d))
    for stage in ("simulate", "process", "fuse", "evaluate", "report"):
        code = main([stage, "--config", str(short), "--out", str(Path(tmp) / "run")])
        if code:
            sys.exit(code)
    tree = sorted(p.relative_to(Path(tmp) / "run").parts[0:2] for p in (Path(tmp) / "run").rglob("*.*"))
    print("output folders:", sorted({"/".join(t[:-1]) or "." for t in tree}))
