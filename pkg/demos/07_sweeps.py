# Config-driven sweeps
#
# The same machinery the dforge command uses, driven from Python: a JSON
# config names the data, teacher, student and distillation settings, a seed
# list and sweep axes. Every (cell, seed) pair gets its own directory with
# metrics.csv, metrics.jsonl, student.dfnt and summary.json.
#
# Equivalent shell:
#   dforge sweep --config cfg.json --out runs --seeds 0,1,2
#   dforge summarize runs
#
# Run: python3 demos/07_sweeps.py

import json
import tempfile
from pathlib import Path

from dforge import experiment

config = {
    "schema": "dforge/experiment-v1",
    "name": "demo",
    "dataset": {"kind": "blobs", "classes": 4, "n_per_class": 100, "input_dim": 3, "modes_per_class": 2},
    "teacher": {"hidden": [64, 16], "feature_dim": 16, "pool": 4, "epochs": 15},
    "student": {"hidden": [8], "feature_dim": 8},
    "distill": {"epochs": 10, "decay_epochs": [6]},
    "seeds": [0, 1, 2],
    "sweep": {"q": [1, 3]},
    "cells": [{"mode": "student-only"}],
}

root = Path(tempfile.mkdtemp())
(root / "cfg.json").write_text(json.dumps(config, indent=2))
cfg = experiment.load_config(root / "cfg.json")
print("cells:", [cid for cid, _ in cfg.expand()])

code = experiment.run(cfg, root / "runs")
table, absent = experiment.summarize([root / "runs"])
print(table)
print("exit code", code, "absent", absent)

# Shipped recipes load by name.
print("recipes:", ", ".join(experiment.recipe_names()))
