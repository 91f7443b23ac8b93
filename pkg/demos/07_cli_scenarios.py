"""
Running named scenarios
=======================

Every scenario is a TOML file.  ``roughflow list`` prints the catalog and
``roughflow run --config <file>`` writes ``results.csv``, ``summary.json``
and ``plots.svg``.  The same thing from Python:
"""

import json
import os
from pathlib import Path

from roughflow.experiments import load_config, run

here = Path(__file__).parent
out = Path(os.environ.get("ROUGHFLOW_DEMO_OUT", "demo_output")) / "scenarios"

for name in ("norms_zero", "kernel", "symplectic"):
    cfg = load_config(here / "configs" / f"{name}.toml")
    outcome = run(cfg, out / name)
    summary = json.loads((outcome.directory / "summary.json").read_text())
    print(f"{name}: exit {outcome.status}, checks {summary['checks']}")
