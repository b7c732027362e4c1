# %% [markdown]
# Repeated-seed comparison through the benchmark runner, then the same plan
# from the command line.

# %%
import json
import subprocess
import sys
import tempfile
from pathlib import Path

from tabsurv.dataset import GBSG2_SCHEMA, gbsg2_path
from tabsurv.experiment import ExperimentPlan, run_experiment, table_rows

small = dict(n_layers=1, hidden=32, emb_bins=8, emb_width=4, max_epochs=40, patience=8)
plan = ExperimentPlan(
    dataset={"csv": str(gbsg2_path()), "schema": GBSG2_SCHEMA},
    models={"LS": small, "LAS": {**small, "head": "LAS", "n_members": 4, "dropout": 0.1},
            "WSA": {**small, "head": "WSA", "n_members": 4}},
    n_runs=3,
)
report = run_experiment(plan)
for row in table_rows(report):
    print(row["model"], round(row["cindex_mean"], 4), round(row["ibs_mean"], 4), row["cindex_rank"])

# %%
out = Path(tempfile.mkdtemp())
(out / "plan.json").write_text(json.dumps({"dataset": plan.dataset, "models": plan.models, "n_runs": 2}))
subprocess.run([sys.executable, "-m", "tabsurv.cli", "benchmark", "--plan", str(out / "plan.json"),
                "--out", str(out / "run")], check=True)
print((out / "run" / "results.csv").read_text())
