"""
A full team run on a toy repository
===================================

A manager, a researcher, an engineer and a reviewer fix a one-line bug in a
tiny repository. Model replies come from a recorded fixture, so the run is
offline and deterministic; swap in ``LiveProvider`` to drive real models.
"""

import shutil
import subprocess
import tempfile
from pathlib import Path

from teamflow import ScriptedProvider, TaskSpec, run_task
from teamflow.agent_core import read_traces
from teamflow.cli import TeamConfig, format_trace_table

here = Path(__file__).resolve().parent
work = Path(tempfile.mkdtemp(prefix="teamflow-demo-"))

# %%
# The repository under repair: ``add`` subtracts, and its test says so.
repo = work / "calc"
shutil.copytree(here / "toy_repo", repo)
for args in (["init", "-q", "-b", "main"], ["add", "-A"],
             ["-c", "user.name=demo", "-c", "user.email=demo@example.com", "commit", "-qm", "initial"]):
    subprocess.run(["git", *args], cwd=repo, check=True)
print((repo / "calc.py").read_text())

# %%
# The team and its policies come from the same config the CLI reads.
config = TeamConfig.load(here / "team_scripted.toml")
print([f"{a.role}{' (coordinator)' if a.coordinator else ''}" for a in config.agents])

# %%
# Run until the manager calls ``finish`` and the forge confirms an approved PR.
spec = TaskSpec("CALC-1", str(repo), (here / "issue.md").read_text(), limits=config.limits)
task_dir = work / "task"
state = run_task(config.agents, spec, ScriptedProvider.from_file(here / "fixtures" / "happy_path.jsonl"),
                 task_dir, config.policies)
print(state.phase, "issue", state.issue_number, "pr", state.pr_number)

# %%
# Who did what: the forge keeps per-role attribution.
forge = state.forge
for issue in forge.issues():
    print(f"issue #{issue.number} by {issue.author}: {issue.title}")
for review in forge.reviews():
    print(f"review {review.id} by {review.reviewer}: {review.verdict}")
print(forge.list_threads(state.pr_number))

# %%
# The approved diff.
print(forge.get_diff(state.pr_number))

# %%
# Coordination happens only through the manager.
for event in state.event_log:
    if event.kind in ("agent_invoked", "phase_noted", "finished"):
        print(f"{event.seq:3d} {event.kind:<14} {event.actor} -> {event.target or ''} {event.detail[:60]}")

# %%
# Every provider call leaves one trace record.
print(format_trace_table(read_traces(task_dir / "trace.log")))

shutil.rmtree(work)
