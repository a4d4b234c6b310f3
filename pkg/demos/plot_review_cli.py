"""
Reviewing a pull request from the command line
==============================================

Agents review through ``pr-review``, a compact interface over the local forge.
Here we play both sides by hand: an engineer opens a PR, a reviewer asks for
changes inline, the engineer answers, and the reviewer approves.
"""

import os
import subprocess
import sys
import tempfile
from pathlib import Path

from teamflow import init_forge

here = Path(__file__).resolve().parent
work = Path(tempfile.mkdtemp(prefix="teamflow-review-"))
repo = work / "calc"
subprocess.run(["cp", "-r", str(here / "toy_repo"), str(repo)], check=True)
for args in (["init", "-q", "-b", "main"], ["add", "-A"],
             ["-c", "user.name=demo", "-c", "user.email=demo@example.com", "commit", "-qm", "initial"]):
    subprocess.run(["git", *args], cwd=repo, check=True)


def cli(actor, *args):
    """Run a forge command as ``actor`` and show what it printed."""
    env = dict(os.environ, TEAMFLOW_TASK_DIR=str(work / "task"), TEAMFLOW_ACTOR=actor)
    proc = subprocess.run([sys.executable, "-m", "teamflow.cli", *args], env=env, capture_output=True, text=True)
    print(f"$ {' '.join(args[:4])}  [{actor}, exit {proc.returncode}]")
    print(proc.stdout + proc.stderr)


# %%
# Fork the repository and push a fix branch.
forge = init_forge(repo, "CALC-1", work / "task" / "forge")
clone = work / "engineer"
subprocess.run(["git", "clone", "-q", "--branch", "task/CALC-1", str(forge.bare), str(clone)], check=True)
(clone / "calc.py").write_text((clone / "calc.py").read_text().replace("a - b", "a + b"))
subprocess.run(["git", "-c", "user.name=engineer", "-c", "user.email=e@x", "commit", "-qam", "Fix add"], cwd=clone, check=True)
subprocess.run(["git", "push", "-q", "origin", "HEAD:refs/heads/fix/CALC-1"], cwd=clone, check=True)

cli("engineer", "forge", "pr", "create", "--title", "CALC-1: fix add", "--head", "fix/CALC-1")

# %%
# The author may not approve their own work.
cli("engineer", "pr-review", "submit", "1", "--verdict", "approve", "--body", "looks fine to me")

# %%
# The reviewer requests changes with an inline comment.
cli("reviewer", "pr-review", "submit", "1", "--verdict", "request-changes", "--body", "one more test",
    "--inline", "calc.py:2", "Cover negative numbers too.")
cli("reviewer", "pr-review", "view", "1")

# %%
# The engineer replies and resolves; the thread view shrinks to what is open.
cli("engineer", "pr-review", "reply", "T1", "Added test for add(-2, -3).")
cli("engineer", "pr-review", "resolve", "T1")
cli("engineer", "pr-review", "view", "1", "--unresolved")
cli("engineer", "pr-review", "view", "1")

# %%
# Approval is the acceptance signal.
cli("reviewer", "pr-review", "submit", "1", "--verdict", "approve", "--body", "LGTM")
print(forge.pr_state(1))
