"""
Large command output and timeouts
=================================

Shell output that would swamp a model's context is written to a spill file.
The agent sees a pointer, the size, and short excerpts from both ends.
"""

import tempfile
from pathlib import Path

from teamflow import SpillPolicy, render_outcome, shell_execute

work = Path(tempfile.mkdtemp(prefix="teamflow-spill-"))
policy = SpillPolicy(work / "spill", threshold_tokens=50_000, excerpt_bytes=200)

# %%
# Small output comes back inline.
print(render_outcome(shell_execute(work, "echo hello; echo oops >&2; exit 3", policy, call_id="small")))

# %%
# 200,000 bytes is exactly 50,000 estimated tokens: still inline.
# Four more bytes tip it over and the output moves to disk.
for n in (200_000, 200_004):
    out = shell_execute(work, f"seq 1 100000 | tr -d '\\n' | head -c {n}", policy, call_id=f"big-{n}")
    print(n, "spilled" if out.spilled else "inline", out.spill_path or "")

# %%
# What the agent actually receives for the spilled call.
print(render_outcome(out))

# %%
# The full output stays available to ordinary shell tools.
print(shell_execute(work, f"wc -c {out.spill_path}", policy, call_id="wc").output)

# %%
# A command that outlives its limit is killed; partial output is kept.
slow = shell_execute(work, "echo starting; sleep 10; echo never printed", policy, timeout_s=1, call_id="slow")
print(render_outcome(slow))
