"""
Keeping long conversations within budget
========================================

Once a conversation's estimated size passes the trigger budget, everything
between the objective prompt and the most recent messages is folded into one
summary message.
"""

from teamflow import CompactionPolicy, Conversation, Message, append_message, compact, needs_compaction
from teamflow.agent_core import echo_summary

conv = Conversation.start("You implement changes requested by the manager.")
notes = [
    "Ran the test suite: 1 failure in test_calc.py.",
    "Opened issue #1 describing the sign error.",
    "Pushed fix/CALC-1 and opened PR #1.",
    "Reviewer opened thread T1 on PR #1 asking for a negative-number test.",
]
for i in range(40):
    append_message(conv, Message("agent", notes[i % len(notes)] + " " + "." * 200))

policy = CompactionPolicy(trigger_budget=1_500, retain_recent=6)
print(len(conv), "messages,", conv.total_estimate, "estimated tokens")
print("needs compaction:", needs_compaction(conv, policy))

# %%
# Any callable from prompt to text can summarize. ``echo_summary`` is the
# deterministic stand-in used offline; it lists every artifact it saw.
compacted = compact(conv, policy, echo_summary)
print(len(compacted), "messages,", compacted.total_estimate, "estimated tokens")
print(compacted.messages[1].content)

# %%
# The objective and the recent tail are untouched.
assert compacted.messages[0] == conv.messages[0]
assert compacted.messages[-6:] == conv.messages[-6:]
print([m.author for m in compacted.messages])
