"""Bounded per-agent conversations and automatic summarization.

Every agent owns a :class:`Conversation` whose first message is its objective
prompt. When the estimated size grows past the policy budget, everything
between the objective prompt and the most recent ``retain_recent`` messages
(including an earlier summary, if any) is folded into one summary message
produced by a single model call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from .errors import SummarizerError

AUTHORS = ("system", "agent", "tool", "summary")

DEFAULT_SUMMARY_PROMPT = """\
Summarize the earlier part of this agent's working session so the work can
continue without it. Write exactly three labeled sections:

Decisions: choices made so far and why.
Artifacts: every issue and pull request number (e.g. #3, PR #4), branch name,
and file path that was created, modified, or referenced.
Plan status: what is done, what is in progress, and the next concrete steps.

Transcript to summarize:
{transcript}
"""


def estimate_tokens(text: str | bytes) -> int:
    """Token estimate used for every budget in the runtime: ceil(bytes / 4)."""
    if isinstance(text, str):
        text = text.encode("utf-8")
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class ToolCall:
    call_id: str
    tool: str
    args: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"call_id": self.call_id, "tool": self.tool, "args": dict(self.args)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ToolCall":
        return cls(data["call_id"], data["tool"], dict(data.get("args") or {}))


@dataclass(frozen=True)
class Message:
    author: str
    content: str
    tool_calls: tuple[ToolCall, ...] = ()
    tool_call_ref: str | None = None
    size_estimate: int = -1

    def __post_init__(self):
        if self.author not in AUTHORS:
            raise ValueError(f"unknown message author {self.author!r}")
        if self.author == "summary" and self.tool_calls:
            raise ValueError("summary messages cannot carry tool calls")
        if self.author == "tool" and not self.tool_call_ref:
            raise ValueError("tool messages must reference a call id")
        if self.size_estimate < 0:
            object.__setattr__(self, "size_estimate", estimate_tokens(self.content))

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"author": self.author, "content": self.content}
        if self.tool_calls:
            data["tool_calls"] = [c.to_dict() for c in self.tool_calls]
        if self.tool_call_ref:
            data["tool_call_ref"] = self.tool_call_ref
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Message":
        calls = tuple(ToolCall.from_dict(c) for c in data.get("tool_calls") or ())
        return cls(data["author"], data["content"], calls, data.get("tool_call_ref"))


@dataclass
class Conversation:
    messages: list[Message] = field(default_factory=list)
    compaction_count: int = 0

    @classmethod
    def start(cls, objective_prompt: str) -> "Conversation":
        return cls([Message("system", objective_prompt)])

    @property
    def total_estimate(self) -> int:
        return sum(m.size_estimate for m in self.messages)

    @property
    def summary(self) -> Message | None:
        if len(self.messages) > 1 and self.messages[1].author == "summary":
            return self.messages[1]
        return None

    def __len__(self) -> int:
        return len(self.messages)

    def pending_calls(self) -> list[ToolCall]:
        """Tool calls that have no matching tool result yet."""
        answered = {m.tool_call_ref for m in self.messages if m.author == "tool"}
        return [c for m in self.messages for c in m.tool_calls if c.call_id not in answered]


@dataclass(frozen=True)
class CompactionPolicy:
    trigger_budget: int = 150_000
    retain_recent: int = 10
    summary_prompt: str = DEFAULT_SUMMARY_PROMPT

    def __post_init__(self):
        if self.trigger_budget <= 0:
            raise ValueError("trigger_budget must be positive")
        if self.retain_recent < 1:
            raise ValueError("retain_recent must be at least 1")


def append_message(conv: Conversation, msg: Message) -> Conversation:
    if msg.author == "tool":
        known = {c.call_id for m in conv.messages for c in m.tool_calls}
        if msg.tool_call_ref not in known:
            raise ValueError(f"tool result references unknown call {msg.tool_call_ref!r}")
    conv.messages.append(msg)
    return conv


def needs_compaction(conv: Conversation, policy: CompactionPolicy) -> bool:
    return conv.total_estimate > policy.trigger_budget and len(conv) > policy.retain_recent + 1


def render_transcript(messages: Iterable[Message]) -> str:
    lines = []
    for m in messages:
        head = f"[{m.author}]"
        if m.tool_call_ref:
            head += f" (result of {m.tool_call_ref})"
        lines.append(f"{head} {m.content}".rstrip())
        for call in m.tool_calls:
            lines.append(f"  -> {call.tool}({call.call_id}) {call.args}")
    return "\n".join(lines)


def compact(
    conv: Conversation,
    policy: CompactionPolicy,
    summarizer: Callable[[str], str],
) -> Conversation:
    """Return a new conversation with the middle region replaced by a summary.

    ``summarizer`` receives the fully rendered summary prompt and returns the
    summary text; it is called exactly once. On failure the input conversation
    is left untouched and :class:`SummarizerError` is raised.
    """
    if not needs_compaction(conv, policy):
        raise ValueError("compact called on a conversation within budget")
    cut = len(conv) - policy.retain_recent
    replaced = conv.messages[1:cut]
    prompt = policy.summary_prompt.replace("{transcript}", render_transcript(replaced))
    try:
        text = summarizer(prompt)
    except SummarizerError:
        raise
    except Exception as exc:
        raise SummarizerError(f"summarization failed: {exc}") from exc
    if not isinstance(text, str) or not text.strip():
        raise SummarizerError("summarizer returned an empty summary")
    summary = Message("summary", text)
    return Conversation(
        [conv.messages[0], summary, *conv.messages[cut:]],
        compaction_count=conv.compaction_count + 1,
    )
