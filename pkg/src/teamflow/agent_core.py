"""Agents, model requests/responses, providers, and per-call tracing."""

from __future__ import annotations

import json
import os
import re
import time
import urllib.error
import urllib.request
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Protocol

from .context import Conversation, Message, ToolCall
from .errors import ConfigError, FixtureExhausted, ProviderError

REASONING_EFFORTS = ("low", "medium", "high")
COORDINATION_TOOLS = frozenset({"manage", "finish", "send_message"})
COORDINATOR_ONLY = frozenset({"manage", "finish"})


@dataclass(frozen=True)
class ModelConfig:
    model_name: str
    reasoning_effort: str = "medium"
    provider_endpoint: str = "default"

    def __post_init__(self):
        if not self.model_name:
            raise ConfigError("model_name must be non-empty")
        if self.reasoning_effort not in REASONING_EFFORTS:
            raise ConfigError(f"reasoning_effort must be one of {REASONING_EFFORTS}")


@dataclass(frozen=True)
class AgentSpec:
    role: str
    objective_prompt: str
    model: ModelConfig
    tool_names: frozenset[str] = frozenset()
    has_workspace: bool = True
    coordinator: bool = False

    def __post_init__(self):
        if not self.role or self.role != self.role.lower() or not re.fullmatch(r"[a-z][a-z0-9_-]*", self.role):
            raise ConfigError(f"role must be a short lowercase identifier, got {self.role!r}")
        object.__setattr__(self, "tool_names", frozenset(self.tool_names))
        if self.coordinator:
            missing = COORDINATION_TOOLS - self.tool_names
            if missing:
                raise ConfigError(f"coordinator {self.role!r} lacks tools {sorted(missing)}")
        elif self.tool_names & COORDINATOR_ONLY:
            raise ConfigError(
                f"{self.role!r} is not the coordinator and may not hold {sorted(self.tool_names & COORDINATOR_ONLY)}"
            )


def validate_team(team: Iterable[AgentSpec]) -> dict[str, AgentSpec]:
    """Index a team by role, enforcing unique roles and exactly one coordinator."""
    by_role: dict[str, AgentSpec] = {}
    for agent in team:
        if agent.role in by_role:
            raise ConfigError(f"duplicate role {agent.role!r}")
        by_role[agent.role] = agent
    coordinators = [a.role for a in by_role.values() if a.coordinator]
    if len(coordinators) != 1:
        raise ConfigError(f"team needs exactly one coordinator, found {len(coordinators)}")
    return by_role


@dataclass(frozen=True)
class ModelResponse:
    kind: str
    text: str | None = None
    calls: tuple[ToolCall, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "calls", tuple(self.calls))
        if self.kind == "tool_calls" and not self.calls:
            raise ValueError("tool_calls response needs at least one call")
        if self.kind == "text" and self.text is None:
            raise ValueError("text response needs text")
        if self.kind not in ("text", "tool_calls"):
            raise ValueError(f"unknown response kind {self.kind!r}")

    @classmethod
    def from_parts(cls, text: str | None, calls: Iterable[ToolCall]) -> "ModelResponse":
        # text alongside calls is kept but calls drive control flow
        calls = tuple(calls)
        if calls:
            return cls("tool_calls", text or None, calls)
        return cls("text", text or "")


@dataclass
class ModelRequest:
    role: str
    model: ModelConfig
    messages: list[Message]
    tools: list[dict[str, Any]] = field(default_factory=list)
    purpose: str = "turn"

    @property
    def tool_names(self) -> set[str]:
        return {t["function"]["name"] for t in self.tools}


class Provider(Protocol):
    def complete(self, request: ModelRequest) -> ModelResponse: ...


def build_request(agent: AgentSpec, conversation: Conversation, tool_catalog) -> ModelRequest:
    """Assemble the provider request for one agent turn.

    ``tool_catalog`` is any iterable of tool specs (objects with ``name`` and
    ``declaration()``), typically ``registry.specs()``.
    """
    msgs = conversation.messages
    if not msgs or msgs[0].author != "system" or msgs[0].content != agent.objective_prompt:
        raise ValueError(f"conversation for {agent.role!r} must start with its objective prompt")
    catalog = {spec.name: spec for spec in tool_catalog}
    unknown = sorted(agent.tool_names - catalog.keys())
    if unknown:
        raise ConfigError(f"agent {agent.role!r} references unknown tools {unknown}")
    tools = [catalog[name].declaration() for name in sorted(agent.tool_names)]
    return ModelRequest(agent.role, agent.model, list(msgs), tools)


# -- scripted provider -------------------------------------------------------

_ARTIFACT_RE = re.compile(r"(?:PR |pull request )?#\d+")


def echo_summary(prompt: str) -> str:
    """Deterministic stand-in summarizer: lists every artifact reference it sees."""
    refs = list(dict.fromkeys(_ARTIFACT_RE.findall(prompt.split("Transcript to summarize:", 1)[-1])))
    return (
        "Decisions: see artifacts.\n"
        f"Artifacts: {', '.join(refs) if refs else 'none'}\n"
        "Plan status: continue from the most recent messages."
    )


class ScriptQueue:
    """Per-role FIFO queues of scripted responses loaded from a fixture.

    Fixture records are JSON lines ``{"role", "kind", "text"?, "calls"?}``
    where ``calls`` is a list of ``{"tool", "args"}``. A record may also carry
    ``"purpose": "summary"``; those answer summarization requests for the role.
    """

    def __init__(self, records: Iterable[dict[str, Any]]):
        self.records = list(records)
        self._queues: dict[tuple[str, str], deque[int]] = {}
        for index, rec in enumerate(self.records):
            if "role" not in rec or "kind" not in rec:
                raise ConfigError(f"fixture record {index} needs 'role' and 'kind'")
            key = (rec["role"], rec.get("purpose", "turn"))
            self._queues.setdefault(key, deque()).append(index)
        self.consumed: list[int] = []

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ScriptQueue":
        records = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip() or line.lstrip().startswith("//"):
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"{path}:{lineno}: invalid fixture record: {exc}") from None
        return cls(records)

    def has(self, role: str, purpose: str = "turn") -> bool:
        return (role, purpose) in self._queues

    def remaining(self, role: str, purpose: str = "turn") -> int:
        return len(self._queues.get((role, purpose), ()))

    def pop(self, role: str, purpose: str = "turn") -> dict[str, Any]:
        queue = self._queues.get((role, purpose))
        if not queue:
            raise FixtureExhausted(role if purpose == "turn" else f"{role}:{purpose}")
        index = queue.popleft()
        self.consumed.append(index)
        return self.records[index]


def _response_from_record(rec: dict[str, Any]) -> ModelResponse:
    calls = [ToolCall("", c["tool"], dict(c.get("args") or {})) for c in rec.get("calls") or ()]
    if rec["kind"] == "tool_calls":
        return ModelResponse("tool_calls", rec.get("text"), calls)
    return ModelResponse.from_parts(rec.get("text", ""), calls)


def scripted_next(fixture_state: ScriptQueue, role: str) -> ModelResponse:
    return _response_from_record(fixture_state.pop(role))


class ScriptedProvider:
    """Replays a fixture; one queued response per request, routed by role."""

    def __init__(self, script: ScriptQueue):
        self.script = script

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "ScriptedProvider":
        return cls(ScriptQueue.load(path))

    def complete(self, request: ModelRequest) -> ModelResponse:
        if request.purpose == "summary":
            if self.script.has(request.role, "summary"):
                rec = self.script.pop(request.role, "summary")
                return ModelResponse("text", rec.get("text", ""))
            return ModelResponse("text", echo_summary(request.messages[-1].content))
        return scripted_next(self.script, request.role)


# -- live provider -----------------------------------------------------------


@dataclass(frozen=True)
class LiveProviderConfig:
    base_url: str
    api_key_env: str
    model_name: str = ""
    reasoning_effort: str = "medium"


class LiveProvider:
    """OpenAI-compatible chat-completions client with function declarations.

    Stateless apart from its configuration; safe to share between tasks.
    """

    def __init__(self, config: LiveProviderConfig, timeout_s: float = 600.0):
        self.config = config
        self.timeout_s = timeout_s

    def _payload(self, request: ModelRequest) -> dict[str, Any]:
        messages: list[dict[str, Any]] = []
        seen_calls: set[str] = set()
        for i, m in enumerate(request.messages):
            if m.author == "system":
                messages.append({"role": "system" if i == 0 else "user", "content": m.content})
            elif m.author == "summary":
                messages.append({"role": "user", "content": f"Summary of earlier work:\n{m.content}"})
            elif m.author == "agent":
                item: dict[str, Any] = {"role": "assistant", "content": m.content or None}
                if m.tool_calls:
                    item["tool_calls"] = [
                        {
                            "id": c.call_id,
                            "type": "function",
                            "function": {"name": c.tool, "arguments": json.dumps(c.args)},
                        }
                        for c in m.tool_calls
                    ]
                    seen_calls.update(c.call_id for c in m.tool_calls)
                messages.append(item)
            elif m.tool_call_ref in seen_calls:
                messages.append({"role": "tool", "tool_call_id": m.tool_call_ref, "content": m.content})
            else:
                # its call was folded into a summary
                messages.append({"role": "user", "content": f"[tool result {m.tool_call_ref}]\n{m.content}"})
        payload: dict[str, Any] = {
            "model": request.model.model_name or self.config.model_name,
            "messages": messages,
            "reasoning_effort": request.model.reasoning_effort,
        }
        if request.tools:
            payload["tools"] = request.tools
        return payload

    def complete(self, request: ModelRequest) -> ModelResponse:
        key = os.environ.get(self.config.api_key_env)
        if not key:
            raise ProviderError(f"environment variable {self.config.api_key_env} is not set")
        body = json.dumps(self._payload(request)).encode("utf-8")
        req = urllib.request.Request(
            self.config.base_url.rstrip("/") + "/chat/completions",
            data=body,
            headers={"Content-Type": "application/json", "Authorization": f"Bearer {key}"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                data = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
            raise ProviderError(f"provider request failed: {exc}") from exc
        try:
            msg = data["choices"][0]["message"]
        except (KeyError, IndexError, TypeError):
            raise ProviderError(f"malformed provider response: {str(data)[:200]}") from None
        calls = []
        for tc in msg.get("tool_calls") or ():
            fn = tc.get("function", {})
            try:
                args = json.loads(fn.get("arguments") or "{}")
            except json.JSONDecodeError:
                args = {"_raw": fn.get("arguments")}
            calls.append(ToolCall(tc.get("id", ""), fn.get("name", ""), args if isinstance(args, dict) else {"_raw": args}))
        return ModelResponse.from_parts(msg.get("content"), calls)


# -- tracing -----------------------------------------------------------------


@dataclass
class ProviderTrace:
    role: str
    model_name: str
    input_message_count: int
    response_kind: str
    tool_names_invoked: list[str] = field(default_factory=list)
    latency_ms: int = 0
    timestamp: str = ""
    seq: int = 0

    FIELDS = (
        "seq",
        "timestamp",
        "role",
        "model_name",
        "input_message_count",
        "response_kind",
        "tool_names_invoked",
        "latency_ms",
    )

    def to_line(self) -> str:
        return json.dumps({name: getattr(self, name) for name in self.FIELDS})

    @classmethod
    def from_line(cls, line: str) -> "ProviderTrace":
        data = json.loads(line)
        return cls(**{name: data[name] for name in cls.FIELDS})


class TraceSink:
    """Append-only trace file; seq continues across reopenings (e.g. resume)."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._next = 1
        if self.path.exists():
            self._next += sum(1 for line in self.path.read_text(encoding="utf-8").splitlines() if line.strip())

    def append(self, trace: ProviderTrace) -> ProviderTrace:
        trace.seq = self._next
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(trace.to_line() + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self._next += 1
        return trace


def append_trace(sink: TraceSink, trace: ProviderTrace) -> None:
    sink.append(trace)


def read_traces(path: str | os.PathLike) -> list[ProviderTrace]:
    path = Path(path)
    if not path.exists():
        return []
    return [ProviderTrace.from_line(l) for l in path.read_text(encoding="utf-8").splitlines() if l.strip()]


def traced_complete(provider: Provider, request: ModelRequest, sink: TraceSink | None) -> ModelResponse:
    """Call the provider once and record exactly one trace line, even on failure."""
    started = time.monotonic()
    stamp = datetime.now(timezone.utc).isoformat(timespec="milliseconds")
    try:
        response = provider.complete(request)
    except Exception:
        if sink is not None:
            sink.append(
                ProviderTrace(
                    request.role,
                    request.model.model_name,
                    len(request.messages),
                    "error",
                    [],
                    int((time.monotonic() - started) * 1000),
                    stamp,
                )
            )
        raise
    if sink is not None:
        sink.append(
            ProviderTrace(
                request.role,
                request.model.model_name,
                len(request.messages),
                response.kind,
                [c.tool for c in response.calls],
                int((time.monotonic() - started) * 1000),
                stamp,
            )
        )
    return response
