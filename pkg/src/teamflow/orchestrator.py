"""Manager-centric coordination loop with persistence and resume.

Only the coordinator talks to other agents: it invokes them through the
``manage`` tool, signals completion through ``finish`` (accepted only when the
forge shows an approved pull request for the task), and reports status through
``send_message``. A plain-text coordinator reply gets a fixed nudge instead of
ending the run.

Task directory layout::

    <task>/state        event-sourced JSON lines; replayed by resume()
    <task>/events.log   coordination events, one JSON object per line
    <task>/trace.log    one line per provider call
    <task>/forge/       forge store (bare fork + artifact records)
    <task>/ws/<role>/   per-agent workspaces
    <task>/spill/       oversized shell output
    <task>/bin/         forge CLI shims placed on workspace PATH
"""

from __future__ import annotations

import fcntl
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .agent_core import (
    AgentSpec,
    ModelRequest,
    Provider,
    TraceSink,
    build_request,
    traced_complete,
    validate_team,
)
from .context import (
    CompactionPolicy,
    Conversation,
    Message,
    ToolCall,
    append_message,
    compact,
    needs_compaction,
)
from .errors import ConfigError, ForgeError, ProviderError, ResumeError, SummarizerError, WorkspaceError
from .forge import ForgeRepo, init_forge, open_forge
from .sandbox import ProvisioningHook, Workspace, create_workspace, current_branch, reopen_workspace
from .toolkit import Param, SpillPolicy, ToolContext, ToolRegistry, ToolResult, ToolSpec, shell_tool

log = logging.getLogger(__name__)

PHASES = ("research", "specification", "implementation", "review", "completed", "failed")
WORK_PHASES = PHASES[:4]
EVENT_KINDS = (
    "agent_invoked",
    "tool_dispatched",
    "nudge_injected",
    "compaction",
    "phase_noted",
    "message",
    "finished",
    "failed",
    "persisted",
    "resumed",
)

NUDGE_TEXT = (
    "No human is available to read plain-text replies, answer questions, or approve plans. "
    "Work must continue autonomously: decide the next step yourself and act through your tools. "
    "Use manage to direct a teammate, send_message to report status, and finish only once the "
    "pull request has been approved by the reviewer."
)

DEFAULT_PREAMBLE = """\
Task {task_id}. Resolve the issue below in the repository fork.

Base branch: {base_branch}. Open the pull request against this branch and put
"{task_id}" in its title. The task counts as done only when the reviewer has
approved that pull request; then call finish.

Issue:
{issue_text}
"""


@dataclass(frozen=True)
class Limits:
    max_manager_turns: int = 200
    max_subagent_turns: int = 50
    wall_clock_s: float | None = None

    def __post_init__(self):
        if self.max_manager_turns <= 0 or self.max_subagent_turns <= 0:
            raise ConfigError("turn limits must be positive")
        if self.wall_clock_s is not None and self.wall_clock_s <= 0:
            raise ConfigError("wall_clock_s must be positive")


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    repo: str
    issue_text: str
    base_branch: str = ""
    limits: Limits = Limits()

    def __post_init__(self):
        if not self.task_id:
            raise ConfigError("task_id must be non-empty")
        if not self.base_branch:
            object.__setattr__(self, "base_branch", f"task/{self.task_id}")


@dataclass
class Policies:
    """Runtime knobs that are configuration rather than team structure."""

    compaction: CompactionPolicy = field(default_factory=CompactionPolicy)
    compaction_by_role: dict[str, CompactionPolicy] = field(default_factory=dict)
    spill_threshold_tokens: int = 50_000
    spill_excerpt_bytes: int = 2_000
    shell_timeout_s: int = 300
    provisioning: ProvisioningHook = ProvisioningHook()
    preamble: str = DEFAULT_PREAMBLE

    def compaction_for(self, role: str) -> CompactionPolicy:
        return self.compaction_by_role.get(role, self.compaction)


@dataclass
class CoordinationEvent:
    seq: int
    kind: str
    detail: str = ""
    actor: str | None = None
    target: str | None = None


@dataclass
class TaskState:
    task_id: str
    phase: str = "research"
    failure: str | None = None
    resumable: bool = True
    issue_number: int | None = None
    pr_number: int | None = None
    forge: ForgeRepo | None = None
    conversations: dict[str, Conversation] = field(default_factory=dict)
    event_log: list[CoordinationEvent] = field(default_factory=list)

    @property
    def terminal(self) -> bool:
        return self.phase in ("completed", "failed")

    def events(self, kind: str) -> list[CoordinationEvent]:
        return [e for e in self.event_log if e.kind == kind]


def evaluate_finish(forge: ForgeRepo, task_id: str) -> tuple[bool, str]:
    """Check the live forge for the acceptance condition; returns (ok, explanation)."""
    prs = forge.pulls()
    if not prs:
        return False, (
            f"no pull request exists yet; open one against {forge.task_base_branch} "
            f"with {task_id!r} in its title and get it approved by the reviewer"
        )
    titled = [p for p in prs if task_id in p.title]
    for pr in titled:
        if pr.state == "approved" and pr.approved_by and pr.approved_by != pr.author:
            return True, f"pull request #{pr.number} approved by {pr.approved_by}"
    if not titled:
        names = ", ".join(f"#{p.number} {p.title!r}" for p in prs)
        return False, (
            f"title rule not met: no pull request title contains the task identifier {task_id!r} "
            f"(found {names}); the pull request title must include it"
        )
    summary = ", ".join(f"#{p.number} is {p.state}" for p in titled)
    return False, (
        f"pull request not approved ({summary}); only an approval by a reviewer other than "
        "the author completes the task"
    )


def forge_summary(forge: ForgeRepo) -> str:
    issues = forge.issues()
    prs = forge.pulls()
    lines = ["Issues:"]
    lines += [f"  #{i.number} [{i.state}] {i.title} (by {i.author})" for i in issues] or ["  none"]
    lines.append("Pull requests:")
    for p in prs:
        open_threads = len(forge.threads(p.number, unresolved_only=True))
        lines.append(
            f"  #{p.number} [{p.state}] {p.title} ({p.source_branch} -> {p.target_branch}, by {p.author}, "
            f"{open_threads} unresolved threads)"
        )
    if not prs:
        lines.append("  none")
    return "\n".join(lines)


def _call_number(call_id: str) -> int:
    try:
        return int(call_id.rsplit("-", 1)[-1])
    except ValueError:
        return 0


class TaskRunner:
    """Drives one task. Strictly sequential: one provider call or dispatch at a time."""

    def __init__(
        self,
        team: Iterable[AgentSpec],
        spec: TaskSpec,
        provider: Provider,
        task_dir: str | os.PathLike,
        policies: Policies | None = None,
        extra_tools: Iterable[ToolSpec] = (),
    ):
        self.agents = validate_team(team)
        self.coordinator = next(a for a in self.agents.values() if a.coordinator)
        self.spec = spec
        self.provider = provider
        self.task_dir = Path(task_dir)
        self.policies = policies or Policies()
        self.registry = ToolRegistry([shell_tool(), *self._coordination_tools(), *extra_tools])
        for agent in self.agents.values():
            unknown = sorted(agent.tool_names - {s.name for s in self.registry.specs()})
            if unknown:
                raise ConfigError(f"agent {agent.role!r} references unknown tools {unknown}")
        self.state = TaskState(spec.task_id)
        self.workspaces: dict[str, Workspace] = {}
        self.sink = TraceSink(self.task_dir / "trace.log")
        self._call_seq = 0
        self._manager_turns = 0
        self._started = 0.0
        self._abort: Exception | None = None
        self._lock_fh = None

    # -- paths / persistence ------------------------------------------------

    @property
    def state_path(self) -> Path:
        return self.task_dir / "state"

    @property
    def forge_dir(self) -> Path:
        return self.task_dir / "forge"

    def _record(self, rec: dict[str, Any]) -> None:
        with open(self.state_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def _event(self, kind: str, detail: str = "", actor: str | None = None, target: str | None = None) -> CoordinationEvent:
        assert kind in EVENT_KINDS, kind
        seq = self.state.event_log[-1].seq + 1 if self.state.event_log else 1
        ev = CoordinationEvent(seq, kind, detail, actor, target)
        self.state.event_log.append(ev)
        self._record({"type": "event", **asdict(ev)})
        with open(self.task_dir / "events.log", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(asdict(ev)) + "\n")
        return ev

    def _append(self, role: str, conv: Conversation, msg: Message) -> None:
        append_message(conv, msg)
        self._record({"type": "message", "role": role, "message": msg.to_dict()})

    def _set_phase(self, phase: str, failure: str | None = None, resumable: bool = True) -> None:
        self.state.phase = phase
        self.state.failure = failure
        self.state.resumable = resumable
        self._record({"type": "phase", "phase": phase, "failure": failure, "resumable": resumable})

    def persist(self) -> None:
        self._event("persisted", f"phase={self.state.phase}")
        with open(self.state_path, "a", encoding="utf-8") as fh:
            fh.flush()
            os.fsync(fh.fileno())

    def _acquire(self) -> None:
        self.task_dir.mkdir(parents=True, exist_ok=True)
        self._lock_fh = open(self.task_dir / ".lock", "a")
        try:
            fcntl.flock(self._lock_fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            self._lock_fh.close()
            self._lock_fh = None
            raise ConfigError(f"task directory {self.task_dir} is in use by another run") from None

    def _release(self) -> None:
        if self._lock_fh is not None:
            fcntl.flock(self._lock_fh, fcntl.LOCK_UN)
            self._lock_fh.close()
            self._lock_fh = None

    # -- tools ----------------------------------------------------------------

    def _coordination_tools(self) -> list[ToolSpec]:
        return [
            ToolSpec(
                "manage",
                "Send a message to a teammate (researcher, engineer, reviewer, ...) and wait for its reply. "
                "The teammate works in its own workspace and answers with its deliverable.",
                (Param("role", "string", True, "teammate role"), Param("message", "string", True, "instructions and context")),
                self._tool_manage,
            ),
            ToolSpec(
                "finish",
                "Declare the task complete. Accepted only when a pull request whose title contains the task id "
                "has been approved by the reviewer.",
                (Param("summary", "string", False, "what was delivered"),),
                self._tool_finish,
            ),
            ToolSpec(
                "send_message",
                "Emit a status update. Does not end the task. Prefix with 'phase: <name>' to note the current phase.",
                (Param("text", "string", True, "status text"),),
                self._tool_send_message,
            ),
        ]

    def _tool_send_message(self, args: dict[str, Any], ctx: ToolContext) -> ToolResult:
        text = args["text"]
        self._event("message", text, actor=ctx.role)
        head = text.strip().lower()
        if head.startswith("phase:"):
            phase = head[len("phase:"):].strip().split()[0] if head[len("phase:"):].strip() else ""
            if phase in WORK_PHASES:
                self.state.phase = phase
                self._record({"type": "phase", "phase": phase, "failure": None, "resumable": True})
                self._event("phase_noted", phase, actor=ctx.role)
        return ToolResult.ok(ctx.call_id, "message recorded")

    def _tool_finish(self, args: dict[str, Any], ctx: ToolContext) -> ToolResult:
        ok, why = evaluate_finish(self.forge, self.spec.task_id)
        if not ok:
            return ToolResult.error(ctx.call_id, f"task not complete: {why}")
        self._refresh_forge_facts()
        self._set_phase("completed")
        self._event("finished", f"{why}. {args.get('summary', '')}".strip(), actor=ctx.role)
        return ToolResult.ok(ctx.call_id, f"task completed: {why}")

    def _tool_manage(self, args: dict[str, Any], ctx: ToolContext) -> ToolResult:
        role, message = args["role"], args["message"]
        if role == self.coordinator.role:
            return ToolResult.error(ctx.call_id, "the coordinator cannot manage itself; pick a teammate role")
        agent = self.agents.get(role)
        if agent is None:
            return ToolResult.error(ctx.call_id, f"unknown role {role!r}; team is {sorted(self.agents)}")
        self._event("agent_invoked", message[:200], actor=ctx.role, target=role)
        try:
            text = self._run_subagent(agent, message)
        except (ProviderError, OSError, WorkspaceError) as exc:
            self._abort = exc
            return ToolResult.error(ctx.call_id, f"{role} was interrupted: {exc}")
        if text is None:
            conv = self.state.conversations[role]
            tail = next((m.content for m in reversed(conv.messages) if m.content), "")[-500:]
            return ToolResult.error(ctx.call_id, f"sub-agent turn limit reached; last output: {tail}")
        return ToolResult.ok(ctx.call_id, text)

    # -- agent turns ------------------------------------------------------------

    def _next_call_id(self) -> str:
        self._call_seq += 1
        return f"call-{self._call_seq}"

    def _summarizer(self, agent: AgentSpec):
        def summarize(prompt: str) -> str:
            req = ModelRequest(agent.role, agent.model, [Message("system", prompt)], [], "summary")
            resp = traced_complete(self.provider, req, self.sink)
            if resp.kind != "text" or not resp.text:
                raise SummarizerError("summarizer did not return text")
            return resp.text

        return summarize

    def _ensure_budget(self, agent: AgentSpec, conv: Conversation) -> Conversation:
        policy = self.policies.compaction_for(agent.role)
        if not needs_compaction(conv, policy):
            return conv
        before = conv.total_estimate
        conv = compact(conv, policy, self._summarizer(agent))
        self.state.conversations[agent.role] = conv
        self._record({
            "type": "conversation", "role": agent.role, "compaction_count": conv.compaction_count,
            "messages": [m.to_dict() for m in conv.messages],
        })
        self._event("compaction", f"{before} -> {conv.total_estimate} tokens", actor=agent.role)
        return conv

    def _turn(self, agent: AgentSpec, conv: Conversation):
        conv = self._ensure_budget(agent, conv)
        request = build_request(agent, conv, self.registry.specs())
        response = traced_complete(self.provider, request, self.sink)
        return conv, response

    def _dispatch_all(self, agent: AgentSpec, conv: Conversation, calls: list[ToolCall]) -> None:
        for call in calls:
            if self.state.terminal or self._abort is not None:
                result = ToolResult.error(call.call_id, "not executed: the run stopped before this call")
            else:
                ctx = ToolContext(
                    agent.role,
                    call.call_id,
                    self.workspaces.get(agent.role),
                    SpillPolicy(self.task_dir / "spill", self.policies.spill_threshold_tokens, self.policies.spill_excerpt_bytes),
                    self.policies.shell_timeout_s,
                )
                result = self.registry.dispatch(call, ctx, agent.tool_names)
                self._event("tool_dispatched", f"{call.tool} -> {result.status}", actor=agent.role)
            self._append(agent.role, conv, Message("tool", result.payload, tool_call_ref=call.call_id))

    def _agent_message(self, agent: AgentSpec, conv: Conversation, response) -> list[ToolCall]:
        calls = [ToolCall(self._next_call_id(), c.tool, c.args) for c in response.calls]
        self._append(agent.role, conv, Message("agent", response.text or "", tuple(calls)))
        return calls

    def _run_subagent(self, agent: AgentSpec, message: str) -> str | None:
        conv = Conversation.start(agent.objective_prompt)
        self.state.conversations[agent.role] = conv
        self._record({"type": "session", "role": agent.role})
        self._append(agent.role, conv, Message("system", f"Message from {self.coordinator.role}:\n{message}"))
        try:
            for _ in range(self.spec.limits.max_subagent_turns):
                conv, response = self._turn(agent, conv)
                if response.kind == "text":
                    self._append(agent.role, conv, Message("agent", response.text))
                    return response.text
                calls = self._agent_message(agent, conv, response)
                self._dispatch_all(agent, conv, calls)
                if self._abort is not None:
                    raise self._abort
            return None
        finally:
            ws = self.workspaces.get(agent.role)
            if ws is not None and ws.root.is_dir():
                self._record({"type": "workspace", "role": agent.role, "branch": current_branch(ws)})

    def nudge(self) -> None:
        conv = self.state.conversations[self.coordinator.role]
        self._append(self.coordinator.role, conv, Message("system", NUDGE_TEXT))
        self._event("nudge_injected", "plain-text reply from coordinator", actor="system", target=self.coordinator.role)

    def manager_turn(self) -> None:
        agent = self.coordinator
        conv = self.state.conversations[agent.role]
        conv, response = self._turn(agent, conv)
        self._manager_turns += 1
        if response.kind == "text":
            self._append(agent.role, conv, Message("agent", response.text))
            self.nudge()
            return
        calls = self._agent_message(agent, conv, response)
        self._dispatch_all(agent, conv, calls)
        self._refresh_forge_facts()
        if self._abort is not None:
            exc, self._abort = self._abort, None
            raise exc

    # -- lifecycle ----------------------------------------------------------------

    def _refresh_forge_facts(self) -> None:
        try:
            issues = self.forge.issues()
            prs = self.forge.pulls()
        except ForgeError:
            return
        self.state.issue_number = issues[-1].number if issues else None
        titled = [p for p in prs if self.spec.task_id in p.title]
        pick = titled or prs
        self.state.pr_number = pick[-1].number if pick else None

    def _create_workspaces(self, branches: dict[str, str | None] | None = None) -> None:
        for agent in self.agents.values():
            if not agent.has_workspace:
                continue
            if branches is None:
                self.workspaces[agent.role] = create_workspace(
                    self.forge, self.spec.base_branch, agent.role, self.policies.provisioning, task_dir=self.task_dir
                )
            else:
                self.workspaces[agent.role] = reopen_workspace(
                    self.forge, agent.role, self.task_dir, branches.get(agent.role), self.policies.provisioning
                )

    def start(self) -> None:
        """Initialize a fresh task directory (forge, workspaces, seeded coordinator)."""
        if self.state_path.exists():
            raise ConfigError(f"{self.task_dir} already holds a task; use resume")
        if (self.forge_dir / "repo.git").exists():
            self.forge = open_forge(self.forge_dir, self.spec.task_id)
        else:
            self.forge = init_forge(self.spec.repo, self.spec.task_id, self.forge_dir)
        self.state.forge = self.forge
        (self.task_dir / "spill").mkdir(exist_ok=True)
        self._record({
            "type": "task", "task_id": self.spec.task_id, "repo": str(self.spec.repo),
            "issue_text": self.spec.issue_text, "base_branch": self.spec.base_branch,
            "limits": asdict(self.spec.limits),
        })
        self._create_workspaces()
        conv = Conversation.start(self.coordinator.objective_prompt)
        self.state.conversations[self.coordinator.role] = conv
        self._record({"type": "session", "role": self.coordinator.role})
        self._append(self.coordinator.role, conv, Message("system", self.policies.preamble.format(
            task_id=self.spec.task_id, base_branch=self.spec.base_branch, issue_text=self.spec.issue_text,
        )))

    def _loop(self) -> TaskState:
        self._started = time.monotonic()
        self._manager_turns = 0
        limits = self.spec.limits
        while not self.state.terminal:
            if self._manager_turns >= limits.max_manager_turns:
                self._fail("limit", f"max_manager_turns={limits.max_manager_turns} reached")
                break
            if limits.wall_clock_s is not None and time.monotonic() - self._started > limits.wall_clock_s:
                self._fail("wall_clock", f"wall_clock_s={limits.wall_clock_s} exceeded")
                break
            try:
                self.manager_turn()
            except (ProviderError, OSError, WorkspaceError) as exc:
                self._fail("provider" if isinstance(exc, ProviderError) else "error", str(exc))
                break
        self.persist()
        return self.state

    def _fail(self, reason: str, detail: str, resumable: bool = True) -> None:
        self._set_phase("failed", reason, resumable)
        self._event("failed", f"{reason}: {detail}")

    def run(self) -> TaskState:
        self._acquire()
        try:
            if not self.state_path.exists():
                self.start()
            return self._loop()
        finally:
            self._release()

    # -- resume --------------------------------------------------------------------

    def _replay(self) -> dict[str, str | None]:
        """Rebuild in-memory state from the state log; returns last known branch per role."""
        branches: dict[str, str | None] = {}
        convs: dict[str, Conversation] = {}
        max_call = 0
        with open(self.state_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    kind = rec["type"]
                    if kind == "event":
                        self.state.event_log.append(CoordinationEvent(
                            rec["seq"], rec["kind"], rec.get("detail", ""), rec.get("actor"), rec.get("target")))
                    elif kind == "message":
                        msg = Message.from_dict(rec["message"])
                        convs.setdefault(rec["role"], Conversation()).messages.append(msg)
                        for c in msg.tool_calls:
                            max_call = max(max_call, _call_number(c.call_id))
                    elif kind == "session":
                        # Objective prompts are not logged; reseed from the current team.
                        agent = self.agents.get(rec["role"])
                        convs[rec["role"]] = Conversation.start(agent.objective_prompt) if agent else Conversation()
                    elif kind == "conversation":
                        convs[rec["role"]] = Conversation(
                            [Message.from_dict(m) for m in rec["messages"]], rec["compaction_count"])
                    elif kind == "phase":
                        self.state.phase = rec["phase"]
                        self.state.failure = rec.get("failure")
                        self.state.resumable = rec.get("resumable", True)
                    elif kind == "workspace":
                        branches[rec["role"]] = rec["branch"]
                except (ValueError, KeyError, TypeError) as exc:
                    raise ResumeError(f"corrupt state record {self.state_path}:{lineno}: {exc}") from None
        if self.coordinator.role not in convs:
            raise ResumeError("state log holds no coordinator conversation")
        self.state.conversations = convs
        self._call_seq = max_call
        return branches

    def resume(self) -> TaskState:
        self._acquire()
        try:
            return self._resume()
        finally:
            self._release()

    def _resume(self) -> TaskState:
        if not self.state_path.exists():
            raise ResumeError(f"no task state at {self.state_path}")
        if not (self.forge_dir / "repo.git").is_dir():
            raise ResumeError(f"no forge store at {self.forge_dir}")
        try:
            branches = self._replay()
            self.forge = open_forge(self.forge_dir, self.spec.task_id)
            self.state.forge = self.forge
            self._refresh_forge_facts()
            self.forge.pulls()
        except (ResumeError, ForgeError) as exc:
            self.state.phase, self.state.failure, self.state.resumable = "failed", f"corrupt: {exc}", False
            return self.state
        if self.state.phase == "completed":
            return self.state
        if self.state.phase == "failed" and not self.state.resumable:
            return self.state
        last_work = next(
            (e.detail for e in reversed(self.state.event_log) if e.kind == "phase_noted"), "research"
        )
        self._set_phase(last_work)
        self._create_workspaces(branches)
        conv = self.state.conversations[self.coordinator.role]
        for call in conv.pending_calls():
            self._append(self.coordinator.role, conv, Message(
                "tool", "error: interrupted before this call returned; check the forge state below and redo it only if needed",
                tool_call_ref=call.call_id))
        notice = (
            "The run was interrupted and has been resumed from persisted forge state. "
            "Artifacts that already exist must not be recreated.\n" + forge_summary(self.forge)
        )
        self._append(self.coordinator.role, conv, Message("system", notice))
        self._event("resumed", f"issue={self.state.issue_number} pr={self.state.pr_number}")
        return self._loop()


def run_task(
    team: Iterable[AgentSpec],
    spec: TaskSpec,
    provider: Provider,
    task_dir: str | os.PathLike,
    policies: Policies | None = None,
) -> TaskState:
    return TaskRunner(team, spec, provider, task_dir, policies).run()


def load_task_spec(task_dir: str | os.PathLike) -> TaskSpec:
    """Read the task header record from a task directory's state log."""
    path = Path(task_dir) / "state"
    if not path.exists():
        raise ResumeError(f"no task state at {path}")
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    try:
        rec = json.loads(first)
        if rec.get("type") != "task":
            raise ValueError("first record is not a task header")
        return TaskSpec(rec["task_id"], rec["repo"], rec["issue_text"], rec["base_branch"], Limits(**rec["limits"]))
    except (ValueError, KeyError, TypeError) as exc:
        raise ResumeError(f"corrupt task header in {path}: {exc}") from None


def resume(
    task_dir: str | os.PathLike,
    team: Iterable[AgentSpec],
    provider: Provider,
    policies: Policies | None = None,
    limits: Limits | None = None,
) -> TaskState:
    spec = load_task_spec(task_dir)
    if limits is not None:
        spec = TaskSpec(spec.task_id, spec.repo, spec.issue_text, spec.base_branch, limits)
    return TaskRunner(team, spec, provider, task_dir, policies).resume()
