"""Tool registry, dispatch, and the shell tool with oversized-output spill."""

from __future__ import annotations

import os
import signal
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .context import ToolCall, estimate_tokens
from .errors import ConfigError, WorkspaceError

PARAM_TYPES = {"string": str, "integer": int, "boolean": bool}
JSON_TYPES = {"string": "string", "integer": "integer", "boolean": "boolean"}

CONTINUE_HINT = "Adjust the call and continue working autonomously."


@dataclass(frozen=True)
class Param:
    name: str
    type: str = "string"
    required: bool = True
    description: str = ""

    def __post_init__(self):
        if self.type not in PARAM_TYPES:
            raise ConfigError(f"parameter {self.name!r}: unsupported type {self.type!r}")


@dataclass(frozen=True)
class ToolResult:
    call_id: str
    status: str
    payload: str
    artifacts: tuple[str, ...] = ()

    @classmethod
    def ok(cls, call_id: str, payload: str, artifacts=()) -> "ToolResult":
        return cls(call_id, "ok", payload, tuple(artifacts))

    @classmethod
    def error(cls, call_id: str, reason: str) -> "ToolResult":
        return cls(call_id, "error", f"error: {reason}\n{CONTINUE_HINT}")


@dataclass
class ToolContext:
    """What a handler may touch during one dispatch."""

    role: str
    call_id: str
    workspace: Any = None
    spill: "SpillPolicy | None" = None
    timeout_s: int = 300
    extra: dict[str, Any] = field(default_factory=dict)


Handler = Callable[[dict[str, Any], ToolContext], "ToolResult | str"]


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    params: tuple[Param, ...] = ()
    handler: Handler | None = None

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        names = [p.name for p in self.params]
        if len(names) != len(set(names)):
            raise ConfigError(f"tool {self.name!r} has duplicate parameter names")

    def declaration(self) -> dict[str, Any]:
        return {
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": {
                    "type": "object",
                    "properties": {
                        p.name: {"type": JSON_TYPES[p.type], "description": p.description}
                        for p in self.params
                    },
                    "required": [p.name for p in self.params if p.required],
                    "additionalProperties": False,
                },
            },
        }

    def validate(self, args: dict[str, Any]) -> str | None:
        """Return a validation message, or None when args match the schema."""
        if not isinstance(args, dict):
            return "arguments must be an object"
        known = {p.name: p for p in self.params}
        for name in args:
            if name not in known:
                return f"unexpected parameter {name!r}"
        for p in self.params:
            if p.name not in args:
                if p.required:
                    return f"missing required parameter {p.name!r}"
                continue
            value = args[p.name]
            expected = PARAM_TYPES[p.type]
            if expected is int and isinstance(value, bool) or not isinstance(value, expected):
                return f"parameter {p.name!r} must be of type {p.type}"
        return None


class ToolRegistry:
    def __init__(self, specs=()):
        self._tools: dict[str, ToolSpec] = {}
        for spec in specs:
            self.register(spec)

    def register(self, spec: ToolSpec) -> "ToolRegistry":
        if spec.name in self._tools:
            raise ConfigError(f"tool {spec.name!r} already registered")
        self._tools[spec.name] = spec
        return self

    def resolve(self, name: str) -> ToolSpec:
        try:
            return self._tools[name]
        except KeyError:
            raise KeyError(f"unknown tool {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._tools

    def specs(self) -> list[ToolSpec]:
        return list(self._tools.values())

    def dispatch(self, call: ToolCall, ctx: ToolContext, permitted=None) -> ToolResult:
        """Run one call. Never raises: every failure becomes an error result."""
        if call.tool not in self._tools:
            return ToolResult.error(call.call_id, f"unknown tool {call.tool!r}")
        if permitted is not None and call.tool not in permitted:
            return ToolResult.error(call.call_id, f"tool {call.tool!r} not available to this role")
        spec = self._tools[call.tool]
        problem = spec.validate(call.args)
        if problem:
            return ToolResult.error(call.call_id, f"invalid arguments for {call.tool}: {problem}")
        if spec.handler is None:
            return ToolResult.error(call.call_id, f"tool {call.tool!r} has no handler bound")
        try:
            out = spec.handler(dict(call.args), ctx)
        except Exception as exc:  # handlers are untrusted from the loop's point of view
            return ToolResult.error(call.call_id, f"{call.tool} failed: {exc}")
        if isinstance(out, ToolResult):
            return out
        return ToolResult.ok(call.call_id, str(out))


def register_tool(registry: ToolRegistry, spec: ToolSpec) -> ToolRegistry:
    return registry.register(spec)


def dispatch(registry: ToolRegistry, call: ToolCall, ctx: ToolContext, permitted=None) -> ToolResult:
    return registry.dispatch(call, ctx, permitted)


# -- shell -------------------------------------------------------------------


@dataclass(frozen=True)
class SpillPolicy:
    spill_dir: Path
    threshold_tokens: int = 50_000
    excerpt_bytes: int = 2_000

    def __post_init__(self):
        if self.threshold_tokens <= 0:
            raise ConfigError("threshold_tokens must be positive")
        object.__setattr__(self, "spill_dir", Path(self.spill_dir))


@dataclass(frozen=True)
class CommandOutcome:
    command: str
    exit_code: int | None
    duration_s: float
    timed_out: bool
    total_bytes: int
    output: str | None = None
    spill_path: str | None = None
    head_excerpt: str = ""
    tail_excerpt: str = ""
    timeout_s: int | None = None

    @property
    def spilled(self) -> bool:
        return self.spill_path is not None


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()


def shell_execute(
    workspace,
    command: str,
    policy: SpillPolicy,
    timeout_s: int = 300,
    call_id: str = "cmd",
    env: dict[str, str] | None = None,
) -> CommandOutcome:
    """Run ``command`` with ``/bin/sh -c`` in the workspace root.

    stdout and stderr are merged into a single capture file in arrival order.
    Output whose token estimate exceeds ``policy.threshold_tokens`` is moved
    to ``<spill_dir>/<call_id>.out`` and only excerpts are returned inline.
    """
    if timeout_s <= 0:
        raise ValueError("timeout_s must be positive")
    # Path objects carry their own ``.root`` ("/"), so test for PathLike first.
    root = Path(workspace) if isinstance(workspace, (str, os.PathLike)) else Path(workspace.root)
    if not root.is_dir():
        raise WorkspaceError(f"workspace root {root} does not exist")
    if env is None and not isinstance(workspace, (str, os.PathLike)):
        env = getattr(workspace, "env", None) or None
    policy.spill_dir.mkdir(parents=True, exist_ok=True)
    fd, capture = tempfile.mkstemp(prefix=f".{call_id}.", suffix=".capture", dir=policy.spill_dir)
    started = time.monotonic()
    timed_out = False
    try:
        with os.fdopen(fd, "wb") as sink:
            proc = subprocess.Popen(
                ["/bin/sh", "-c", command],
                cwd=root,
                stdin=subprocess.DEVNULL,
                stdout=sink,
                stderr=subprocess.STDOUT,
                env=env,
                start_new_session=True,
            )
            try:
                exit_code = proc.wait(timeout=timeout_s)
            except subprocess.TimeoutExpired:
                timed_out = True
                _kill_group(proc)
                proc.wait()
                exit_code = None
        duration = time.monotonic() - started
        data = Path(capture).read_bytes()
        total = len(data)
        common = dict(
            command=command,
            exit_code=exit_code,
            duration_s=duration,
            timed_out=timed_out,
            total_bytes=total,
            timeout_s=timeout_s if timed_out else None,
        )
        if estimate_tokens(data) > policy.threshold_tokens:
            target = policy.spill_dir / f"{call_id}.out"
            os.replace(capture, target)
            n = policy.excerpt_bytes
            return CommandOutcome(
                **common,
                spill_path=str(target),
                head_excerpt=data[:n].decode("utf-8", errors="ignore"),
                tail_excerpt=data[-n:].decode("utf-8", errors="ignore"),
            )
        return CommandOutcome(**common, output=data.decode("utf-8", errors="replace"))
    finally:
        if os.path.exists(capture):
            os.unlink(capture)


def render_outcome(outcome: CommandOutcome) -> str:
    lines = [
        f"exit: {outcome.exit_code if outcome.exit_code is not None else 'none'}",
        f"duration: {outcome.duration_s:.2f}s",
        f"timed_out: {'true' if outcome.timed_out else 'false'}",
    ]
    if outcome.timed_out:
        lines.append(
            f"TIMEOUT: command killed after {outcome.duration_s:.2f}s elapsed"
            f" (limit {outcome.timeout_s}s); output below is partial"
        )
    if outcome.spilled:
        n_head = len(outcome.head_excerpt.encode("utf-8"))
        n_tail = len(outcome.tail_excerpt.encode("utf-8"))
        lines.append(
            f"output stored at {outcome.spill_path}; {outcome.total_bytes} bytes; first/last excerpts follow"
        )
        lines.append(f"--- first {n_head} bytes ---")
        lines.append(outcome.head_excerpt)
        lines.append(f"--- last {n_tail} bytes ---")
        lines.append(outcome.tail_excerpt)
        lines.append("--- end of excerpts; inspect the file with shell commands (head, tail, grep, sed) ---")
    else:
        lines.append("--- output ---")
        lines.append(outcome.output or "")
    return "\n".join(lines)


def shell_tool(env_for: Callable[[ToolContext], dict[str, str] | None] | None = None) -> ToolSpec:
    """The ``shell`` tool bound to the calling agent's workspace."""

    def handle(args: dict[str, Any], ctx: ToolContext) -> ToolResult:
        if ctx.workspace is None:
            return ToolResult.error(ctx.call_id, "this role has no workspace to run commands in")
        if ctx.spill is None:
            return ToolResult.error(ctx.call_id, "no spill policy configured")
        timeout = args.get("timeout_s", ctx.timeout_s)
        if timeout <= 0:
            return ToolResult.error(ctx.call_id, "timeout_s must be positive")
        try:
            outcome = shell_execute(
                ctx.workspace,
                args["command"],
                ctx.spill,
                timeout,
                ctx.call_id,
                env_for(ctx) if env_for else None,
            )
        except WorkspaceError as exc:
            return ToolResult.error(ctx.call_id, str(exc))
        artifacts = (outcome.spill_path,) if outcome.spilled else ()
        return ToolResult.ok(ctx.call_id, render_outcome(outcome), artifacts)

    return ToolSpec(
        "shell",
        "Run a shell command in your workspace root. stdout and stderr are merged. "
        "Very large output is saved to a file and only excerpts are returned.",
        (
            Param("command", "string", True, "command line passed to /bin/sh -c"),
            Param("timeout_s", "integer", False, "time limit in seconds (default 300)"),
        ),
        handle,
    )
