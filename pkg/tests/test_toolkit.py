import random
import subprocess
from pathlib import Path

import pytest

from teamflow import (
    CommandOutcome,
    ConfigError,
    Param,
    SpillPolicy,
    ToolCall,
    ToolRegistry,
    ToolResult,
    ToolSpec,
    WorkspaceError,
    dispatch,
    register_tool,
    render_outcome,
    shell_execute,
)
from teamflow.toolkit import ToolContext, shell_tool

GOLDEN = Path(__file__).parent / "golden"


def emit(n):
    """Shell command printing exactly n bytes (a repeating alphabet)."""
    return f"yes abcdefghijklmnopqrstuvwxyz | tr -d '\\n' | head -c {n}"


def ctx(tmp_path, role="engineer", call_id="call-1"):
    ws = tmp_path / "ws"
    ws.mkdir(exist_ok=True)
    return ToolContext(role, call_id, ws, SpillPolicy(tmp_path / "spill"), 30)


def test_register_and_resolve():
    reg = register_tool(ToolRegistry(), shell_tool())
    assert reg.resolve("shell").name == "shell"
    with pytest.raises(ConfigError):
        register_tool(reg, shell_tool())
    with pytest.raises(KeyError):
        reg.resolve("deploy")


def test_unknown_tool_becomes_error_result(tmp_path):
    reg = ToolRegistry([shell_tool()])
    result = dispatch(reg, ToolCall("c1", "deploy", {}), ctx(tmp_path))
    assert result.status == "error" and "unknown tool 'deploy'" in result.payload
    assert "continue working autonomously" in result.payload


def test_permission_violation(tmp_path):
    manage = ToolSpec("manage", "delegate", (Param("role"), Param("message")), lambda a, c: "ran")
    reg = ToolRegistry([shell_tool(), manage])
    call = ToolCall("c1", "manage", {"role": "reviewer", "message": "hi"})
    result = reg.dispatch(call, ctx(tmp_path), permitted={"shell"})
    assert result.status == "error"
    assert "tool 'manage' not available to this role" in result.payload


def test_missing_required_parameter_named(tmp_path):
    reg = ToolRegistry([shell_tool()])
    result = reg.dispatch(ToolCall("c1", "shell", {}), ctx(tmp_path))
    assert result.status == "error" and "'command'" in result.payload


@pytest.mark.parametrize(
    "args,problem",
    [
        ({"command": 3}, "must be of type string"),
        ({"command": "ls", "timeout_s": True}, "must be of type integer"),
        ({"command": "ls", "extra": 1}, "unexpected parameter"),
    ],
)
def test_schema_validation(tmp_path, args, problem):
    result = ToolRegistry([shell_tool()]).dispatch(ToolCall("c1", "shell", args), ctx(tmp_path))
    assert result.status == "error" and problem in result.payload


def test_handler_exception_never_escapes(tmp_path):
    def explode(args, c):
        raise RuntimeError("kaboom")

    reg = ToolRegistry([ToolSpec("boom", "fails", (), explode)])
    result = reg.dispatch(ToolCall("c1", "boom", {}), ctx(tmp_path))
    assert result == ToolResult.error("c1", "boom failed: kaboom")


def test_duplicate_param_names_rejected():
    with pytest.raises(ConfigError):
        ToolSpec("t", "d", (Param("a"), Param("a")))


def test_valid_shell_call(tmp_path):
    result = ToolRegistry([shell_tool()]).dispatch(ToolCall("c1", "shell", {"command": "echo hello"}), ctx(tmp_path))
    assert result.status == "ok"
    assert "exit: 0" in result.payload and "hello" in result.payload


def test_echo_hello(tmp_path):
    out = shell_execute(tmp_path, "echo hello", SpillPolicy(tmp_path / "spill"))
    assert out.exit_code == 0 and out.output == "hello\n" and not out.spilled


def test_nonzero_exit_is_not_a_tool_error(tmp_path):
    result = ToolRegistry([shell_tool()]).dispatch(ToolCall("c1", "shell", {"command": "exit 3"}), ctx(tmp_path))
    assert result.status == "ok" and result.payload.startswith("exit: 3")


def test_streams_merged_in_order(tmp_path):
    out = shell_execute(tmp_path, "echo one; echo two >&2; echo three", SpillPolicy(tmp_path / "spill"))
    assert out.output == "one\ntwo\nthree\n"


def test_runs_in_workspace_root(tmp_path):
    out = shell_execute(tmp_path, "pwd", SpillPolicy(tmp_path / "spill"))
    assert Path(out.output.strip()).resolve() == tmp_path.resolve()


def test_missing_workspace(tmp_path):
    with pytest.raises(WorkspaceError):
        shell_execute(tmp_path / "gone", "true", SpillPolicy(tmp_path / "spill"))
    c = ctx(tmp_path)
    c.workspace = tmp_path / "gone"
    result = ToolRegistry([shell_tool()]).dispatch(ToolCall("c1", "shell", {"command": "true"}), c)
    assert result.status == "error"


def test_exactly_200000_bytes_not_spilled(tmp_path):
    policy = SpillPolicy(tmp_path / "spill")
    out = shell_execute(tmp_path, emit(200_000), policy, call_id="c-exact")
    assert out.total_bytes == 200_000
    assert not out.spilled and len(out.output) == 200_000
    assert not (tmp_path / "spill" / "c-exact.out").exists()


def test_200004_bytes_spilled_byte_identical(tmp_path):
    policy = SpillPolicy(tmp_path / "spill")
    out = shell_execute(tmp_path, emit(200_004), policy, call_id="c-big")
    reference = subprocess.run(["/bin/sh", "-c", emit(200_004)], capture_output=True).stdout
    assert out.spilled and out.total_bytes == 200_004
    assert Path(out.spill_path).read_bytes() == reference
    rendered = render_outcome(out)
    assert out.spill_path in rendered
    assert out.head_excerpt == reference[:2000].decode() and out.tail_excerpt == reference[-2000:].decode()


def test_spilled_payload_is_bounded(tmp_path):
    policy = SpillPolicy(tmp_path / "spill")
    out = shell_execute(tmp_path, emit(300_000), policy, call_id="c-bound")
    framing = len(render_outcome(out).encode()) - len(out.head_excerpt.encode()) - len(out.tail_excerpt.encode())
    assert len(render_outcome(out).encode()) <= 2 * policy.excerpt_bytes + 512
    assert framing > 0


def test_timeout_returns_partial_output(tmp_path):
    out = shell_execute(tmp_path, "echo started; sleep 5; echo never", SpillPolicy(tmp_path / "spill"), timeout_s=1)
    assert out.timed_out and out.exit_code is None
    assert out.output == "started\n"
    assert 1.0 <= out.duration_s < 4
    rendered = render_outcome(out)
    assert "TIMEOUT" in rendered and f"{out.duration_s:.2f}s" in rendered


def test_timeout_must_be_positive(tmp_path):
    with pytest.raises(ValueError):
        shell_execute(tmp_path, "true", SpillPolicy(tmp_path / "spill"), timeout_s=0)


def test_spill_boundary_property(tmp_path):
    rng = random.Random(1234)
    policy = SpillPolicy(tmp_path / "spill")
    for i, n in enumerate(rng.randint(199_990, 200_010) for _ in range(12)):
        out = shell_execute(tmp_path, emit(n), policy, call_id=f"p{i}")
        assert out.spilled == (-(-n // 4) > 50_000)


def test_render_outcome_inline_contains_exit_and_output():
    out = CommandOutcome("echo ok", 0, 0.25, False, 3, output="ok\n")
    text = render_outcome(out)
    assert "exit: 0" in text and "ok" in text


@pytest.mark.parametrize(
    "name,outcome",
    [
        ("outcome_inline.txt", CommandOutcome("echo ok", 0, 0.25, False, 3, output="ok\n")),
        (
            "outcome_spilled.txt",
            CommandOutcome("make big", 0, 1.5, False, 200_004, spill_path="/task/spill/call-7.out",
                           head_excerpt="HEAD-1", tail_excerpt="TAIL-9"),
        ),
        (
            "outcome_timeout.txt",
            CommandOutcome("pytest", None, 300.02, True, 17, output="running tests...\n", timeout_s=300),
        ),
    ],
)
def test_render_outcome_golden(name, outcome):
    assert render_outcome(outcome).encode() == (GOLDEN / name).read_bytes()
