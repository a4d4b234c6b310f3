import difflib
import subprocess

import pytest

from scenarios import CALC
from teamflow import (
    ProvisioningHook,
    SpillPolicy,
    WorkspaceError,
    create_workspace,
    destroy_workspace,
    shell_execute,
    snapshot_branch,
)
from teamflow.errors import SnapshotConflict


def tree_files(repo, ref):
    """Map path -> bytes for every blob in ``ref``, read straight from git plumbing."""
    names = subprocess.run(
        ["git", "ls-tree", "-r", "--name-only", ref], cwd=repo.bare, capture_output=True, text=True, check=True
    ).stdout.split()
    return {
        n: subprocess.run(["git", "cat-file", "-p", f"{ref}:{n}"], cwd=repo.bare, capture_output=True, check=True).stdout
        for n in names
    }


def test_workspace_is_a_clone_of_base(forge):
    ws = create_workspace(forge, forge.task_base_branch, "engineer")
    assert (ws.root / "calc.py").read_bytes() == CALC.encode()
    assert ws.root == forge.storage.parent / "ws" / "engineer"


def test_forge_tools_on_path(forge):
    ws = create_workspace(forge, forge.task_base_branch, "engineer")
    out = shell_execute(ws, "for t in git forge pr-review; do command -v $t; done | wc -l", SpillPolicy(ws.root.parent / "spill"))
    assert out.output.strip() == "3"


def test_workspaces_are_isolated(forge):
    eng = create_workspace(forge, forge.task_base_branch, "engineer")
    rev = create_workspace(forge, forge.task_base_branch, "reviewer")
    assert eng.root != rev.root
    (eng.root / "calc.py").write_text("changed\n")
    assert (rev.root / "calc.py").read_text() == CALC


def test_one_workspace_per_owner(forge):
    create_workspace(forge, forge.task_base_branch, "engineer")
    with pytest.raises(WorkspaceError):
        create_workspace(forge, forge.task_base_branch, "engineer")


def test_missing_base_ref(forge):
    with pytest.raises(WorkspaceError):
        create_workspace(forge, "no/such-branch", "engineer")


def test_hook_failure_carries_exit_code(forge):
    with pytest.raises(WorkspaceError) as info:
        create_workspace(forge, forge.task_base_branch, "engineer", ProvisioningHook(("false",)))
    assert info.value.exit_code == 1
    assert not (forge.storage.parent / "ws" / "engineer").exists()


def test_hooks_run_in_order(forge):
    hook = ProvisioningHook(("echo one > log.txt", "echo two >> log.txt"))
    ws = create_workspace(forge, forge.task_base_branch, "engineer", hook)
    assert (ws.root / "log.txt").read_text() == "one\ntwo\n"


def test_snapshot_publishes_one_file_diff(forge):
    ws = create_workspace(forge, forge.task_base_branch, "engineer")
    (ws.root / "calc.py").write_text(CALC.replace("a - b", "a + b"))
    result = snapshot_branch(ws, "fix/issue-1", "Fix add")
    assert not result.unchanged
    assert forge.branch_head("fix/issue-1") == result.commit
    base = tree_files(forge, forge.task_base_branch)
    head = tree_files(forge, "fix/issue-1")
    changed = sorted(p for p in base.keys() | head.keys() if base.get(p) != head.get(p))
    assert changed == ["calc.py"]
    delta = [
        line
        for line in difflib.unified_diff(base["calc.py"].decode().splitlines(), head["calc.py"].decode().splitlines(), lineterm="")
        if line[:1] in "+-" and line[:3] not in ("+++", "---")
    ]
    assert delta == ["-    return a - b", "+    return a + b"]


def test_snapshot_without_changes_is_unchanged(forge):
    ws = create_workspace(forge, forge.task_base_branch, "engineer")
    result = snapshot_branch(ws, "fix/none", "nothing")
    assert result.unchanged and result.commit == forge.branch_head(forge.task_base_branch)
    (ws.root / "calc.py").write_text("x = 1\n")
    first = snapshot_branch(ws, "fix/none", "edit")
    again = snapshot_branch(ws, "fix/none", "edit again")
    assert again.unchanged and again.commit == first.commit


def test_sequential_snapshots_descend(forge):
    ws = create_workspace(forge, forge.task_base_branch, "engineer")
    (ws.root / "a.txt").write_text("1\n")
    first = snapshot_branch(ws, "fix/seq", "one")
    (ws.root / "a.txt").write_text("2\n")
    second = snapshot_branch(ws, "fix/seq", "two")
    assert subprocess.run(
        ["git", "merge-base", "--is-ancestor", first.commit, second.commit], cwd=forge.bare
    ).returncode == 0


def test_snapshot_conflict_asks_to_integrate(forge):
    eng = create_workspace(forge, forge.task_base_branch, "engineer")
    rev = create_workspace(forge, forge.task_base_branch, "reviewer")
    (eng.root / "a.txt").write_text("eng\n")
    snapshot_branch(eng, "fix/shared", "eng")
    (rev.root / "b.txt").write_text("rev\n")
    with pytest.raises(SnapshotConflict, match="integrate upstream"):
        snapshot_branch(rev, "fix/shared", "rev")


def test_destroy(forge):
    ws = create_workspace(forge, forge.task_base_branch, "engineer")
    (ws.root / "a.txt").write_text("kept\n")
    head = snapshot_branch(ws, "fix/keep", "keep").commit
    destroy_workspace(ws)
    assert not ws.root.exists()
    assert forge.branch_head("fix/keep") == head
    destroy_workspace(ws)
