"""Per-agent workspaces: separate clones of the forge repository.

Each workspace is a directory-scoped clone; the forge's bare repository is the
only state agents share. Version control and the forge CLI (``forge`` and
``pr-review`` shims under ``<task>/bin``) are on PATH for every command.
"""

from __future__ import annotations

import logging
import os
import shutil
import stat
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ForgeError, SnapshotConflict, WorkspaceError
from .forge import ForgeRepo, git

log = logging.getLogger(__name__)

_PACKAGE_PARENT = str(Path(__file__).resolve().parent.parent)


@dataclass(frozen=True)
class ProvisioningHook:
    commands: tuple[str, ...] = ()


@dataclass
class Workspace:
    id: str
    root: Path
    owner: str
    base_ref: str
    repo: ForgeRepo
    env: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class SnapshotResult:
    commit: str
    unchanged: bool


def install_cli_shims(bin_dir: Path) -> Path:
    """Write ``forge`` and ``pr-review`` launchers bound to this interpreter."""
    bin_dir.mkdir(parents=True, exist_ok=True)
    for name, entry in (("forge", "forge_main"), ("pr-review", "pr_review_main")):
        path = bin_dir / name
        path.write_text(
            "#!/bin/sh\n"
            f'exec "{sys.executable}" -c "import sys; from teamflow.cli import {entry}; '
            f'sys.exit({entry}(sys.argv[1:]))" "$@"\n',
            encoding="utf-8",
        )
        path.chmod(path.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    return bin_dir


def workspace_env(task_dir: Path, owner: str, root: Path, task_id: str = "") -> dict[str, str]:
    """Minimal environment for commands run inside a workspace."""
    bin_dir = task_dir / "bin"
    pythonpath = os.pathsep.join(p for p in (_PACKAGE_PARENT, os.environ.get("PYTHONPATH", "")) if p)
    env = {
        "PATH": f"{bin_dir}{os.pathsep}{os.environ.get('PATH', '/usr/bin:/bin')}",
        "HOME": os.environ.get("HOME", str(root)),
        "LANG": "C.UTF-8",
        "PYTHONDONTWRITEBYTECODE": "1",
        "PYTHONPATH": pythonpath,
        "TEAMFLOW_TASK_DIR": str(task_dir),
        "TEAMFLOW_TASK_ID": task_id,
        "TEAMFLOW_ACTOR": owner,
        "TEAMFLOW_WORKSPACE": str(root),
        "GIT_AUTHOR_NAME": owner,
        "GIT_AUTHOR_EMAIL": f"{owner}@agents.local",
        "GIT_COMMITTER_NAME": owner,
        "GIT_COMMITTER_EMAIL": f"{owner}@agents.local",
        "GIT_TERMINAL_PROMPT": "0",
    }
    return env


def create_workspace(
    repo: ForgeRepo,
    base_ref: str,
    owner: str,
    hook: ProvisioningHook = ProvisioningHook(),
    root: str | os.PathLike | None = None,
    task_dir: str | os.PathLike | None = None,
) -> Workspace:
    """Clone ``repo`` at ``base_ref`` into a fresh directory and run the provisioning hook.

    By default the workspace lives at ``<task>/ws/<owner>`` where ``<task>`` is
    the parent of the forge storage directory.
    """
    task_dir = Path(task_dir) if task_dir else repo.storage.parent
    root = Path(root) if root else task_dir / "ws" / owner
    if repo.branch_head(base_ref) is None:
        raise WorkspaceError(f"branch {base_ref!r} does not exist in the forge")
    if root.exists():
        raise WorkspaceError(f"workspace directory {root} already exists")
    root.parent.mkdir(parents=True, exist_ok=True)
    install_cli_shims(task_dir / "bin")
    env = workspace_env(task_dir, owner, root, repo.id)
    proc = subprocess.run(
        ["git", "clone", "--quiet", "--branch", base_ref, str(repo.bare), str(root)],
        capture_output=True,
        text=True,
        env=env,
    )
    if proc.returncode != 0:
        shutil.rmtree(root, ignore_errors=True)
        raise WorkspaceError(f"clone failed: {proc.stderr.strip()}", proc.returncode, proc.stderr)
    git("config", "user.name", owner, cwd=root)
    git("config", "user.email", f"{owner}@agents.local", cwd=root)
    for command in hook.commands:
        proc = subprocess.run(
            ["/bin/sh", "-c", command],
            cwd=root,
            env=env,
            stdin=subprocess.DEVNULL,
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
        )
        if proc.returncode != 0:
            shutil.rmtree(root, ignore_errors=True)
            raise WorkspaceError(
                f"provisioning command {command!r} exited with {proc.returncode}",
                proc.returncode,
                proc.stdout,
            )
    return Workspace(f"{repo.id}:{owner}", root, owner, base_ref, repo, env)


def current_branch(ws: Workspace) -> str | None:
    out = git("symbolic-ref", "--quiet", "--short", "HEAD", cwd=ws.root, check=False).strip()
    return out or None


def snapshot_branch(ws: Workspace, branch: str, message: str) -> SnapshotResult:
    """Commit all workspace changes and publish them as ``branch`` in the forge.

    Unchanged when nothing differs from the forge branch tip (or from the base
    branch when ``branch`` does not exist yet).
    """
    if not ws.root.is_dir():
        raise WorkspaceError(f"workspace {ws.root} does not exist")
    if current_branch(ws) != branch:
        git("checkout", "--quiet", "-B", branch, cwd=ws.root, env=ws.env or None)
    git("add", "-A", cwd=ws.root)
    if git("status", "--porcelain", cwd=ws.root).strip():
        git("commit", "--quiet", "-m", message, cwd=ws.root, env=ws.env or None)
    head = git("rev-parse", "HEAD", cwd=ws.root).strip()
    with ws.repo.write_lock():
        remote = ws.repo.branch_head(branch)
        reference = remote or ws.repo.branch_head(ws.base_ref)
        if head == reference:
            return SnapshotResult(head, True)
        if remote is not None:
            ancestor = subprocess.run(
                ["git", "merge-base", "--is-ancestor", remote, head], cwd=ws.root, capture_output=True
            ).returncode == 0
            if not ancestor:
                raise SnapshotConflict(
                    f"forge branch {branch} has commits your workspace lacks; "
                    f"run `git pull --rebase origin {branch}` to integrate upstream first, then publish again"
                )
        proc = subprocess.run(
            ["git", "push", "--quiet", "origin", f"HEAD:refs/heads/{branch}"],
            cwd=ws.root,
            capture_output=True,
            text=True,
            env=ws.env or None,
        )
        if proc.returncode != 0:
            raise SnapshotConflict(
                f"push to {branch} rejected: {proc.stderr.strip()}; integrate upstream first", proc.returncode, proc.stderr
            )
    return SnapshotResult(head, False)


def destroy_workspace(ws: Workspace) -> None:
    if not ws.root.exists():
        return
    try:
        shutil.rmtree(ws.root)
    except OSError as exc:
        log.warning("could not fully remove workspace %s: %s", ws.root, exc)


def reopen_workspace(repo: ForgeRepo, owner: str, task_dir: Path, branch: str | None, hook=ProvisioningHook()) -> Workspace:
    """Recreate a workspace from forge state, discarding whatever is on disk."""
    root = task_dir / "ws" / owner
    if root.exists():
        shutil.rmtree(root)
    ws = create_workspace(repo, repo.task_base_branch, owner, hook, root, task_dir)
    if branch and branch != repo.task_base_branch and repo.branch_head(branch):
        try:
            git("checkout", "--quiet", "-B", branch, f"origin/{branch}", cwd=ws.root)
        except ForgeError as exc:
            log.warning("could not check out %s in %s: %s", branch, root, exc)
    return ws
