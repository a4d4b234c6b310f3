"""Local git-backed forge: issues, pull requests, reviews, and inline threads.

A forge lives in one storage directory::

    <storage>/repo.git      bare fork of the source repository
    <storage>/meta.json     fork metadata (source, default branch, task branches)
    <storage>/store.jsonl   append-only artifact records, replayed on every read
    <storage>/.lock         writer lock; all mutations are serialized per repo

Actors are plain role names, so every artifact is attributed to the agent role
that produced it.
"""

from __future__ import annotations

import fcntl
import json
import os
import shutil
import subprocess
import tempfile
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ForgeError

PR_STATES = ("open", "changes_requested", "approved", "closed")
VERDICTS = ("approve", "request_changes", "comment")

# (state, event) -> next state; anything absent is rejected
TRANSITIONS = {
    ("open", "approve"): "approved",
    ("open", "request_changes"): "changes_requested",
    ("open", "comment"): "open",
    ("open", "close"): "closed",
    ("changes_requested", "approve"): "approved",
    ("changes_requested", "request_changes"): "changes_requested",
    ("changes_requested", "comment"): "changes_requested",
    ("changes_requested", "close"): "closed",
    ("approved", "comment"): "approved",
    ("approved", "close"): "closed",
    ("closed", "close"): "closed",
}

_thread_locks: dict[str, threading.Lock] = {}
_thread_locks_guard = threading.Lock()


def git(*args: str, cwd: str | os.PathLike | None = None, check: bool = True, env=None) -> str:
    proc = subprocess.run(
        ["git", *args],
        cwd=cwd,
        capture_output=True,
        text=True,
        env=env,
    )
    if check and proc.returncode != 0:
        raise ForgeError(f"git {' '.join(args)} failed: {proc.stderr.strip() or proc.stdout.strip()}")
    return proc.stdout


def normalize_verdict(verdict: str) -> str:
    v = verdict.replace("-", "_").lower()
    if v not in VERDICTS:
        raise ForgeError(f"unknown verdict {verdict!r}; use approve, request_changes or comment")
    return v


@dataclass
class Issue:
    number: int
    title: str
    body: str
    author: str
    state: str = "open"


@dataclass
class PullRequest:
    number: int
    title: str
    body: str
    author: str
    source_branch: str
    target_branch: str
    state: str = "open"
    head_commit: str = ""
    approved_by: str | None = None
    merged: bool = False


@dataclass
class InlineComment:
    file_path: str
    line: int
    body: str


@dataclass
class InlineThread:
    thread_id: int
    pr_number: int
    file_path: str
    line: int
    comments: list[tuple[str, str]] = field(default_factory=list)
    resolved: bool = False
    review_id: int | None = None


@dataclass
class Review:
    id: int
    pr_number: int
    reviewer: str
    verdict: str
    body: str
    inline: list[InlineComment] = field(default_factory=list)


@dataclass(frozen=True)
class PRStatus:
    state: str
    head_commit: str
    approved_by: str | None


@dataclass
class _Store:
    issues: dict[int, Issue] = field(default_factory=dict)
    prs: dict[int, PullRequest] = field(default_factory=dict)
    reviews: list[Review] = field(default_factory=list)
    threads: dict[int, InlineThread] = field(default_factory=dict)

    def apply(self, rec: dict) -> None:
        op = rec["op"]
        if op == "issue":
            self.issues[rec["number"]] = Issue(rec["number"], rec["title"], rec["body"], rec["author"])
        elif op == "issue_state":
            self.issues[rec["number"]].state = rec["state"]
        elif op == "pr":
            self.prs[rec["number"]] = PullRequest(
                rec["number"], rec["title"], rec["body"], rec["author"], rec["source"], rec["target"]
            )
        elif op == "review":
            inline = [InlineComment(c["file"], c["line"], c["body"]) for c in rec["inline"]]
            self.reviews.append(Review(rec["id"], rec["pr"], rec["actor"], rec["verdict"], rec["body"], inline))
            pr = self.prs[rec["pr"]]
            pr.state = TRANSITIONS[(pr.state, rec["verdict"])]
            if rec["verdict"] == "approve":
                pr.approved_by = rec["actor"]
            for c, tid in zip(rec["inline"], rec["threads"]):
                self.threads[tid] = InlineThread(tid, rec["pr"], c["file"], c["line"], [(rec["actor"], c["body"])], review_id=rec["id"])
        elif op == "thread":
            self.threads[rec["id"]] = InlineThread(rec["id"], rec["pr"], rec["file"], rec["line"], [(rec["actor"], rec["body"])])
        elif op == "reply":
            t = self.threads[rec["thread"]]
            t.comments.append((rec["actor"], rec["body"]))
            t.resolved = False
        elif op == "resolve":
            self.threads[rec["thread"]].resolved = True
        elif op == "close":
            self.prs[rec["pr"]].state = "closed"
        elif op == "merge":
            pr = self.prs[rec["pr"]]
            pr.state, pr.merged = "closed", True
        else:
            raise ValueError(f"unknown record op {op!r}")


@dataclass
class ForgeRepo:
    storage: Path
    task_base_branch: str
    default_branch: str = "main"
    id: str = ""

    @property
    def bare(self) -> Path:
        return self.storage / "repo.git"

    @property
    def store_path(self) -> Path:
        return self.storage / "store.jsonl"

    # -- storage ---------------------------------------------------------

    def _load(self) -> _Store:
        st = _Store()
        if not self.store_path.exists():
            return st
        with open(self.store_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    st.apply(json.loads(line))
                except (ValueError, KeyError, TypeError) as exc:
                    raise ForgeError(f"corrupt forge store {self.store_path}:{lineno}: {exc}") from None
        return st

    @contextmanager
    def _mutate(self) -> Iterator[tuple[_Store, list[dict]]]:
        key = str(self.storage.resolve())
        with _thread_locks_guard:
            tlock = _thread_locks.setdefault(key, threading.Lock())
        with tlock, open(self.storage / ".lock", "a") as lockfile:
            fcntl.flock(lockfile, fcntl.LOCK_EX)
            try:
                st = self._load()
                pending: list[dict] = []
                yield st, pending
                if pending:
                    with open(self.store_path, "a", encoding="utf-8") as fh:
                        for rec in pending:
                            fh.write(json.dumps(rec, sort_keys=True) + "\n")
                        fh.flush()
                        os.fsync(fh.fileno())
            finally:
                fcntl.flock(lockfile, fcntl.LOCK_UN)

    @contextmanager
    def write_lock(self):
        """Hold the per-repo writer lock (used to serialize branch pushes)."""
        with self._mutate():
            yield

    # -- git helpers -----------------------------------------------------

    def branch_head(self, branch: str) -> str | None:
        out = git("rev-parse", "--verify", "--quiet", f"refs/heads/{branch}^{{commit}}", cwd=self.bare, check=False)
        return out.strip() or None

    def branches(self) -> list[str]:
        out = git("for-each-ref", "--format=%(refname:short)", "refs/heads", cwd=self.bare)
        return sorted(out.split())

    def _new_file_lines(self, branch: str, path: str) -> int | None:
        proc = subprocess.run(
            ["git", "cat-file", "-p", f"refs/heads/{branch}:{path}"], cwd=self.bare, capture_output=True
        )
        if proc.returncode != 0:
            return None
        data = proc.stdout
        return data.count(b"\n") + (0 if data.endswith(b"\n") or not data else 1)

    def _changed_paths(self, pr: PullRequest) -> list[str]:
        out = git(
            "-c", "core.quotePath=false", "diff", "--no-renames", "--name-only",
            f"refs/heads/{pr.target_branch}", f"refs/heads/{pr.source_branch}", cwd=self.bare,
        )
        return out.splitlines()

    def _with_head(self, pr: PullRequest) -> PullRequest:
        pr.head_commit = self.branch_head(pr.source_branch) or ""
        return pr

    # -- issues ----------------------------------------------------------

    def create_issue(self, actor: str, title: str, body: str = "") -> Issue:
        if not title or not title.strip():
            raise ForgeError("issue title must be non-empty")
        with self._mutate() as (st, out):
            number = max(st.issues, default=0) + 1
            out.append({"op": "issue", "number": number, "title": title, "body": body, "author": actor})
        return Issue(number, title, body, actor)

    def close_issue(self, actor: str, number: int) -> None:
        with self._mutate() as (st, out):
            if number not in st.issues:
                raise ForgeError(f"issue #{number} does not exist")
            out.append({"op": "issue_state", "number": number, "state": "closed", "actor": actor})

    def issues(self) -> list[Issue]:
        return sorted(self._load().issues.values(), key=lambda i: i.number)

    def get_issue(self, number: int) -> Issue:
        try:
            return self._load().issues[number]
        except KeyError:
            raise ForgeError(f"issue #{number} does not exist") from None

    # -- pull requests ---------------------------------------------------

    def open_pr(self, actor: str, title: str, source_branch: str, target_branch: str | None = None, body: str = "") -> PullRequest:
        target_branch = target_branch or self.task_base_branch
        if not title or not title.strip():
            raise ForgeError("pull request title must be non-empty")
        if source_branch == target_branch:
            raise ForgeError("source and target branch must differ")
        with self._mutate() as (st, out):
            src, dst = self.branch_head(source_branch), self.branch_head(target_branch)
            if src is None:
                raise ForgeError(f"branch {source_branch!r} does not exist; push it first")
            if dst is None:
                raise ForgeError(f"branch {target_branch!r} does not exist")
            if src == dst:
                raise ForgeError(f"no changes: {source_branch} and {target_branch} point at the same commit")
            for pr in st.prs.values():
                if pr.source_branch == source_branch and pr.target_branch == target_branch and pr.state != "closed":
                    raise ForgeError(f"pull request #{pr.number} already exists for {source_branch}")
            number = max(st.prs, default=0) + 1
            out.append({
                "op": "pr", "number": number, "title": title, "body": body, "author": actor,
                "source": source_branch, "target": target_branch,
            })
        return PullRequest(number, title, body, actor, source_branch, target_branch, head_commit=src)

    def pulls(self) -> list[PullRequest]:
        return [self._with_head(p) for p in sorted(self._load().prs.values(), key=lambda p: p.number)]

    def get_pr(self, number: int) -> PullRequest:
        try:
            return self._with_head(self._load().prs[number])
        except KeyError:
            raise ForgeError(f"pull request #{number} does not exist") from None

    def pr_state(self, number: int) -> PRStatus:
        pr = self.get_pr(number)
        return PRStatus(pr.state, pr.head_commit, pr.approved_by if pr.state == "approved" else None)

    def get_diff(self, number: int) -> str:
        pr = self.get_pr(number)
        if pr.state == "closed":
            raise ForgeError(f"pull request #{number} is closed")
        return git(
            "-c", "core.quotePath=false", "diff", "--no-color", "--no-ext-diff", "--no-renames",
            f"refs/heads/{pr.target_branch}", f"refs/heads/{pr.source_branch}", cwd=self.bare,
        )

    def _check_inline(self, pr: PullRequest, comments: Iterable[InlineComment]) -> None:
        changed = set(self._changed_paths(pr))
        for c in comments:
            if not c.body.strip():
                raise ForgeError("inline comment body must be non-empty")
            if c.file_path not in changed:
                raise ForgeError(f"{c.file_path} is not part of the diff of PR #{pr.number}")
            n = self._new_file_lines(pr.source_branch, c.file_path)
            if n is None:
                raise ForgeError(f"{c.file_path} was deleted; comment on an existing line")
            if not 1 <= c.line <= max(n, 1):
                raise ForgeError(f"line {c.line} is outside {c.file_path} (1..{n})")

    def submit_review(
        self,
        actor: str,
        pr_number: int,
        verdict: str,
        body: str = "",
        inline: Iterable[InlineComment] = (),
    ) -> Review:
        verdict = normalize_verdict(verdict)
        inline = list(inline)
        if verdict == "approve" and inline:
            raise ForgeError("an approving review cannot add inline comments; request changes or comment instead")
        with self._mutate() as (st, out):
            pr = st.prs.get(pr_number)
            if pr is None:
                raise ForgeError(f"pull request #{pr_number} does not exist")
            if pr.state == "closed":
                raise ForgeError(f"pull request #{pr_number} is closed")
            if actor == pr.author and verdict != "comment":
                raise ForgeError("self-approval is not allowed: the author of a pull request cannot approve or request changes on it")
            if (pr.state, verdict) not in TRANSITIONS:
                raise ForgeError(f"pull request #{pr_number} is already approved; approval is final")
            self._check_inline(pr, inline)
            review_id = len(st.reviews) + 1
            first = max(st.threads, default=0) + 1
            out.append({
                "op": "review", "id": review_id, "pr": pr_number, "actor": actor, "verdict": verdict, "body": body,
                "inline": [{"file": c.file_path, "line": c.line, "body": c.body} for c in inline],
                "threads": list(range(first, first + len(inline))),
            })
        return Review(review_id, pr_number, actor, verdict, body, inline)

    def reviews(self, pr_number: int | None = None) -> list[Review]:
        return [r for r in self._load().reviews if pr_number is None or r.pr_number == pr_number]

    def close_pr(self, actor: str, number: int) -> None:
        with self._mutate() as (st, out):
            if number not in st.prs:
                raise ForgeError(f"pull request #{number} does not exist")
            if st.prs[number].state != "closed":
                out.append({"op": "close", "pr": number, "actor": actor})

    def merge_pr(self, actor: str, number: int) -> str:
        """Merge an approved PR into its target with a merge commit; returns the new target head."""
        with self._mutate() as (st, out):
            pr = st.prs.get(number)
            if pr is None:
                raise ForgeError(f"pull request #{number} does not exist")
            if pr.state != "approved":
                raise ForgeError(f"pull request #{number} is not approved")
            with tempfile.TemporaryDirectory() as tmp:
                env = dict(os.environ, GIT_AUTHOR_NAME=actor, GIT_AUTHOR_EMAIL=f"{actor}@agents.local",
                           GIT_COMMITTER_NAME=actor, GIT_COMMITTER_EMAIL=f"{actor}@agents.local")
                git("clone", "--quiet", "--branch", pr.target_branch, str(self.bare), tmp, env=env)
                git("fetch", "--quiet", "origin", pr.source_branch, cwd=tmp, env=env)
                git("merge", "--no-ff", "--quiet", "-m", f"Merge pull request #{number}", "FETCH_HEAD", cwd=tmp, env=env)
                git("push", "--quiet", "origin", f"HEAD:refs/heads/{pr.target_branch}", cwd=tmp, env=env)
                head = git("rev-parse", "HEAD", cwd=tmp).strip()
            out.append({"op": "merge", "pr": number, "actor": actor})
        return head

    # -- threads ---------------------------------------------------------

    def comment(self, actor: str, pr_number: int, file_path: str, line: int, body: str) -> InlineThread:
        """Open a standalone inline thread (outside any review)."""
        with self._mutate() as (st, out):
            pr = st.prs.get(pr_number)
            if pr is None:
                raise ForgeError(f"pull request #{pr_number} does not exist")
            if pr.state == "closed":
                raise ForgeError(f"pull request #{pr_number} is closed")
            self._check_inline(pr, [InlineComment(file_path, line, body)])
            tid = max(st.threads, default=0) + 1
            out.append({"op": "thread", "id": tid, "pr": pr_number, "file": file_path, "line": line, "actor": actor, "body": body})
        return InlineThread(tid, pr_number, file_path, line, [(actor, body)])

    def threads(self, pr_number: int, unresolved_only: bool = False) -> list[InlineThread]:
        st = self._load()
        if pr_number not in st.prs:
            raise ForgeError(f"pull request #{pr_number} does not exist")
        found = [t for t in st.threads.values() if t.pr_number == pr_number]
        if unresolved_only:
            found = [t for t in found if not t.resolved]
        return sorted(found, key=lambda t: t.thread_id)

    def list_threads(self, pr_number: int, filter: str = "all") -> str:
        if filter not in ("all", "unresolved"):
            raise ForgeError(f"unknown thread filter {filter!r}")
        return render_threads(self.threads(pr_number, filter == "unresolved"))

    def reply_thread(self, actor: str, thread_id: int, body: str) -> None:
        if not body.strip():
            raise ForgeError("reply body must be non-empty")
        with self._mutate() as (st, out):
            if thread_id not in st.threads:
                raise ForgeError(f"thread T{thread_id} does not exist")
            out.append({"op": "reply", "thread": thread_id, "actor": actor, "body": body})

    def resolve_thread(self, actor: str, thread_id: int) -> None:
        with self._mutate() as (st, out):
            t = st.threads.get(thread_id)
            if t is None:
                raise ForgeError(f"thread T{thread_id} does not exist")
            if not t.resolved:
                out.append({"op": "resolve", "thread": thread_id, "actor": actor})


def render_threads(threads: Iterable[InlineThread]) -> str:
    """Compact thread rendering: a header line per thread, then one line per comment."""
    blocks = []
    for t in threads:
        lines = [f"T{t.thread_id} {t.file_path}:{t.line} [{'resolved' if t.resolved else 'open'}]"]
        for author, body in t.comments:
            lines.append(f"{author}: {body}".replace("\n", "\n  "))
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)


def _meta_path(storage: Path) -> Path:
    return storage / "meta.json"


def init_forge(source_repo: str | os.PathLike, task_id: str, storage: str | os.PathLike) -> ForgeRepo:
    """Fork ``source_repo`` into ``storage`` and create the task base branch ``task/<task_id>``."""
    if not task_id:
        raise ForgeError("task_id must be non-empty")
    source = Path(source_repo)
    storage = Path(storage)
    head = git("rev-parse", "--verify", "HEAD^{commit}", cwd=source, check=False).strip() if source.is_dir() else ""
    if not head:
        raise ForgeError(f"{source} is not a git repository with at least one commit")
    branch = f"task/{task_id}"
    bare = storage / "repo.git"
    if bare.exists():
        repo = open_forge(storage, task_id)
        if repo.branch_head(branch):
            raise ForgeError(f"branch {branch} already exists in the fork")
        git("fetch", "--quiet", str(source.resolve()), f"{head}:refs/heads/{branch}", cwd=bare)
        return repo
    storage.mkdir(parents=True, exist_ok=True)
    default = git("symbolic-ref", "--quiet", "--short", "HEAD", cwd=source, check=False).strip() or "main"
    try:
        git("clone", "--quiet", "--bare", str(source.resolve()), str(bare))
        git("branch", branch, head, cwd=bare)
    except ForgeError:
        shutil.rmtree(bare, ignore_errors=True)
        raise
    _meta_path(storage).write_text(
        json.dumps({"source": str(source.resolve()), "default_branch": default, "task_id": task_id}, indent=2) + "\n",
        encoding="utf-8",
    )
    (storage / ".lock").touch()
    return ForgeRepo(storage, branch, default, task_id)


def open_forge(storage: str | os.PathLike, task_id: str | None = None) -> ForgeRepo:
    storage = Path(storage)
    if not (storage / "repo.git").is_dir() or not _meta_path(storage).exists():
        raise ForgeError(f"no forge store at {storage}")
    try:
        meta = json.loads(_meta_path(storage).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ForgeError(f"corrupt forge metadata in {storage}: {exc}") from None
    task_id = task_id or meta["task_id"]
    return ForgeRepo(storage, f"task/{task_id}", meta.get("default_branch", "main"), task_id)
