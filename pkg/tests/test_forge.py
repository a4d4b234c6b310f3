import difflib
import itertools
import json
import subprocess
import threading
from pathlib import Path

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from scenarios import CALC, check_pr_sequence, fresh_pr_forge, push_branch, review_scenario
from teamflow import ForgeError, InlineComment, init_forge, open_forge
from teamflow.cli import cmd_pr_review

GOLDEN = Path(__file__).parent / "golden"


def rev(repo_dir, expr):
    return subprocess.run(["git", "rev-parse", expr], cwd=repo_dir, capture_output=True, text=True, check=True).stdout.strip()


def oracle_hunk_lines(old, new):
    """Changed lines (with +/- prefixes) from difflib, as an independent diff."""
    return [
        l for l in difflib.unified_diff(old.splitlines(), new.splitlines(), lineterm="")
        if l[:1] in "+-" and l[:3] not in ("+++", "---")
    ]


@pytest.fixture
def pr_forge(forge, tmp_path):
    push_branch(forge, "fix/add", {"calc.py": CALC.replace("a - b", "a + b")}, tmp_path)
    forge.open_pr("engineer", "T1: fix add", "fix/add")
    return forge


# -- init -------------------------------------------------------------------

def test_init_creates_task_branch_at_source_head(forge, toy_repo):
    assert forge.task_base_branch == "task/T1"
    assert forge.branch_head("task/T1") == rev(toy_repo, "HEAD")
    assert rev(forge.bare, "task/T1^{tree}") == rev(toy_repo, "HEAD^{tree}")


def test_init_twice_is_an_error(forge, toy_repo):
    with pytest.raises(ForgeError, match="already exists"):
        init_forge(toy_repo, "T1", forge.storage)


def test_second_task_in_same_fork(forge, toy_repo):
    other = init_forge(toy_repo, "T2", forge.storage)
    assert other.branch_head("task/T2") == forge.branch_head("task/T1")


def test_init_rejects_non_repository(tmp_path):
    (tmp_path / "plain").mkdir()
    with pytest.raises(ForgeError):
        init_forge(tmp_path / "plain", "T1", tmp_path / "forge")


def test_open_forge_roundtrip(forge):
    again = open_forge(forge.storage)
    assert (again.task_base_branch, again.id) == (forge.task_base_branch, forge.id)
    with pytest.raises(ForgeError):
        open_forge(forge.storage.parent / "missing")


# -- issues -----------------------------------------------------------------

def test_issues(forge):
    first = forge.create_issue("researcher", "add() is wrong", "details")
    second = forge.create_issue("researcher", "another")
    assert (first.number, second.number) == (1, 2)
    assert forge.get_issue(1).author == "researcher" and forge.get_issue(1).state == "open"
    forge.close_issue("manager", 1)
    assert forge.get_issue(1).state == "closed"
    with pytest.raises(ForgeError):
        forge.create_issue("researcher", "  ")
    with pytest.raises(ForgeError):
        forge.get_issue(9)


# -- pull requests ----------------------------------------------------------

def test_open_pr(pr_forge):
    pr = pr_forge.get_pr(1)
    assert (pr.state, pr.author, pr.target_branch) == ("open", "engineer", "task/T1")
    assert "T1" in pr.title
    assert pr.head_commit == pr_forge.branch_head("fix/add")


def test_open_pr_errors(forge, tmp_path):
    with pytest.raises(ForgeError):
        forge.open_pr("engineer", "t", "task/T1", "task/T1")
    with pytest.raises(ForgeError, match="does not exist"):
        forge.open_pr("engineer", "t", "fix/ghost")
    subprocess.run(["git", "branch", "fix/same", "task/T1"], cwd=forge.bare, check=True)
    with pytest.raises(ForgeError, match="no changes"):
        forge.open_pr("engineer", "t", "fix/same")
    push_branch(forge, "fix/x", {"x.txt": "x\n"}, tmp_path)
    forge.open_pr("engineer", "t", "fix/x")
    with pytest.raises(ForgeError, match="already exists"):
        forge.open_pr("engineer", "t again", "fix/x")


def test_head_commit_tracks_branch(pr_forge, tmp_path):
    new = push_branch(pr_forge, "fix/add", {"more.txt": "m\n"}, tmp_path)
    assert pr_forge.get_pr(1).head_commit == new


def test_single_line_diff_matches_oracle(pr_forge):
    diff = pr_forge.get_diff(1)
    body = [l for l in diff.splitlines() if l[:1] in "+-" and l[:3] not in ("+++", "---")]
    assert sum(l.startswith("@@") for l in diff.splitlines()) == 1
    assert body == oracle_hunk_lines(CALC, CALC.replace("a - b", "a + b"))


def test_two_file_diff_sorted_by_path(forge, tmp_path):
    push_branch(forge, "fix/two", {"zeta.py": "z = 1\n", "alpha.py": "a = 1\n"}, tmp_path)
    forge.open_pr("engineer", "T1: two", "fix/two")
    sections = [l.split(" b/")[-1] for l in forge.get_diff(1).splitlines() if l.startswith("diff --git")]
    assert sections == sorted(["zeta.py", "alpha.py"])


def test_diff_of_closed_pr_is_an_error(pr_forge):
    pr_forge.close_pr("manager", 1)
    with pytest.raises(ForgeError, match="closed"):
        pr_forge.get_diff(1)


# -- reviews ----------------------------------------------------------------

def test_request_changes_then_approve(pr_forge):
    pr_forge.submit_review("reviewer", 1, "request_changes", "fix", [
        InlineComment("calc.py", 1, "name?"),
        InlineComment("calc.py", 2, "sum"),
    ])
    assert pr_forge.pr_state(1).state == "changes_requested"
    assert [t.resolved for t in pr_forge.threads(1)] == [False, False]
    pr_forge.submit_review("reviewer", 1, "approve", "ok")
    status = pr_forge.pr_state(1)
    assert (status.state, status.approved_by) == ("approved", "reviewer")
    assert [r.verdict for r in pr_forge.reviews(1)] == ["request_changes", "approve"]


def test_self_approval_rejected(pr_forge):
    for verdict in ("approve", "request_changes"):
        with pytest.raises(ForgeError, match="self-approval"):
            pr_forge.submit_review("engineer", 1, verdict, "")
    assert pr_forge.pr_state(1).state == "open"


def test_approve_with_inline_rejected(pr_forge):
    with pytest.raises(ForgeError):
        pr_forge.submit_review("reviewer", 1, "approve", "", [InlineComment("calc.py", 1, "nit")])
    assert pr_forge.reviews(1) == []


def test_review_on_closed_pr(pr_forge):
    pr_forge.close_pr("manager", 1)
    with pytest.raises(ForgeError, match="closed"):
        pr_forge.submit_review("reviewer", 1, "comment", "late")


@pytest.mark.parametrize(
    "comment,problem",
    [
        (InlineComment("test_calc.py", 1, "not in diff"), "not part of the diff"),
        (InlineComment("calc.py", 3, "past the end"), "outside"),
        (InlineComment("calc.py", 0, "zero"), "outside"),
        (InlineComment("calc.py", 1, "  "), "non-empty"),
    ],
)
def test_inline_validation(pr_forge, comment, problem):
    with pytest.raises(ForgeError, match=problem):
        pr_forge.submit_review("reviewer", 1, "request_changes", "", [comment])


def test_approval_survives_new_commits(pr_forge, tmp_path):
    pr_forge.submit_review("reviewer", 1, "approve", "ok")
    push_branch(pr_forge, "fix/add", {"late.txt": "late\n"}, tmp_path)
    assert pr_forge.pr_state(1).state == "approved"


def test_pr_state_unknown(forge):
    with pytest.raises(ForgeError):
        forge.pr_state(99)


# -- threads ----------------------------------------------------------------

def test_threads_render_empty(pr_forge):
    assert pr_forge.list_threads(1) == ""


def test_thread_with_two_comments_renders_three_lines(pr_forge):
    t = pr_forge.comment("reviewer", 1, "calc.py", 2, "why subtract?")
    pr_forge.reply_thread("engineer", t.thread_id, "fixed")
    assert pr_forge.list_threads(1).splitlines() == [
        "T1 calc.py:2 [open]",
        "reviewer: why subtract?",
        "engineer: fixed",
    ]


def test_reply_and_resolve_lifecycle(pr_forge):
    t = pr_forge.comment("reviewer", 1, "calc.py", 2, "x").thread_id
    pr_forge.resolve_thread("engineer", t)
    pr_forge.resolve_thread("engineer", t)
    assert pr_forge.threads(1)[0].resolved
    pr_forge.reply_thread("reviewer", t, "not quite")
    thread = pr_forge.threads(1)[0]
    assert not thread.resolved and len(thread.comments) == 2
    with pytest.raises(ForgeError):
        pr_forge.reply_thread("reviewer", 42, "?")
    with pytest.raises(ForgeError):
        pr_forge.resolve_thread("reviewer", 42)


def test_unresolved_filter_matches_store(forge, tmp_path):
    review_scenario(forge, tmp_path)
    records = [json.loads(l) for l in forge.store_path.read_text().splitlines()]
    resolved = {r["thread"] for r in records if r["op"] == "resolve"}
    opened = {t for r in records if r["op"] == "review" for t in r["threads"]}
    headers = [l for l in forge.list_threads(1, "unresolved").splitlines() if l.startswith("T")]
    assert len(headers) == len(opened - resolved) == 1


def test_pr_review_view_golden(forge, tmp_path, capsys):
    review_scenario(forge, tmp_path)
    task_dir = forge.storage.parent
    for args, golden in ((["1"], "pr_review_view.txt"), (["1", "--unresolved"], "pr_review_view_unresolved.txt")):
        assert cmd_pr_review("view", args, task_dir=task_dir) == 0
        assert capsys.readouterr().out.encode() == (GOLDEN / golden).read_bytes()


def test_rendering_is_byte_stable(forge, tmp_path):
    review_scenario(forge, tmp_path)
    first = forge.list_threads(1)
    assert open_forge(forge.storage).list_threads(1) == first


# -- properties -------------------------------------------------------------

EVENTS = st.sampled_from(["approve", "request_changes", "comment", "close"])
ACTORS = st.sampled_from(["reviewer", "engineer"])
_STORES = itertools.count()


@pytest.fixture(scope="module")
def shared_fork(tmp_path_factory):
    from scenarios import make_toy_repo

    base = tmp_path_factory.mktemp("sm")
    fork = init_forge(make_toy_repo(base / "src"), "T1", base / "forge")
    push_branch(fork, "fix/add", {"calc.py": CALC.replace("a - b", "a + b")}, base)
    return fork, base


@settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(ops=st.lists(st.tuples(EVENTS, ACTORS), max_size=8))
def test_state_machine_matches_reference(shared_fork, ops):
    fork, base = shared_fork
    repo = fresh_pr_forge(fork, base / f"store-{next(_STORES)}")
    assert check_pr_sequence(repo, ops) == []


def test_concurrent_comment_reviews(pr_forge):
    errors = []

    def worker(i):
        try:
            open_forge(pr_forge.storage).submit_review(f"reviewer{i}", 1, "comment", f"note {i}")
        except Exception as exc:  # pragma: no cover - surfaced via assertion below
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert errors == []
    reviews = pr_forge.reviews(1)
    assert len(reviews) == 8 and len({r.id for r in reviews}) == 8
