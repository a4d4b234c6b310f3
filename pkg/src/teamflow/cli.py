"""Command-line entry points.

``teamflow run|resume|trace`` drive tasks; ``forge`` and ``pr-review`` expose
the forge to agents inside their workspaces (task directory and acting role
come from ``TEAMFLOW_TASK_DIR`` / ``TEAMFLOW_ACTOR`` unless given as flags).

Exit codes: 0 completed / success, 1 configuration or usage error, 2 task
failed or forge operation rejected.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .agent_core import AgentSpec, LiveProvider, LiveProviderConfig, ModelConfig, ScriptedProvider, read_traces, validate_team
from .context import CompactionPolicy
from .errors import ConfigError, ForgeError, ResumeError, TeamflowError
from .forge import InlineComment, open_forge
from .orchestrator import Limits, Policies, TaskRunner, TaskSpec, TaskState, load_task_spec
from .sandbox import ProvisioningHook

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


# -- team configuration --------------------------------------------------------


def default_config_path() -> Path:
    return Path(str(resources.files("teamflow") / "assets" / "team.toml"))


def _read_template(ref: str, base: Path) -> str:
    if ref.startswith("builtin:"):
        path = Path(str(resources.files("teamflow") / "assets" / "prompts" / ref[len("builtin:"):]))
    else:
        path = Path(ref) if Path(ref).is_absolute() else base / ref
    if not path.is_file():
        raise ConfigError(f"template {ref!r} not found (looked at {path})")
    return path.read_text(encoding="utf-8")


def _compaction(section: dict[str, Any], base: Path, fallback: CompactionPolicy) -> CompactionPolicy:
    prompt = fallback.summary_prompt
    if "summary_prompt" in section:
        prompt = _read_template(section["summary_prompt"], base)
    return CompactionPolicy(
        int(section.get("trigger_budget", fallback.trigger_budget)),
        int(section.get("retain_recent", fallback.retain_recent)),
        prompt,
    )


@dataclass
class TeamConfig:
    agents: list[AgentSpec]
    provider: Any
    policies: Policies
    limits: Limits
    source: Path | None = None
    raw: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "TeamConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data, path.parent, path)

    @classmethod
    def from_dict(cls, data: dict[str, Any], base: Path, source: Path | None = None) -> "TeamConfig":
        try:
            return cls._build(data, base, source)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid team config: {exc!r}") from None

    @classmethod
    def _build(cls, data, base, source):
        prov = data.get("provider", {})
        kind = prov.get("kind", "scripted" if "fixture" in prov else "live")
        if kind == "scripted":
            if "fixture" not in prov:
                raise ConfigError("scripted provider needs a fixture path")
            fixture = Path(prov["fixture"])
            fixture = fixture if fixture.is_absolute() else base / fixture
            if not fixture.is_file():
                raise ConfigError(f"fixture {fixture} not found")
            provider = ScriptedProvider.from_file(fixture)
        elif kind == "live":
            provider = LiveProvider(LiveProviderConfig(
                prov.get("base_url", "https://api.openai.com/v1"),
                prov.get("api_key_env", "OPENAI_API_KEY"),
                prov.get("model_name", ""),
                prov.get("reasoning_effort", "medium"),
            ))
        else:
            raise ConfigError(f"unknown provider kind {kind!r}")

        compaction = _compaction(data.get("compaction", {}), base, CompactionPolicy())
        agents, by_role = [], {}
        for entry in data.get("agents", []):
            role = entry["role"]
            agents.append(AgentSpec(
                role=role,
                objective_prompt=_read_template(entry["prompt"], base),
                model=ModelConfig(entry["model"], entry.get("reasoning_effort", "medium"), entry.get("provider", "default")),
                tool_names=frozenset(entry.get("tools", [])),
                has_workspace=bool(entry.get("workspace", not entry.get("coordinator", False))),
                coordinator=bool(entry.get("coordinator", False)),
            ))
            if "compaction" in entry:
                by_role[role] = _compaction(entry["compaction"], base, compaction)
        validate_team(agents)

        lim = data.get("limits", {})
        limits = Limits(
            int(lim.get("max_manager_turns", 200)),
            int(lim.get("max_subagent_turns", 50)),
            lim.get("wall_clock_s"),
        )
        prompts = data.get("prompts", {})
        policies = Policies(
            compaction=compaction,
            compaction_by_role=by_role,
            spill_threshold_tokens=int(data.get("spill", {}).get("threshold_tokens", 50_000)),
            spill_excerpt_bytes=int(data.get("spill", {}).get("excerpt_bytes", 2_000)),
            shell_timeout_s=int(data.get("shell", {}).get("timeout_s", 300)),
            provisioning=ProvisioningHook(tuple(data.get("provisioning", {}).get("commands", []))),
        )
        if "methodology" in prompts:
            policies.preamble = _read_template(prompts["methodology"], base)
        return cls(agents, provider, policies, limits, source, data)


# -- task commands -----------------------------------------------------------------


def exit_code_for(state: TaskState) -> int:
    return EXIT_OK if state.phase == "completed" else EXIT_FAILED


def _report(state: TaskState) -> None:
    line = f"task {state.task_id}: {state.phase}"
    if state.failure:
        line += f" ({state.failure}{', resumable' if state.resumable else ''})"
    if state.pr_number:
        line += f"; pr #{state.pr_number}"
    print(line, file=sys.stderr if state.phase == "failed" else sys.stdout)


def cmd_run(config_path, repo_path, issue_file, task_id, task_dir) -> int:
    task_dir = Path(task_dir)
    try:
        config = TeamConfig.load(config_path)
        if not Path(repo_path).is_dir():
            raise ConfigError(f"repository {repo_path} not found")
        if not Path(issue_file).is_file():
            raise ConfigError(f"issue file {issue_file} not found")
        if task_dir.exists() and any(task_dir.iterdir()):
            raise ConfigError(f"task directory {task_dir} is not empty")
        spec = TaskSpec(task_id, str(Path(repo_path).resolve()), Path(issue_file).read_text(encoding="utf-8"), limits=config.limits)
        runner = TaskRunner(config.agents, spec, config.provider, task_dir, config.policies)
        state = runner.run()
    except (ConfigError, ForgeError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    _report(state)
    return exit_code_for(state)


def cmd_resume(task_dir, config_path) -> int:
    task_dir = Path(task_dir)
    try:
        if not task_dir.is_dir():
            raise ConfigError(f"task directory {task_dir} not found")
        config = TeamConfig.load(config_path)
        spec = load_task_spec(task_dir)
        spec = TaskSpec(spec.task_id, spec.repo, spec.issue_text, spec.base_branch, config.limits)
        runner = TaskRunner(config.agents, spec, config.provider, task_dir, config.policies)
    except (ConfigError, ResumeError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    try:
        state = runner.resume()
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except ResumeError as exc:
        _err(f"task cannot be resumed: {exc}")
        return EXIT_FAILED
    if state.failure and not state.resumable:
        _err(f"task cannot be resumed: {state.failure}")
    _report(state)
    return exit_code_for(state)


def format_trace_table(traces) -> str:
    if not traces:
        return ""
    header = f"{'seq':>4}  {'role':<12} {'model':<16} {'msgs':>5} {'kind':<10} {'ms':>7}  tools"
    rows = [header, "-" * len(header)]
    for t in traces:
        rows.append(
            f"{t.seq:>4}  {t.role:<12} {t.model_name:<16} {t.input_message_count:>5} "
            f"{t.response_kind:<10} {t.latency_ms:>7}  {','.join(t.tool_names_invoked)}"
        )
    return "\n".join(rows) + "\n"


def cmd_trace(task_dir, format: str = "lines") -> int:
    task_dir = Path(task_dir)
    if not task_dir.is_dir():
        _err(f"task directory {task_dir} not found")
        return EXIT_CONFIG
    traces = read_traces(task_dir / "trace.log")
    if format == "lines":
        sys.stdout.write("".join(t.to_line() + "\n" for t in traces))
    else:
        sys.stdout.write(format_trace_table(traces))
    return EXIT_OK


# -- forge commands (used by agents) ------------------------------------------------


def _forge_for(args):
    task_dir = args.task_dir or os.environ.get("TEAMFLOW_TASK_DIR")
    if not task_dir:
        raise ConfigError("no task directory: pass --task-dir or set TEAMFLOW_TASK_DIR")
    return open_forge(Path(task_dir) / "forge")


def _actor(args) -> str:
    actor = args.actor or os.environ.get("TEAMFLOW_ACTOR")
    if not actor:
        raise ConfigError("no acting role: pass --actor or set TEAMFLOW_ACTOR")
    return actor


def _location(text: str) -> tuple[str, int]:
    path, sep, line = text.rpartition(":")
    if not sep or not path or not line.isdigit():
        raise ConfigError(f"expected <file>:<line>, got {text!r}")
    return path, int(line)


def _body(args) -> str:
    if getattr(args, "body_file", None):
        if args.body_file == "-":
            return sys.stdin.read()
        return Path(args.body_file).read_text(encoding="utf-8")
    return args.body or ""


def _run_forge_op(fn, args) -> int:
    try:
        fn(args)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except ForgeError as exc:
        _err(str(exc))
        return EXIT_FAILED
    return EXIT_OK


def _pr_review_parser(prog: str = "pr-review") -> argparse.ArgumentParser:
    p = _Parser(prog=prog, description="Compact pull request review interface.")
    p.add_argument("--task-dir")
    p.add_argument("--actor")
    sub = p.add_subparsers(dest="action", required=True)
    v = sub.add_parser("view", help="show review threads")
    v.add_argument("pr", type=int)
    v.add_argument("--unresolved", action="store_true")
    c = sub.add_parser("comment", help="open an inline thread")
    c.add_argument("pr", type=int)
    c.add_argument("location", metavar="FILE:LINE")
    c.add_argument("body")
    r = sub.add_parser("reply", help="reply to a thread")
    r.add_argument("thread")
    r.add_argument("body")
    s = sub.add_parser("resolve", help="resolve a thread")
    s.add_argument("thread")
    m = sub.add_parser("submit", help="submit a review")
    m.add_argument("pr", type=int)
    m.add_argument("--verdict", required=True, choices=["approve", "request-changes", "request_changes", "comment"])
    m.add_argument("--body", default="")
    m.add_argument("--inline", nargs=2, action="append", default=[], metavar=("FILE:LINE", "BODY"))
    return p


def _thread_id(text: str) -> int:
    digits = text[1:] if text[:1] in ("T", "t") else text
    if not digits.isdigit():
        raise ConfigError(f"bad thread id {text!r}")
    return int(digits)


def _pr_review(args) -> None:
    repo = _forge_for(args)
    if args.action == "view":
        sys.stdout.write(repo.list_threads(args.pr, "unresolved" if args.unresolved else "all"))
    elif args.action == "comment":
        path, line = _location(args.location)
        t = repo.comment(_actor(args), args.pr, path, line, args.body)
        print(f"T{t.thread_id}")
    elif args.action == "reply":
        repo.reply_thread(_actor(args), _thread_id(args.thread), args.body)
    elif args.action == "resolve":
        repo.resolve_thread(_actor(args), _thread_id(args.thread))
    elif args.action == "submit":
        inline = [InlineComment(*_location(loc), body) for loc, body in args.inline]
        review = repo.submit_review(_actor(args), args.pr, args.verdict, args.body, inline)
        print(f"review {review.id} on #{args.pr}: {review.verdict}; state {repo.pr_state(args.pr).state}")


def cmd_pr_review(subcommand: str, args: list[str], task_dir=None, actor=None) -> int:
    argv = []
    if task_dir:
        argv += ["--task-dir", str(task_dir)]
    if actor:
        argv += ["--actor", actor]
    return pr_review_main(argv + [subcommand, *args])


def pr_review_main(argv=None) -> int:
    args = _pr_review_parser().parse_args(argv)
    return _run_forge_op(_pr_review, args)


def _forge_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="forge", description="Issues and pull requests in the task forge.")
    p.add_argument("--task-dir")
    p.add_argument("--actor")
    sub = p.add_subparsers(dest="noun", required=True)
    issue = sub.add_parser("issue").add_subparsers(dest="verb", required=True)
    ic = issue.add_parser("create")
    ic.add_argument("--title", required=True)
    ic.add_argument("--body")
    ic.add_argument("--body-file")
    issue.add_parser("list")
    iv = issue.add_parser("view")
    iv.add_argument("number", type=int)
    icl = issue.add_parser("close")
    icl.add_argument("number", type=int)
    pr = sub.add_parser("pr").add_subparsers(dest="verb", required=True)
    pc = pr.add_parser("create")
    pc.add_argument("--title", required=True)
    pc.add_argument("--head", required=True, help="source branch")
    pc.add_argument("--base", help="target branch (default: task base branch)")
    pc.add_argument("--body")
    pc.add_argument("--body-file")
    pr.add_parser("list")
    for verb in ("view", "diff", "close", "merge"):
        pr.add_parser(verb).add_argument("number", type=int)
    return p


def _forge(args) -> None:
    repo = _forge_for(args)
    if args.noun == "issue":
        if args.verb == "create":
            issue = repo.create_issue(_actor(args), args.title, _body(args))
            print(f"created issue #{issue.number}")
        elif args.verb == "list":
            for i in repo.issues():
                print(f"#{i.number}\t{i.state}\t{i.author}\t{i.title}")
        elif args.verb == "view":
            i = repo.get_issue(args.number)
            print(f"#{i.number} {i.title}\nstate: {i.state}\nauthor: {i.author}\n\n{i.body}")
        elif args.verb == "close":
            repo.close_issue(_actor(args), args.number)
        return
    if args.verb == "create":
        pr = repo.open_pr(_actor(args), args.title, args.head, args.base, _body(args))
        print(f"created pull request #{pr.number} ({pr.source_branch} -> {pr.target_branch})")
    elif args.verb == "list":
        for p in repo.pulls():
            print(f"#{p.number}\t{p.state}\t{p.author}\t{p.source_branch}\t{p.title}")
    elif args.verb == "view":
        p = repo.get_pr(args.number)
        reviews = repo.reviews(p.number)
        print(f"#{p.number} {p.title}\nstate: {p.state}\nauthor: {p.author}\n"
              f"branches: {p.source_branch} -> {p.target_branch}\nhead: {p.head_commit[:12]}")
        for r in reviews:
            print(f"review {r.id} by {r.reviewer}: {r.verdict}" + (f" - {r.body}" if r.body else ""))
        if p.body:
            print(f"\n{p.body}")
    elif args.verb == "diff":
        sys.stdout.write(repo.get_diff(args.number))
    elif args.verb == "close":
        repo.close_pr(_actor(args), args.number)
    elif args.verb == "merge":
        print(repo.merge_pr(_actor(args), args.number))


def forge_main(argv=None) -> int:
    args = _forge_parser().parse_args(argv)
    return _run_forge_op(_forge, args)


# -- top level ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="teamflow", description="Run manager-coordinated agent teams on repository issues.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="start a new task")
    r.add_argument("--config", default=None, help="team config (default: shipped team.toml)")
    r.add_argument("--repo", required=True)
    r.add_argument("--issue-file", required=True)
    r.add_argument("--task-id", required=True)
    r.add_argument("--task-dir", required=True)
    s = sub.add_parser("resume", help="continue an interrupted task")
    s.add_argument("--task-dir", required=True)
    s.add_argument("--config", default=None)
    t = sub.add_parser("trace", help="print provider call traces")
    t.add_argument("--task-dir", required=True)
    t.add_argument("--format", choices=["lines", "text"], default="lines")
    sub.add_parser("pr-review", help="compact review interface (see pr-review --help)", add_help=False)
    sub.add_parser("forge", help="issue / pull request commands (see forge --help)", add_help=False)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:1] == ["pr-review"]:
        return pr_review_main(argv[1:])
    if argv[:1] == ["forge"]:
        return forge_main(argv[1:])
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config or default_config_path(), args.repo, args.issue_file, args.task_id, args.task_dir)
        if args.command == "resume":
            return cmd_resume(args.task_dir, args.config or default_config_path())
        return cmd_trace(args.task_dir, args.format)
    except TeamflowError as exc:
        _err(str(exc))
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
