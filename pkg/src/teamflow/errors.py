"""Exception hierarchy shared across the runtime."""


class TeamflowError(Exception):
    """Base class for all runtime errors."""


class ConfigError(TeamflowError):
    """Invalid team, tool, or task configuration. Raised before any provider call."""


class ProviderError(TeamflowError):
    """A model provider call failed. The task is aborted but stays resumable."""


class FixtureExhausted(ProviderError):
    """The scripted provider has no queued response left for a role."""

    def __init__(self, role: str):
        super().__init__(f"scripted fixture exhausted for role {role!r}")
        self.role = role


class SummarizerError(ProviderError):
    """Context summarization failed; the conversation was left unchanged."""


class ForgeError(TeamflowError):
    """A forge operation was rejected (validation, state machine, or lookup failure)."""


class WorkspaceError(TeamflowError):
    """Workspace creation, provisioning, or publication failed."""

    def __init__(self, message: str, exit_code: int | None = None, output: str = ""):
        super().__init__(message)
        self.exit_code = exit_code
        self.output = output


class SnapshotConflict(WorkspaceError):
    """The forge branch moved ahead of the workspace; a push would lose commits."""


class ResumeError(TeamflowError):
    """The task directory cannot be resumed (missing or corrupt store)."""
