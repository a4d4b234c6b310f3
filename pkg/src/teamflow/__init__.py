"""Manager-coordinated multi-agent runtime for resolving repository issues.

A coordinator agent directs role-specialized agents (researcher, engineer,
reviewer) that each work in an isolated clone. Work is published through a
local git-backed forge; a task completes only when its pull request has been
approved by the reviewer.
"""

from .agent_core import (
    AgentSpec,
    LiveProvider,
    LiveProviderConfig,
    ModelConfig,
    ModelRequest,
    ModelResponse,
    ProviderTrace,
    ScriptQueue,
    ScriptedProvider,
    TraceSink,
    append_trace,
    build_request,
    scripted_next,
)
from .context import (
    CompactionPolicy,
    Conversation,
    Message,
    ToolCall,
    append_message,
    compact,
    estimate_tokens,
    needs_compaction,
)
from .errors import (
    ConfigError,
    FixtureExhausted,
    ForgeError,
    ProviderError,
    ResumeError,
    SummarizerError,
    WorkspaceError,
)
from .forge import ForgeRepo, InlineComment, init_forge, open_forge
from .orchestrator import Limits, Policies, TaskRunner, TaskSpec, TaskState, evaluate_finish, resume, run_task
from .sandbox import ProvisioningHook, Workspace, create_workspace, destroy_workspace, snapshot_branch
from .toolkit import (
    CommandOutcome,
    Param,
    SpillPolicy,
    ToolRegistry,
    ToolResult,
    ToolSpec,
    dispatch,
    register_tool,
    render_outcome,
    shell_execute,
)

__version__ = "0.1.0"
