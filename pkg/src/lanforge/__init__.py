"""lanforge: grow and run conditional networks of LLM agents.

The library exposes four layers: the LAN data model (``model``, ``diff``),
completion backends (``gateway``), network execution (``runtime``), and the
few-example training pipeline (``update``). The HTTP service and CLI build
on top of them.
"""

from .diff import apply_edit_script, lan_edit_script, lmd
from .gateway import (
    Backend,
    CancelToken,
    CompletionRequest,
    CompletionResponse,
    HttpBackend,
    RecordingBackend,
    ReplayBackend,
    ScriptedBackend,
    Transcript,
    backend_from_env,
)
from .model import (
    EXTERNAL_INPUT_LABEL,
    Agent,
    ControlModule,
    Example,
    ExecutionModule,
    KnowledgeItem,
    Lan,
    NamedValues,
    deserialize_lan,
    serialize_lan,
    topological_order,
    validate_lan,
)
from .runtime import RunTrace, run_lan
from .update import (
    Intervention,
    StrategyPlan,
    TrainingExample,
    TrainingSession,
    UpdatePipeline,
    apply_strategy,
    check_satisfaction,
    init_lan,
    record_success,
    train_example,
)

__version__ = "0.1.0"

__all__ = [
    "Agent",
    "Backend",
    "CancelToken",
    "CompletionRequest",
    "CompletionResponse",
    "ControlModule",
    "EXTERNAL_INPUT_LABEL",
    "Example",
    "ExecutionModule",
    "HttpBackend",
    "Intervention",
    "KnowledgeItem",
    "Lan",
    "NamedValues",
    "RecordingBackend",
    "ReplayBackend",
    "RunTrace",
    "ScriptedBackend",
    "StrategyPlan",
    "TrainingExample",
    "TrainingSession",
    "Transcript",
    "UpdatePipeline",
    "apply_edit_script",
    "apply_strategy",
    "backend_from_env",
    "check_satisfaction",
    "deserialize_lan",
    "init_lan",
    "lan_edit_script",
    "lmd",
    "record_success",
    "run_lan",
    "serialize_lan",
    "topological_order",
    "train_example",
    "validate_lan",
]
