"""Cooperative workflow engine: anticipated activity execution over a typed
task graph, self-describing binary data exchange, and an event-sourced
service shell with HTTP API and CLI."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from .codec import (
    DecodeReport,
    FieldDescriptor,
    FieldKind,
    FormatDescriptor,
    FormatRegistry,
    convert,
    decode,
    decode_as,
    encode,
    format_id,
    register_format,
)
from .engine import (
    cancel_activity,
    create_instance,
    derive_state,
    emit_data,
    instance_status,
    replay_events,
    start_activity,
    terminate_activity,
    worklist,
)
from .errors import CoopflowError
from .model import (
    ProcessDefinition,
    canonical_order,
    parse_definition,
    serialize_definition,
    validate_definition,
)
from .router import InputView, fetch_inputs
from .runtime import (
    ActivityState,
    EngineEvent,
    EventKind,
    InstanceStatus,
    ProcessInstance,
    Provenance,
)
from .scenario import run_scenario, run_script
from .service import EngineService

__version__ = "0.1.0"


def example_path(name: str) -> Path:
    """Path to a bundled example file, e.g. 'digitalization.wf.json'."""
    return Path(str(resources.files("coopflow").joinpath("data", name)))
