"""provlens: streaming workflow provenance with a schema-aware query agent.

The stack, bottom to top: task records and their canonical JSONL form
(``records``), an in-process pub/sub hub with buffered producers (``hub``),
capture instrumentation and the bundled workloads (``capture``), the live
buffer / inferred dataflow schema / guidelines (``context``), a structured
query engine (``query``), the statistical anomaly monitor (``anomaly``),
the persistent keeper store (``store``), the natural-language agent
(``agent``), the evaluation harness (``evalharness``), and the HTTP/WS
service (``service``).
"""

from .agent import (
    Agent,
    AgentReply,
    CONFIGS_BY_LABEL,
    FULL_CONFIG,
    HTTPBackend,
    MockBackend,
    PROMPT_CONFIGS,
    PromptConfig,
    assemble_prompt,
    route,
)
from .anomaly import AnomalyMonitor, AnomalyPolicy, AnomalyTag, publish_anomaly, sweep
from .capture import (
    CaptureSession,
    ListProducer,
    SyntheticSpec,
    chemistry_trace_path,
    make_chemistry_trace,
    read_trace,
    replay_trace,
    run_synthetic,
    write_trace,
)
from .context import ContextManager, DataflowSchema, FieldSpec, Guideline
from .hub import BufferedProducer, FlushPolicy, Hub, HubTCPServer, Subscription
from .query import (
    Aggregation,
    Filter,
    PlotSpec,
    QueryIR,
    ResultTable,
    SortKey,
    execute,
    parse_ir,
    parse_ir_doc,
    render_ir,
    validate,
)
from .records import (
    AgentIdentity,
    QueryClass,
    TaskRecord,
    classify_query_label,
    parse_record,
    serialize_record,
)
from .store import JsonlStore, Keeper, open_store

__version__ = "0.1.0"
