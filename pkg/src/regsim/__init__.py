"""regsim: simulate wait-free register constructions over adversarially
scheduled weak base registers and check the recorded histories against the
safe / regular / atomic hierarchy and the wait-freedom contract."""

from .checkers import (
    StepBudget,
    Verdict,
    brute_force_atomic,
    check_level,
    check_wait_free,
    classify,
)
from .constructions import (
    Tag,
    TaggedValue,
    build_multireader,
    build_multiwriter,
    build_raw_register,
    build_regular_bit,
    tag_less,
)
from .engine import (
    BaseRegisterSpec,
    EnumerationResult,
    Execution,
    ProtocolSpec,
    enumerate_executions,
    extract_history,
    random_execution,
    run_schedule,
)
from .history import (
    History,
    HistoryError,
    OpKind,
    OpRecord,
    SemanticsLevel,
    TraceError,
    VarSpec,
    feasible_values,
    overlaps,
    parse_trace,
    precedes,
    serialize_trace,
)
from .timestamp import (
    CtsHistory,
    CtsOp,
    Label,
    LabeledObject,
    ScanResult,
    build_cts,
    check_cts,
    extract_cts_history,
    scan_order,
)

__version__ = "0.1.0"
