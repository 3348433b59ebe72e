"""Deterministic simulation of register protocols over weak base registers.

A protocol is a set of per-process resumable step programs operating on
single-writer base registers.  The engine runs one fully resolved
interleaving at a time: every scheduler choice (which process performs its
next event) and every adversary choice (which feasible value a safe or
regular base Read returns) is a decision, and a complete decision sequence
determines the execution exactly.  On top of single runs the module offers
seeded-random runs and exhaustive depth-first enumeration of the whole
decision tree at small scale.

Event model: every base-register access occupies an interval of two
scheduler events, invoke and respond.  Atomic base registers take effect at
the respond (equivalent commit placements are merged: distinct commit
orders are exactly distinct respond orders, all of which the enumerator
produces).  Safe and regular base Reads receive their value at respond
time, chosen by the adversary from the feasible set of the register's base
history so far.  A high-level operation's interval runs from its first to
its last event; operations that perform no base access occupy two dedicated
bookkeeping events so that every operation has a well-formed interval.
Step indices are assigned globally in scheduling order, one per event.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

from .history import History, OpKind, OpRecord, SemanticsLevel, VarSpec


class EngineError(RuntimeError):
    """Protocol or simulation misbehaviour (not an adversary outcome)."""


class InvalidDecision(EngineError):
    """A decision sequence named an impossible choice."""


@dataclass(frozen=True, slots=True)
class BaseRegisterSpec:
    """One simulated base register: single writer, declared semantics."""

    name: str
    owner: int
    readers: frozenset[int]
    domain: int
    init: int
    semantics: SemanticsLevel

    def __post_init__(self) -> None:
        if self.domain < 2:
            raise EngineError(f"register {self.name}: domain must be >= 2")
        if not 0 <= self.init < self.domain:
            raise EngineError(f"register {self.name}: init outside domain")


class ReadAction(NamedTuple):
    """Program action: read base register ``reg`` (index into the layout)."""

    reg: int


class WriteAction(NamedTuple):
    """Program action: write ``value`` to base register ``reg``."""

    reg: int
    value: int


class ReturnAction(NamedTuple):
    """Program action: finish the operation, returning ``value`` and
    replacing the process's persistent memory with ``memory``."""

    value: object
    memory: object


Action = ReadAction | WriteAction | ReturnAction


class StepProgram:
    """Resumable step programs for one protocol.

    ``begin`` starts an operation and ``resume`` continues it after a base
    access; both return ``(action, state)`` where state is an opaque
    immutable continuation.  The engine threads ``state`` back into
    ``resume`` together with the base Read result (None after a Write).
    Persistent per-process memory is replaced only by ``ReturnAction``.
    """

    def initial_memory(self, proc: int) -> object:
        return None

    def begin(self, proc: int, mem: object, kind: str, arg: int | None) -> tuple[Action, object]:
        raise NotImplementedError

    def resume(self, proc: int, mem: object, state: object, result: int | None) -> tuple[Action, object]:
        raise NotImplementedError


@dataclass(frozen=True)
class ProtocolSpec:
    """A register or timestamp construction ready to simulate.

    ``var_name`` names the implemented high-level variable for register
    protocols (None for timestamp systems, which have no single variable).
    ``budgets`` declares the wait-freedom contract: exact worst-case base
    accesses per operation kind.
    """

    name: str
    n_processes: int
    registers: tuple[BaseRegisterSpec, ...]
    program: StepProgram
    budgets: Mapping[str, int]
    var_name: str | None
    domain: int
    init: int
    writers: frozenset[int]
    readers: frozenset[int]

    def __post_init__(self) -> None:
        if self.n_processes < 1:
            raise EngineError("protocol needs at least one process")
        names = [r.name for r in self.registers]
        if len(set(names)) != len(names):
            raise EngineError("duplicate base register names")


@dataclass(frozen=True, slots=True)
class HLOp:
    """One completed high-level operation in an execution."""

    op_id: int
    proc: int
    kind: str
    arg: int | None
    ret: object
    start: int
    end: int
    base_accesses: int


# Event tuples: (step, proc, etype, reg_index, rw, value, op_id)
# etype: "bi" base invoke / "br" base respond / "ob" op begin / "oe" op end
# (the latter two only for operations that perform no base access).
Event = tuple[int, int, str, int | None, str | None, int | None, int]

#: One decision: (process, adversary_value_or_None).
Decision = tuple[int, int | None]

Workload = Sequence[Sequence[tuple[str, int | None]]]


@dataclass(frozen=True, slots=True)
class Execution:
    """One fully resolved run: event log, completed operations, decisions."""

    protocol: ProtocolSpec
    events: tuple[Event, ...]
    ops: tuple[HLOp, ...]
    decisions: tuple[Decision, ...]


@dataclass
class EnumerationResult:
    """Outcome of :func:`enumerate_executions`.

    ``truncated`` is set when a limit cut the decision tree; ``stopped``
    when the visitor asked to stop early.  ``executions`` is populated only
    when no visitor was supplied.
    """

    count: int = 0
    truncated: bool = False
    stopped: bool = False
    executions: tuple[Execution, ...] = ()


# Per-process runtime slots.
_IDLE, _PENDING_INVOKE, _MID, _ENDING = range(4)
(_P_MEM, _P_STATE, _P_PHASE, _P_ACTION, _P_OPIDX, _P_KIND,
 _P_ARG, _P_FIRST, _P_ACC, _P_UID, _P_BINV) = range(11)


class _Sim:
    """Mutable single-execution simulator with O(1) event undo."""

    def __init__(self, spec: ProtocolSpec, workload: Workload):
        if len(workload) != spec.n_processes:
            raise EngineError(
                f"workload lists {len(workload)} processes, protocol has {spec.n_processes}"
            )
        for proc, ops in enumerate(workload):
            for kind, arg in ops:
                if kind not in spec.budgets:
                    raise EngineError(f"proc {proc}: unknown operation kind {kind!r}")
        self.spec = spec
        self.workload = [list(ops) for ops in workload]
        self.program = spec.program
        self.regs = spec.registers
        self.step = 0
        self.next_uid = 0
        self.reg_vals = [r.init for r in self.regs]
        # Write intervals per register, for safe/regular feasibility:
        # mutable [start, end|None, value] records.
        self.reg_writes: list[list[list]] = [[] for _ in self.regs]
        self.events: list[Event] = []
        self.hlops: list[HLOp] = []
        self.decisions: list[Decision] = []
        self.procs = []
        for proc in range(spec.n_processes):
            p = [None] * 11
            p[_P_MEM] = self.program.initial_memory(proc)
            p[_P_PHASE] = _IDLE
            p[_P_OPIDX] = 0
            self.procs.append(p)

    # -- decision surface ---------------------------------------------------

    def enabled(self, proc: int) -> bool:
        p = self.procs[proc]
        return p[_P_PHASE] != _IDLE or p[_P_OPIDX] < len(self.workload[proc])

    def done(self) -> bool:
        return not any(self.enabled(proc) for proc in range(self.spec.n_processes))

    def needs_value(self, proc: int) -> bool:
        p = self.procs[proc]
        if p[_P_PHASE] != _MID:
            return False
        action = p[_P_ACTION]
        return (
            type(action) is ReadAction
            and self.regs[action.reg].semantics is not SemanticsLevel.ATOMIC
        )

    def feasible(self, proc: int) -> Sequence[int]:
        """Adversary choices for the safe/regular base Read ``proc`` is about
        to complete, computed at respond time from the register's base
        history so far (pending Writes overlap everything after them)."""
        p = self.procs[proc]
        reg_idx = p[_P_ACTION].reg
        reg = self.regs[reg_idx]
        r_inv = p[_P_BINV]
        latest_val = reg.init
        latest_end = -1
        overlapping = []
        for s, e, v in self.reg_writes[reg_idx]:
            if e is not None and e < r_inv:
                if e > latest_end:
                    latest_end = e
                    latest_val = v
            else:
                overlapping.append(v)
        if not overlapping:
            return (latest_val,)
        if reg.semantics is SemanticsLevel.SAFE:
            return range(reg.domain)
        vals = set(overlapping)
        vals.add(latest_val)
        return tuple(sorted(vals))

    def choices(self) -> list[Decision]:
        out: list[Decision] = []
        for proc in range(self.spec.n_processes):
            if not self.enabled(proc):
                continue
            if self.needs_value(proc):
                out.extend((proc, v) for v in self.feasible(proc))
            else:
                out.append((proc, None))
        return out

    # -- event application --------------------------------------------------

    def apply(self, proc: int, value: int | None):
        """Perform one scheduler event for ``proc``; returns an undo token."""
        if not 0 <= proc < self.spec.n_processes or not self.enabled(proc):
            raise InvalidDecision(f"process {proc} has no pending step")
        if self.needs_value(proc):
            if value is None:
                raise InvalidDecision(f"process {proc}: adversary value required")
            if value not in self.feasible(proc):
                raise InvalidDecision(f"process {proc}: value {value} not feasible")
        elif value is not None:
            raise InvalidDecision(f"process {proc}: unexpected adversary value")

        p = self.procs[proc]
        snap = tuple(p)
        step = self.step
        self.step += 1
        reg_undo = None
        hl_done = False
        phase = p[_P_PHASE]

        if phase == _IDLE:
            kind, arg = self.workload[proc][p[_P_OPIDX]]
            p[_P_KIND] = kind
            p[_P_ARG] = arg
            p[_P_UID] = self.next_uid
            self.next_uid += 1
            p[_P_FIRST] = step
            p[_P_ACC] = 0
            action, state = self.program.begin(proc, p[_P_MEM], kind, arg)
            if type(action) is ReturnAction:
                p[_P_PHASE] = _ENDING
                p[_P_ACTION] = action
                self.events.append((step, proc, "ob", None, None, None, p[_P_UID]))
            else:
                reg_undo = self._invoke(p, proc, action, state, step)
        elif phase == _PENDING_INVOKE:
            reg_undo = self._invoke(p, proc, p[_P_ACTION], p[_P_STATE], step)
        elif phase == _MID:
            action = p[_P_ACTION]
            reg_idx = action.reg
            reg = self.regs[reg_idx]
            if type(action) is WriteAction:
                if reg.semantics is SemanticsLevel.ATOMIC:
                    reg_undo = ("val", reg_idx, self.reg_vals[reg_idx])
                    self.reg_vals[reg_idx] = action.value
                else:
                    # single writer per register, writers sequential: the
                    # pending record is always the latest one
                    rec = self.reg_writes[reg_idx][-1]
                    rec[1] = step
                    reg_undo = ("wend", rec)
                result = None
                self.events.append((step, proc, "br", reg_idx, "W", action.value, p[_P_UID]))
            else:
                if reg.semantics is SemanticsLevel.ATOMIC:
                    result = self.reg_vals[reg_idx]
                else:
                    result = value
                self.events.append((step, proc, "br", reg_idx, "R", result, p[_P_UID]))
            nxt, state = self.program.resume(proc, p[_P_MEM], p[_P_STATE], result)
            if type(nxt) is ReturnAction:
                self._finish_op(p, proc, nxt, step)
                hl_done = True
            else:
                self._check_action(proc, nxt)
                p[_P_ACTION] = nxt
                p[_P_STATE] = state
                p[_P_PHASE] = _PENDING_INVOKE
        else:  # _ENDING
            self.events.append((step, proc, "oe", None, None, None, p[_P_UID]))
            self._finish_op(p, proc, p[_P_ACTION], step)
            hl_done = True

        self.decisions.append((proc, value))
        return (proc, snap, reg_undo, hl_done)

    def _check_action(self, proc: int, action) -> None:
        if type(action) is ReadAction:
            reg = self.regs[action.reg]
            if proc not in reg.readers:
                raise EngineError(f"proc {proc} may not read register {reg.name}")
        elif type(action) is WriteAction:
            reg = self.regs[action.reg]
            if proc != reg.owner:
                raise EngineError(f"proc {proc} does not own register {reg.name}")
            if not 0 <= action.value < reg.domain:
                raise EngineError(f"value {action.value} outside domain of {reg.name}")
        else:
            raise EngineError(f"program produced invalid action {action!r}")

    def _invoke(self, p: list, proc: int, action, state, step: int):
        self._check_action(proc, action)
        p[_P_ACC] += 1
        if p[_P_ACC] > self.spec.budgets[p[_P_KIND]]:
            raise EngineError(
                f"{p[_P_KIND]} by proc {proc} exceeded declared budget "
                f"{self.spec.budgets[p[_P_KIND]]}"
            )
        reg_idx = action.reg
        reg_undo = None
        if type(action) is WriteAction:
            self.events.append((step, proc, "bi", reg_idx, "W", action.value, p[_P_UID]))
            if self.regs[reg_idx].semantics is not SemanticsLevel.ATOMIC:
                self.reg_writes[reg_idx].append([step, None, action.value])
                reg_undo = ("wpend", reg_idx)
        else:
            self.events.append((step, proc, "bi", reg_idx, "R", None, p[_P_UID]))
            p[_P_BINV] = step
        p[_P_ACTION] = action
        p[_P_STATE] = state
        p[_P_PHASE] = _MID
        return reg_undo

    def _finish_op(self, p: list, proc: int, action: ReturnAction, step: int) -> None:
        self.hlops.append(
            HLOp(
                op_id=p[_P_UID], proc=proc, kind=p[_P_KIND], arg=p[_P_ARG],
                ret=action.value, start=p[_P_FIRST], end=step,
                base_accesses=p[_P_ACC],
            )
        )
        p[_P_MEM] = action.memory
        p[_P_OPIDX] += 1
        p[_P_PHASE] = _IDLE
        p[_P_ACTION] = None
        p[_P_STATE] = None

    def undo(self, token) -> None:
        proc, snap, reg_undo, hl_done = token
        self.step -= 1
        self.decisions.pop()
        self.events.pop()
        if hl_done:
            self.hlops.pop()
        if reg_undo is not None:
            tag = reg_undo[0]
            if tag == "val":
                self.reg_vals[reg_undo[1]] = reg_undo[2]
            elif tag == "wend":
                reg_undo[1][1] = None
            else:  # "wpend"
                self.reg_writes[reg_undo[1]].pop()
        if snap[_P_PHASE] == _IDLE:
            self.next_uid -= 1
        self.procs[proc][:] = snap

    def snapshot(self) -> Execution:
        return Execution(
            protocol=self.spec,
            events=tuple(self.events),
            ops=tuple(self.hlops),
            decisions=tuple(self.decisions),
        )


def run_schedule(spec: ProtocolSpec, workload: Workload, decisions: Iterable[Decision]) -> Execution:
    """Replay a decision sequence exactly.  Pure: identical inputs produce
    identical executions.  Raises :class:`InvalidDecision` if a decision is
    impossible at its decision point or the sequence leaves work pending."""
    sim = _Sim(spec, workload)
    for proc, value in decisions:
        sim.apply(proc, value)
    if not sim.done():
        raise InvalidDecision("decision sequence ends before the workload completes")
    return sim.snapshot()


#: Default enumeration limits; both must stay finite.
DEFAULT_MAX_EXECUTIONS = 1_000_000
DEFAULT_MAX_STEPS = 10_000


def enumerate_executions(
    spec: ProtocolSpec,
    workload: Workload,
    limits: Mapping[str, int] | None = None,
    visit: Callable[[Execution], bool | None] | None = None,
) -> EnumerationResult:
    """Depth-first enumeration of the full decision tree.

    Explores every interleaving and every adversary value choice.  With no
    ``visit`` callback all executions are collected into the result; with
    one, each execution is passed to it instead (return False to stop
    early).  ``limits`` may bound ``max_executions`` (tree is flagged
    truncated when more leaves exist) and ``max_steps`` (branches longer
    than this are cut and flagged).
    """
    limits = dict(limits or {})
    max_exec = int(limits.pop("max_executions", DEFAULT_MAX_EXECUTIONS))
    max_steps = int(limits.pop("max_steps", DEFAULT_MAX_STEPS))
    if limits:
        raise EngineError(f"unknown limit keys: {sorted(limits)}")
    result = EnumerationResult()
    collected: list[Execution] = []
    sim = _Sim(spec, workload)

    def dfs() -> bool:
        """Returns False to abort the whole enumeration."""
        choices = sim.choices()
        if not choices:
            if result.count >= max_exec:
                result.truncated = True
                return False
            result.count += 1
            execution = sim.snapshot()
            if visit is None:
                collected.append(execution)
            elif visit(execution) is False:
                result.stopped = True
                return False
            return True
        if sim.step >= max_steps:
            result.truncated = True
            return True  # cut this branch, keep exploring siblings
        for proc, value in choices:
            token = sim.apply(proc, value)
            alive = dfs()
            sim.undo(token)
            if not alive:
                return False
        return True

    dfs()
    result.executions = tuple(collected)
    return result


def random_execution(spec: ProtocolSpec, workload: Workload, seed: int) -> Execution:
    """One execution with all decisions drawn from ``random.Random(seed)``
    (CPython's Mersenne Twister): at every decision point one entry of the
    flattened, deterministically ordered (process, value) choice list is
    picked uniformly.  Identical seeds give identical executions."""
    rng = random.Random(seed)
    sim = _Sim(spec, workload)
    while True:
        choices = sim.choices()
        if not choices:
            return sim.snapshot()
        proc, value = choices[rng.randrange(len(choices))]
        sim.apply(proc, value)


# ---------------------------------------------------------------------------
# History extraction
# ---------------------------------------------------------------------------

SCOPE_HIGH = "high"
SCOPE_BASE = "base"

_KIND_TO_OPKIND = {"Write": OpKind.WRITE, "Read": OpKind.READ}


def extract_history(execution: Execution, scope: str = SCOPE_HIGH) -> History:
    """Project an execution onto a History.

    High-level scope yields one OpRecord per protocol operation on the
    protocol's implemented variable; base-level scope yields one OpRecord
    per base-register access, one variable per register.
    """
    spec = execution.protocol
    if scope == SCOPE_HIGH:
        if spec.var_name is None:
            raise EngineError(
                f"protocol {spec.name!r} implements no register variable; "
                "use its own history extraction"
            )
        vars = {
            spec.var_name: VarSpec(
                domain=spec.domain, init=spec.init,
                writers=spec.writers, readers=spec.readers,
            )
        }
        ops = []
        for op in execution.ops:
            kind = _KIND_TO_OPKIND[op.kind]
            ops.append(
                OpRecord(
                    op_id=op.op_id, proc=op.proc, var=spec.var_name, kind=kind,
                    start=op.start, end=op.end,
                    arg=op.arg if kind is OpKind.WRITE else None,
                    ret=op.ret if kind is OpKind.READ else None,
                )
            )
        return History(vars=vars, ops=tuple(ops))
    if scope != SCOPE_BASE:
        raise EngineError(f"unknown extraction scope {scope!r}")
    vars = {
        r.name: VarSpec(
            domain=r.domain, init=r.init,
            writers=frozenset({r.owner}), readers=r.readers,
        )
        for r in spec.registers
    }
    ops = []
    open_access: dict[int, tuple] = {}
    op_id = 0
    for step, proc, etype, reg_idx, rw, value, _uid in execution.events:
        if etype == "bi":
            open_access[proc] = (op_id, step, reg_idx, rw, value)
            op_id += 1
        elif etype == "br":
            oid, start, ridx, rw0, arg = open_access.pop(proc)
            reg = spec.registers[ridx]
            if rw0 == "W":
                ops.append(OpRecord(op_id=oid, proc=proc, var=reg.name, kind=OpKind.WRITE,
                                    start=start, end=step, arg=arg))
            else:
                ops.append(OpRecord(op_id=oid, proc=proc, var=reg.name, kind=OpKind.READ,
                                    start=start, end=step, ret=value))
    for proc, (oid, start, ridx, rw0, arg) in sorted(open_access.items()):
        reg = spec.registers[ridx]
        kind = OpKind.WRITE if rw0 == "W" else OpKind.READ
        ops.append(OpRecord(op_id=oid, proc=proc, var=reg.name, kind=kind,
                            start=start, end=None, arg=arg if rw0 == "W" else None))
    return History(vars=vars, ops=tuple(ops))


def max_accesses(executions: Iterable[Execution]) -> dict[str, int]:
    """Maximum observed base accesses per operation kind, across executions."""
    out: dict[str, int] = {}
    for e in executions:
        for op in e.ops:
            if op.base_accesses > out.get(op.kind, -1):
                out[op.kind] = op.base_accesses
    return out
