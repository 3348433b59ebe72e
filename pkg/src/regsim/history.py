"""Operation histories over shared registers.

A History records Read and Write operation executions on named shared
variables as closed or half-open step intervals on a single logical
timeline.  This module owns the precedence relation between operation
executions, the per-Read feasible value sets under the safe / regular /
atomic semantics hierarchy, and the JSON-lines trace codec.

Step indices are distinct naturals; simultaneity does not exist.  Real
concurrency is expressed by interval overlap.  A pending operation
(invoked, never responded) has ``end is None`` and is treated as
extending to infinity for overlap purposes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Mapping


class HistoryError(ValueError):
    """A History or operation record violates a model invariant."""


class TraceError(HistoryError):
    """A trace document is malformed or inconsistent."""


class OpKind(Enum):
    READ = "R"
    WRITE = "W"


class SemanticsLevel(IntEnum):
    """The three-level hierarchy of register semantics, totally ordered."""

    SAFE = 1
    REGULAR = 2
    ATOMIC = 3

    @classmethod
    def parse(cls, name: str) -> "SemanticsLevel":
        try:
            return cls[name.upper()]
        except KeyError:
            raise HistoryError(f"unknown semantics level: {name!r}") from None


@dataclass(frozen=True, slots=True)
class OpRecord:
    """One Read or Write operation execution.

    ``start`` and ``end`` are global step indices; ``end is None`` marks a
    pending operation.  Writes carry ``arg`` and never ``ret``; Reads carry
    ``ret`` exactly when completed.
    """

    op_id: int
    proc: int
    var: str
    kind: OpKind
    start: int
    end: int | None = None
    arg: int | None = None
    ret: int | None = None

    @property
    def completed(self) -> bool:
        return self.end is not None

    def _validate(self) -> None:
        if self.op_id < 0 or self.proc < 0 or self.start < 0:
            raise HistoryError(f"op {self.op_id}: negative id, proc or step")
        if self.end is not None and self.end <= self.start:
            raise HistoryError(f"op {self.op_id}: end {self.end} not after start {self.start}")
        if self.kind is OpKind.WRITE:
            if self.arg is None:
                raise HistoryError(f"op {self.op_id}: Write without arg")
            if self.ret is not None:
                raise HistoryError(f"op {self.op_id}: Write carries ret")
        else:
            if self.arg is not None:
                raise HistoryError(f"op {self.op_id}: Read carries arg")
            if (self.ret is not None) != self.completed:
                raise HistoryError(f"op {self.op_id}: Read must carry ret iff completed")


@dataclass(frozen=True, slots=True)
class VarSpec:
    """Declaration of one shared variable: domain size, initial value, roles."""

    domain: int
    init: int
    writers: frozenset[int]
    readers: frozenset[int]

    def _validate(self, name: str) -> None:
        if self.domain < 2:
            raise HistoryError(f"var {name}: domain {self.domain} < 2")
        if not 0 <= self.init < self.domain:
            raise HistoryError(f"var {name}: init {self.init} outside domain")


def precedes(a: OpRecord, b: OpRecord) -> bool:
    """True iff ``a`` finishes before ``b`` starts.  Both must be completed."""
    if a.end is None or b.end is None:
        raise HistoryError("incomplete operation has no end")
    return a.end < b.start


def overlaps(a: OpRecord, b: OpRecord) -> bool:
    """True iff neither completed operation precedes the other."""
    return not precedes(a, b) and not precedes(b, a)


def _overlaps_open(a: OpRecord, b: OpRecord) -> bool:
    # Pending intervals extend to infinity, so a pending op overlaps
    # everything invoked at any later step.
    a_end = a.end if a.end is not None else float("inf")
    b_end = b.end if b.end is not None else float("inf")
    return a.start < b_end and b.start < a_end


@dataclass(frozen=True, slots=True)
class History:
    """A set of operation executions over declared variables.

    Ops are stored sorted by start step; construction validates all model
    invariants and raises :class:`HistoryError` on violation.
    """

    vars: Mapping[str, VarSpec]
    ops: tuple[OpRecord, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "ops", tuple(sorted(self.ops, key=lambda o: o.start)))
        object.__setattr__(self, "vars", dict(self.vars))
        self._validate()

    def _validate(self) -> None:
        for name, spec in self.vars.items():
            spec._validate(name)
        steps: set[int] = set()
        per_proc: dict[int, list[OpRecord]] = {}
        ids: set[int] = set()
        for op in self.ops:
            op._validate()
            if op.op_id in ids:
                raise HistoryError(f"duplicate op id {op.op_id}")
            ids.add(op.op_id)
            spec = self.vars.get(op.var)
            if spec is None:
                raise HistoryError(f"op {op.op_id}: undeclared variable {op.var!r}")
            if op.kind is OpKind.WRITE:
                if op.proc not in spec.writers:
                    raise HistoryError(f"op {op.op_id}: proc {op.proc} is not a writer of {op.var!r}")
                if not 0 <= op.arg < spec.domain:
                    raise HistoryError(f"op {op.op_id}: arg {op.arg} outside domain of {op.var!r}")
            else:
                if op.proc not in spec.readers:
                    raise HistoryError(f"op {op.op_id}: proc {op.proc} is not a reader of {op.var!r}")
                if op.ret is not None and not 0 <= op.ret < spec.domain:
                    raise HistoryError(f"op {op.op_id}: ret {op.ret} outside domain of {op.var!r}")
            for s in (op.start, op.end):
                if s is not None:
                    if s in steps:
                        raise HistoryError(f"duplicate step index {s}")
                    steps.add(s)
            per_proc.setdefault(op.proc, []).append(op)
        # Processes are sequential: a process's operations never overlap,
        # and a pending operation is its process's last.
        for proc, ops in per_proc.items():
            prev: OpRecord | None = None
            for op in ops:  # already sorted by start
                if prev is not None:
                    if prev.end is None or prev.end > op.start:
                        raise HistoryError(
                            f"proc {proc}: ops {prev.op_id} and {op.op_id} overlap"
                        )
                prev = op
        # For 1-writer variables all Writes are issued by one sequential
        # process, so total write order follows from the per-process check;
        # re-verified here so hand-built histories fail loudly.
        for name, spec in self.vars.items():
            if len(spec.writers) == 1:
                writes = sorted(
                    (o for o in self.ops if o.var == name and o.kind is OpKind.WRITE),
                    key=lambda o: o.start,
                )
                for a, b in zip(writes, writes[1:]):
                    if a.end is None or a.end > b.start:
                        raise HistoryError(f"var {name!r}: Writes {a.op_id}, {b.op_id} not totally ordered")

    def ops_on(self, var: str) -> tuple[OpRecord, ...]:
        return tuple(o for o in self.ops if o.var == var)


def feasible_values(h: History, r: OpRecord, level: SemanticsLevel) -> set[int]:
    """Values a completed Read may legally return at the given level.

    For a Read overlapping no Write this is a singleton at every level: the
    argument of the latest preceding Write, or the variable's initial value.
    With overlap, Safe admits the whole domain while Regular (and, as a
    per-Read necessary condition, Atomic) admits the latest preceding value
    plus the argument of every overlapping Write.  Pending Writes count as
    overlapping everything invoked after them.

    Defined for single-writer variables only; multiwriter histories have no
    unique "latest preceding Write" and are judged globally by the atomicity
    checker instead.
    """
    if r not in h.ops:
        raise HistoryError(f"op {r.op_id} is not part of this history")
    if r.kind is not OpKind.READ:
        raise HistoryError(f"op {r.op_id} is not a Read")
    if not r.completed:
        raise HistoryError("incomplete operation has no end")
    spec = h.vars[r.var]
    if len(spec.writers) > 1:
        raise HistoryError(f"var {r.var!r}: classification undefined, use Atomic")
    latest_val = spec.init
    latest_end = -1
    overlapping: list[OpRecord] = []
    for w in h.ops:
        if w.var != r.var or w.kind is not OpKind.WRITE:
            continue
        if w.end is not None and w.end < r.start:
            if w.end > latest_end:
                latest_end = w.end
                latest_val = w.arg
        elif _overlaps_open(w, r):
            overlapping.append(w)
    if not overlapping:
        return {latest_val}
    if level is SemanticsLevel.SAFE:
        return set(range(spec.domain))
    return {latest_val} | {w.arg for w in overlapping}


# ---------------------------------------------------------------------------
# Trace codec (JSON lines)
#
# Line 1 is a header object:
#   {"version":1,"vars":{name:{"domain":m,"init":v,"writers":[..],"readers":[..]}}}
# Each following line is one event, steps strictly increasing down the file:
#   {"step":k,"op":id,"proc":p,"var":name,"act":"invoke"|"respond","kind":"R"|"W",...}
# Write invokes carry "arg"; completed Read responds carry "ret".  Unknown
# header keys (e.g. a "decisions" extension) are ignored on parse.
# ---------------------------------------------------------------------------

TRACE_VERSION = 1


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def serialize_trace(h: History, extensions: Mapping[str, object] | None = None) -> str:
    """Render a History in canonical trace form: header, then one event per
    line in step order.  ``extensions`` adds extra header keys (ignored by
    :func:`parse_trace`)."""
    header: dict[str, object] = {
        "version": TRACE_VERSION,
        "vars": {
            name: {
                "domain": spec.domain,
                "init": spec.init,
                "writers": sorted(spec.writers),
                "readers": sorted(spec.readers),
            }
            for name, spec in sorted(h.vars.items())
        },
    }
    if extensions:
        header.update(extensions)
    events: list[tuple[int, dict]] = []
    for op in h.ops:
        inv = {
            "step": op.start,
            "op": op.op_id,
            "proc": op.proc,
            "var": op.var,
            "act": "invoke",
            "kind": op.kind.value,
        }
        if op.kind is OpKind.WRITE:
            inv["arg"] = op.arg
        events.append((op.start, inv))
        if op.completed:
            resp = {
                "step": op.end,
                "op": op.op_id,
                "proc": op.proc,
                "var": op.var,
                "act": "respond",
                "kind": op.kind.value,
            }
            if op.kind is OpKind.READ:
                resp["ret"] = op.ret
            events.append((op.end, resp))
    events.sort(key=lambda e: e[0])
    lines = [_dump_line(header)] + [_dump_line(e) for _, e in events]
    return "\n".join(lines) + "\n"


def _event_field(ev: dict, key: str, lineno: int):
    if key not in ev:
        raise TraceError(f"line {lineno}: event missing {key!r}")
    return ev[key]


def parse_trace(text: str) -> History:
    """Parse a trace document and return a fully validated History."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TraceError("empty trace")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TraceError(f"line 1: invalid JSON: {exc}") from None
    if not isinstance(header, dict) or header.get("version") != TRACE_VERSION:
        raise TraceError("header missing or wrong version")
    raw_vars = header.get("vars")
    if not isinstance(raw_vars, dict):
        raise TraceError("header missing vars")
    vars: dict[str, VarSpec] = {}
    for name, v in raw_vars.items():
        try:
            vars[name] = VarSpec(
                domain=int(v["domain"]),
                init=int(v["init"]),
                writers=frozenset(int(p) for p in v["writers"]),
                readers=frozenset(int(p) for p in v["readers"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceError(f"var {name!r}: bad declaration: {exc}") from None

    open_ops: dict[int, dict] = {}
    done: list[OpRecord] = []
    last_step = -1
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            ev = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceError(f"line {lineno}: invalid JSON: {exc}") from None
        if not isinstance(ev, dict):
            raise TraceError(f"line {lineno}: event is not an object")
        step = int(_event_field(ev, "step", lineno))
        if step <= last_step:
            raise TraceError(f"line {lineno}: step {step} not increasing (duplicate or out of order)")
        last_step = step
        op_id = int(_event_field(ev, "op", lineno))
        act = _event_field(ev, "act", lineno)
        kind_code = _event_field(ev, "kind", lineno)
        try:
            kind = OpKind(kind_code)
        except ValueError:
            raise TraceError(f"line {lineno}: unknown kind {kind_code!r}") from None
        proc = int(_event_field(ev, "proc", lineno))
        var = _event_field(ev, "var", lineno)
        if act == "invoke":
            if op_id in open_ops or any(o.op_id == op_id for o in done):
                raise TraceError(f"line {lineno}: duplicate invoke for op {op_id}")
            rec = {"proc": proc, "var": var, "kind": kind, "start": step, "arg": None}
            if kind is OpKind.WRITE:
                rec["arg"] = int(_event_field(ev, "arg", lineno))
            open_ops[op_id] = rec
        elif act == "respond":
            rec = open_ops.pop(op_id, None)
            if rec is None:
                raise TraceError(f"line {lineno}: respond without invoke for op {op_id}")
            if rec["proc"] != proc or rec["var"] != var or rec["kind"] is not kind:
                raise TraceError(f"line {lineno}: respond fields disagree with invoke for op {op_id}")
            ret = None
            if kind is OpKind.READ:
                ret = int(_event_field(ev, "ret", lineno))
            done.append(
                OpRecord(op_id=op_id, proc=proc, var=var, kind=kind,
                         start=rec["start"], end=step, arg=rec["arg"], ret=ret)
            )
        else:
            raise TraceError(f"line {lineno}: unknown act {act!r}")
    for op_id, rec in open_ops.items():
        done.append(
            OpRecord(op_id=op_id, proc=rec["proc"], var=rec["var"], kind=rec["kind"],
                     start=rec["start"], end=None, arg=rec["arg"], ret=None)
        )
    try:
        return History(vars=vars, ops=tuple(done))
    except TraceError:
        raise
    except HistoryError as exc:
        raise TraceError(str(exc)) from None
