"""Unbounded concurrent timestamp system: wait-free Labeling and Scan.

Every process owns one labeled object.  Labeling gives the caller's object
a fresh label that is larger than every label it can see; Scan reports all
objects in ascending label order.  Labels are (sequence, process-id) tags
under the same lexicographic order the register constructions use, so the
system is wait-free but unbounded.

``check_cts`` verifies the testable temporal-order contract on a recorded
timestamp history: per-process label monotonicity, precedence-consistent
ordering of scanned objects, and well-formed scan results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping

from .checkers import Verdict
from .constructions import Tag, TagCodec, tag_less
from .engine import (
    BaseRegisterSpec,
    EngineError,
    Execution,
    ProtocolSpec,
    ReadAction,
    ReturnAction,
    StepProgram,
    WriteAction,
)
from .history import HistoryError, SemanticsLevel, TraceError

LABELING = "Labeling"
SCAN = "Scan"


@dataclass(frozen=True)
class Label:
    """A timestamp: the tag a Labeling assigned to its owner's object."""

    tag: Tag


@dataclass(frozen=True)
class LabeledObject:
    owner: int
    label: Label
    payload: int


#: Scan output: one entry per process, strictly ascending by label tag.
ScanResult = tuple[LabeledObject, ...]


def scan_order(entries: Iterable[LabeledObject]) -> ScanResult:
    """Sort labeled objects into temporal order (ascending tag).

    Pure; used by both the Scan program and the checker.  Exactly one entry
    per owner is required.
    """
    items = list(entries)
    owners = [e.owner for e in items]
    if len(set(owners)) != len(owners):
        raise HistoryError("duplicate owner in scan entries")
    return tuple(sorted(items, key=lambda e: e.label.tag))


# ---------------------------------------------------------------------------
# The construction
# ---------------------------------------------------------------------------


class _CtsProgram(StepProgram):
    """One atomic register per process holding (label, payload).

    Labeling(payload) by p: collect all n registers, pick the successor of
    the largest sequence seen, publish ((s, p), payload), and return the
    assigned tag.  Scan: collect all n registers and return the decoded
    objects in ascending tag order.  Scans write nothing.
    """

    def __init__(self, n: int, codec: TagCodec):
        self.n = n
        self.codec = codec

    def begin(self, proc, mem, kind, arg):
        if kind == LABELING:
            return ReadAction(0), ("l", 1, 0, arg)
        return ReadAction(0), ("s", 1, ())

    def resume(self, proc, mem, state, result):
        phase = state[0]
        if phase == "l":
            _, k, max_seq, payload = state
            seq = self.codec.decode(result).tag.seq
            if seq > max_seq:
                max_seq = seq
            if k < self.n:
                return ReadAction(k), ("l", k + 1, max_seq, payload)
            enc = self.codec.encode(max_seq + 1, proc, payload)
            return WriteAction(proc, enc), ("commit", max_seq + 1)
        if phase == "s":
            _, k, seen = state
            seen = seen + (result,)
            if k < self.n:
                return ReadAction(k), ("s", k + 1, seen)
            objs = [
                LabeledObject(owner=i, label=Label(tv.tag), payload=tv.val)
                for i, tv in enumerate(map(self.codec.decode, seen))
            ]
            wire = tuple(
                (o.owner, o.label.tag.seq, o.label.tag.pid, o.payload)
                for o in scan_order(objs)
            )
            return ReturnAction(wire, mem), None
        # commit
        _, seq = state
        return ReturnAction((seq, proc), mem), None


def build_cts(n: int, domain: int = 8) -> ProtocolSpec:
    """Concurrent timestamp system for n processes.

    Initial labels are (0, pid) with payload 0, legitimate Scan content
    before any Labeling.  Budgets: Labeling n+1, Scan n.
    """
    if n < 1:
        raise EngineError("need at least one process")
    codec = TagCodec(n_pids=n, payload_domain=domain)
    everyone = frozenset(range(n))
    regs = tuple(
        BaseRegisterSpec(
            name=f"obj{p}", owner=p, readers=everyone,
            domain=codec.domain, init=codec.encode(0, p, 0),
            semantics=SemanticsLevel.ATOMIC,
        )
        for p in range(n)
    )
    return ProtocolSpec(
        name="cts",
        n_processes=n,
        registers=regs,
        program=_CtsProgram(n, codec),
        budgets={LABELING: n + 1, SCAN: n},
        var_name=None,
        domain=domain,
        init=0,
        writers=everyone,
        readers=everyone,
    )


# ---------------------------------------------------------------------------
# Recorded timestamp histories and their checker
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CtsOp:
    """One Labeling or Scan execution.

    Completed Labelings carry the assigned ``label``; completed Scans carry
    ``result``.  Pending operations have ``end is None`` and no outcome.
    """

    op_id: int
    proc: int
    kind: str
    start: int
    end: int | None = None
    payload: int | None = None
    label: Tag | None = None
    result: ScanResult | None = None

    @property
    def completed(self) -> bool:
        return self.end is not None


@dataclass(frozen=True)
class CtsHistory:
    n: int
    ops: tuple[CtsOp, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "ops", tuple(sorted(self.ops, key=lambda o: o.start)))
        self._validate()

    def _validate(self) -> None:
        steps: set[int] = set()
        last_per_proc: dict[int, CtsOp] = {}
        ids: set[int] = set()
        for op in self.ops:
            if op.op_id in ids:
                raise HistoryError(f"duplicate op id {op.op_id}")
            ids.add(op.op_id)
            if op.kind not in (LABELING, SCAN):
                raise HistoryError(f"op {op.op_id}: unknown kind {op.kind!r}")
            if not 0 <= op.proc < self.n:
                raise HistoryError(f"op {op.op_id}: proc {op.proc} out of range")
            if op.end is not None and op.end <= op.start:
                raise HistoryError(f"op {op.op_id}: end not after start")
            if op.completed:
                if op.kind == LABELING and op.label is None:
                    raise HistoryError(f"op {op.op_id}: completed Labeling without label")
                if op.kind == SCAN and op.result is None:
                    raise HistoryError(f"op {op.op_id}: completed Scan without result")
            for s in (op.start, op.end):
                if s is not None:
                    if s in steps:
                        raise HistoryError(f"duplicate step index {s}")
                    steps.add(s)
            prev = last_per_proc.get(op.proc)
            if prev is not None and (prev.end is None or prev.end > op.start):
                raise HistoryError(f"proc {op.proc}: ops {prev.op_id}, {op.op_id} overlap")
            last_per_proc[op.proc] = op


def check_cts(h: CtsHistory) -> Verdict:
    """Temporal-order correctness of a recorded timestamp history.

    Passes iff (a) each process's Labelings carry strictly increasing
    labels in execution order, (b) whenever the latest Labelings by p and q
    preceding a Scan are themselves ordered by precedence and no other
    Labeling by p or q overlaps the Scan, the Scan lists p's object before
    q's, and (c) every Scan result is complete (one entry per process) and
    strictly ascending by tag.
    """
    labelings = [o for o in h.ops if o.kind == LABELING]
    # (a) per-process label monotonicity
    per_proc: dict[int, list[CtsOp]] = {}
    for op in labelings:
        if op.completed:
            per_proc.setdefault(op.proc, []).append(op)
    for proc, ops in per_proc.items():
        for a, b in zip(ops, ops[1:]):  # start-ordered
            if not tag_less(a.label, b.label):
                return Verdict(
                    ok=False, violating_op=b.op_id,
                    reason=(
                        f"proc {proc}: Labeling {b.op_id} label {tuple(b.label)} "
                        f"not above previous {tuple(a.label)}"
                    ),
                )
    for scan in h.ops:
        if scan.kind != SCAN or not scan.completed:
            continue
        # (c) completeness and internal order
        owners = [e.owner for e in scan.result]
        if sorted(owners) != list(range(h.n)):
            return Verdict(
                ok=False, violating_op=scan.op_id,
                reason=f"Scan {scan.op_id} result does not cover every process exactly once",
            )
        if scan.result != scan_order(scan.result):
            return Verdict(
                ok=False, violating_op=scan.op_id,
                reason=f"Scan {scan.op_id} result is not in ascending label order",
            )
        # (b) precedence consistency
        rank = {e.owner: i for i, e in enumerate(scan.result)}
        latest: dict[int, CtsOp] = {}
        disturbed: set[int] = set()
        for op in labelings:
            if op.end is not None and op.end < scan.start:
                cur = latest.get(op.proc)
                if cur is None or cur.end < op.end:
                    latest[op.proc] = op
            elif op.start < scan.end:  # overlaps the scan
                disturbed.add(op.proc)
        for p, lp in latest.items():
            if p in disturbed:
                continue
            for q, lq in latest.items():
                if q == p or q in disturbed:
                    continue
                if lp.end < lq.start and rank[p] > rank[q]:
                    return Verdict(
                        ok=False, violating_op=scan.op_id,
                        reason=(
                            f"Scan {scan.op_id} orders proc {q} before proc {p} although "
                            f"Labeling {lp.op_id} preceded Labeling {lq.op_id}"
                        ),
                    )
    return Verdict(ok=True)


def extract_cts_history(execution: Execution) -> CtsHistory:
    """Project a cts execution onto a CtsHistory."""
    spec = execution.protocol
    if LABELING not in spec.budgets:
        raise EngineError(f"protocol {spec.name!r} is not a timestamp system")
    ops = []
    for op in execution.ops:
        if op.kind == LABELING:
            ops.append(
                CtsOp(op_id=op.op_id, proc=op.proc, kind=LABELING,
                      start=op.start, end=op.end, payload=op.arg,
                      label=Tag(*op.ret))
            )
        else:
            result = tuple(
                LabeledObject(owner=o, label=Label(Tag(seq, pid)), payload=val)
                for o, seq, pid, val in op.ret
            )
            ops.append(
                CtsOp(op_id=op.op_id, proc=op.proc, kind=SCAN,
                      start=op.start, end=op.end, result=result)
            )
    return CtsHistory(n=spec.n_processes, ops=tuple(ops))


# ---------------------------------------------------------------------------
# Trace codec for timestamp histories (JSON lines, same shape as register
# traces: a header line, then one event per line in step order)
# ---------------------------------------------------------------------------


def serialize_cts_trace(h: CtsHistory, extensions: Mapping[str, object] | None = None) -> str:
    header: dict[str, object] = {"version": 1, "cts": {"n": h.n}}
    if extensions:
        header.update(extensions)
    events: list[tuple[int, dict]] = []
    for op in h.ops:
        code = "L" if op.kind == LABELING else "S"
        inv = {"step": op.start, "op": op.op_id, "proc": op.proc, "act": "invoke", "kind": code}
        if op.kind == LABELING:
            inv["arg"] = op.payload
        events.append((op.start, inv))
        if op.completed:
            resp = {"step": op.end, "op": op.op_id, "proc": op.proc, "act": "respond", "kind": code}
            if op.kind == LABELING:
                resp["ret"] = [op.label.seq, op.label.pid]
            else:
                resp["ret"] = [
                    [e.owner, e.label.tag.seq, e.label.tag.pid, e.payload] for e in op.result
                ]
            events.append((op.end, resp))
    events.sort(key=lambda e: e[0])
    lines = [json.dumps(e, sort_keys=True, separators=(",", ":"))
             for e in [header] + [ev for _, ev in events]]
    return "\n".join(lines) + "\n"


def parse_cts_trace(text: str) -> CtsHistory:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TraceError("empty trace")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TraceError(f"line 1: invalid JSON: {exc}") from None
    if not isinstance(header, dict) or header.get("version") != 1 or "cts" not in header:
        raise TraceError("not a timestamp trace header")
    n = int(header["cts"]["n"])
    open_ops: dict[int, dict] = {}
    done: list[CtsOp] = []
    last_step = -1
    kinds = {"L": LABELING, "S": SCAN}
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            ev = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceError(f"line {lineno}: invalid JSON: {exc}") from None
        try:
            step = int(ev["step"])
            op_id = int(ev["op"])
            proc = int(ev["proc"])
            act = ev["act"]
            kind = kinds[ev["kind"]]
        except (KeyError, TypeError, ValueError):
            raise TraceError(f"line {lineno}: malformed event") from None
        if step <= last_step:
            raise TraceError(f"line {lineno}: step {step} not increasing")
        last_step = step
        if act == "invoke":
            if op_id in open_ops:
                raise TraceError(f"line {lineno}: duplicate invoke for op {op_id}")
            open_ops[op_id] = {
                "proc": proc, "kind": kind, "start": step,
                "payload": int(ev["arg"]) if kind == LABELING else None,
            }
        elif act == "respond":
            rec = open_ops.pop(op_id, None)
            if rec is None or rec["proc"] != proc or rec["kind"] != kind:
                raise TraceError(f"line {lineno}: respond does not match invoke for op {op_id}")
            if kind == LABELING:
                seq, pid = ev["ret"]
                done.append(CtsOp(op_id=op_id, proc=proc, kind=kind, start=rec["start"],
                                  end=step, payload=rec["payload"], label=Tag(int(seq), int(pid))))
            else:
                result = tuple(
                    LabeledObject(owner=int(o), label=Label(Tag(int(s), int(p))), payload=int(v))
                    for o, s, p, v in ev["ret"]
                )
                done.append(CtsOp(op_id=op_id, proc=proc, kind=kind, start=rec["start"],
                                  end=step, result=result))
        else:
            raise TraceError(f"line {lineno}: unknown act {act!r}")
    for op_id, rec in open_ops.items():
        done.append(CtsOp(op_id=op_id, proc=rec["proc"], kind=rec["kind"],
                          start=rec["start"], payload=rec["payload"]))
    try:
        return CtsHistory(n=n, ops=tuple(done))
    except HistoryError as exc:
        raise TraceError(str(exc)) from None
