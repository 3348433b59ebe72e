"""Judging histories against the safe / regular / atomic hierarchy.

``check_level`` is the production checker.  ``brute_force_atomic`` is a
deliberately naive permutation-enumeration oracle that shares no code with
the search-based checker; the two must agree on every history small enough
for the oracle, and the test suite holds them to that.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping

from .history import (
    History,
    HistoryError,
    OpKind,
    OpRecord,
    SemanticsLevel,
    feasible_values,
)

if TYPE_CHECKING:  # pragma: no cover
    from .engine import Execution

#: Maximum ops per variable fed to the factorial oracle.
BRUTE_FORCE_LIMIT = 8

#: Per-operation-kind cap on base-register accesses.
StepBudget = Mapping[str, int]


@dataclass(frozen=True)
class Verdict:
    """Outcome of a check: pass/fail plus a machine-usable witness.

    A failing verdict names the violating operation and explains why; a
    passing atomicity verdict carries one witness linearization (a sequence
    of op ids) per variable.
    """

    ok: bool
    violating_op: int | None = None
    reason: str | None = None
    linearizations: Mapping[str, tuple[int, ...]] | None = None

    def __post_init__(self) -> None:
        if not self.ok and (self.violating_op is None or self.reason is None):
            raise ValueError("failing verdict requires a witness")


def _require_single_writer(h: History, level: SemanticsLevel) -> None:
    touched = {op.var for op in h.ops}
    for var in touched:
        if len(h.vars[var].writers) > 1:
            raise HistoryError(
                f"var {var!r}: {level.name.lower()} classification undefined, use Atomic"
            )


def check_level(h: History, level: SemanticsLevel) -> Verdict:
    """Does the history conform to the given semantics level?

    Safe and Regular are per-Read conditions on single-writer variables.
    Atomic searches, per variable, for a total order of the operations that
    extends precedence and in which every Read returns the argument of the
    latest preceding Write (or the initial value); the search extends
    partial sequences only while the read-value constraints remain
    satisfiable.
    """
    if level is SemanticsLevel.ATOMIC:
        return _check_atomic(h)
    _require_single_writer(h, level)
    for r in h.ops:  # already sorted by start
        if r.kind is not OpKind.READ or not r.completed:
            continue
        allowed = feasible_values(h, r, level)
        if r.ret not in allowed:
            return Verdict(
                ok=False,
                violating_op=r.op_id,
                reason=(
                    f"Read {r.op_id} on {r.var!r} returned {r.ret}, "
                    f"{level.name.lower()} semantics allows {sorted(allowed)}"
                ),
            )
    return Verdict(ok=True)


def _check_atomic(h: History) -> Verdict:
    lins: dict[str, tuple[int, ...]] = {}
    for var in sorted({op.var for op in h.ops}):
        found, witness = _linearize_var(h, var)
        if found is None:
            assert witness is not None
            return Verdict(
                ok=False,
                violating_op=witness.op_id,
                reason=(
                    f"no linearization of {var!r}: Read {witness.op_id} "
                    f"(ret {witness.ret}) cannot be placed consistently"
                ),
            )
        lins[var] = found
    return Verdict(ok=True, linearizations=lins)


def _linearize_var(h: History, var: str) -> tuple[tuple[int, ...] | None, OpRecord | None]:
    """Search for a linearization of one variable.

    Completed operations must all be placed; pending Writes may be placed
    anywhere consistent with precedence or omitted entirely; pending Reads
    are ignored.  Candidates are tried in (end, start, op_id) order, which
    makes the returned witness deterministic.  Returns (sequence, None) on
    success, (None, blocking_read) on failure.
    """
    spec = h.vars[var]
    ops = [
        o for o in h.ops
        if o.var == var and (o.completed or o.kind is OpKind.WRITE)
    ]
    inf = float("inf")
    ops.sort(key=lambda o: (o.end if o.end is not None else inf, o.start, o.op_id))
    need = sum(1 for o in ops if o.completed)
    if need == 0:
        return (), None

    seq: list[int] = []
    remaining = set(range(len(ops)))
    # Deepest prefix the search reached, and the reads rejected there:
    # the earliest of those is the reported inconsistency witness.
    best_depth = -1
    blocked: list[OpRecord] = []

    def dfs(value: int, placed_completed: int) -> bool:
        nonlocal best_depth, blocked
        if placed_completed == need:
            return True
        for i in range(len(ops)):
            if i not in remaining:
                continue
            cand = ops[i]
            # cand is appendable only if no unplaced op must come first
            free = True
            for j in remaining:
                if j != i:
                    oj = ops[j]
                    if oj.end is not None and oj.end < cand.start:
                        free = False
                        break
            if not free:
                continue
            if cand.kind is OpKind.READ:
                if cand.ret != value:
                    depth = len(seq)
                    if depth > best_depth:
                        best_depth = depth
                        blocked = [cand]
                    elif depth == best_depth:
                        blocked.append(cand)
                    continue
                next_value = value
            else:
                next_value = cand.arg
            seq.append(i)
            remaining.discard(i)
            if dfs(next_value, placed_completed + (1 if cand.completed else 0)):
                return True
            remaining.add(i)
            seq.pop()
        return False

    if dfs(spec.init, 0):
        return tuple(ops[i].op_id for i in seq), None
    if blocked:
        witness = min(blocked, key=lambda o: (o.start, o.op_id))
    else:  # unreachable for interval orders, kept for safety
        witness = next(o for o in ops if o.kind is OpKind.READ)
    return None, witness


def brute_force_atomic(h: History) -> bool:
    """Independent atomicity oracle: enumerate every permutation.

    Per variable, every subset of pending Writes combined with all completed
    operations is permuted outright; a permutation is accepted iff it
    extends precedence (no op may end before an earlier-placed op starts)
    and replays every Read's return value.  No pruning, no code shared with
    :func:`check_level`.  Guarded against factorial blow-up at
    ``BRUTE_FORCE_LIMIT`` completed ops per variable.
    """
    inf = float("inf")
    for var in {op.var for op in h.ops}:
        completed = [o for o in h.ops if o.var == var and o.completed]
        pending_writes = [
            o for o in h.ops if o.var == var and not o.completed and o.kind is OpKind.WRITE
        ]
        if len(completed) > BRUTE_FORCE_LIMIT:
            raise HistoryError(
                f"var {var!r}: {len(completed)} completed ops exceed oracle limit {BRUTE_FORCE_LIMIT}"
            )
        init = h.vars[var].init
        # (start, end, is_write, value) per op; the loop below touches
        # nothing else, keeping the permutation scan cheap.
        comp = [
            (o.start, o.end, o.kind is OpKind.WRITE,
             o.arg if o.kind is OpKind.WRITE else o.ret)
            for o in completed
        ]
        pend = [(o.start, inf, True, o.arg) for o in pending_writes]
        found = False
        for k in range(len(pend) + 1):
            for extra in itertools.combinations(pend, k):
                for perm in itertools.permutations(comp + list(extra)):
                    max_start = -1
                    value = init
                    for s, e, is_write, v in perm:
                        if e < max_start:
                            break
                        if s > max_start:
                            max_start = s
                        if is_write:
                            value = v
                        elif v != value:
                            break
                    else:
                        found = True
                        break
                if found:
                    break
            if found:
                break
        if not found:
            return False
    return True


def classify(h: History) -> SemanticsLevel | None:
    """Highest level the history passes, or None if even Safe fails."""
    if check_level(h, SemanticsLevel.ATOMIC).ok:
        return SemanticsLevel.ATOMIC
    for level in (SemanticsLevel.REGULAR, SemanticsLevel.SAFE):
        if check_level(h, level).ok:
            return level
    return None


def check_wait_free(execution: "Execution", budget: StepBudget) -> Verdict:
    """Did every completed operation stay within its base-access budget?

    The budget maps operation kinds (e.g. ``"Write"``) to the maximum
    number of base-register accesses allowed, irrespective of scheduling.
    """
    for op in sorted(execution.ops, key=lambda o: o.start):
        if op.kind not in budget:
            raise KeyError(f"no budget for operation kind {op.kind!r}")
        if op.base_accesses > budget[op.kind]:
            return Verdict(
                ok=False,
                violating_op=op.op_id,
                reason=(
                    f"{op.kind} {op.op_id} by proc {op.proc} used "
                    f"{op.base_accesses} base accesses, budget {budget[op.kind]}"
                ),
            )
    return Verdict(ok=True)
