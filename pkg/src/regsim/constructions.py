"""Wait-free register constructions as simulatable protocols.

Ships the three classic constructions over weak base registers, with
unbounded monotone tags standing in for bounded timestamp machinery:

* ``regular_bit`` — a regular 1-writer n-reader bit from one safe bit.
  The writer skips base writes that would not change the bit, so an
  overlapped safe Read can only ever observe regular-feasible values.
* ``multireader`` — an atomic 1-writer n-reader register from n**2 atomic
  1-writer 1-reader registers carrying (tag, value) pairs: n writer-to-
  reader registers plus n*(n-1) reader-to-reader registers through which
  readers announce the value they chose, preventing new-old inversion
  between readers.
* ``multiwriter`` — an atomic n-writer n-reader register from n atomic
  1-writer n-reader registers: a writer collects all tags, picks a
  sequence number one above the maximum it saw, and tie-breaks equal
  sequence numbers by process id.

A pass-through ``raw_register`` protocol exposes a single base register of
any declared semantics directly; it exists so the safe/regular adversary
itself can be exercised and checked.

Tags are (sequence, process-id) pairs under lexicographic order.  They are
unbounded naturals in principle; encoding into the finite base-register
domain uses a fixed width that desk-scale runs cannot exhaust, with a
guard that fails loudly if they ever do.
"""

from __future__ import annotations

from typing import NamedTuple

from .engine import (
    BaseRegisterSpec,
    EngineError,
    ProtocolSpec,
    ReadAction,
    ReturnAction,
    StepProgram,
    WriteAction,
)
from .history import SemanticsLevel


class Tag(NamedTuple):
    """Ordering token attached to written values: (sequence, process id)."""

    seq: int
    pid: int


class TaggedValue(NamedTuple):
    tag: Tag
    val: int


def tag_less(a: Tag, b: Tag) -> bool:
    """Strict lexicographic order: by sequence, then by process id.

    For any two tags exactly one of ``tag_less(a, b)``, ``tag_less(b, a)``
    and ``a == b`` holds.
    """
    return a.seq < b.seq or (a.seq == b.seq and a.pid < b.pid)


#: Sequence numbers below this bound are encodable; desk-scale runs use a
#: few dozen at most.  The bounded constructions that remove this limit
#: altogether are out of scope here.
MAX_SEQ = 1 << 20


class TagCodec:
    """Injective pairing of (seq, pid, payload) into one register value.

    ``encode(seq, pid, val) = (seq * n_pids + pid) * payload_domain + val``
    so the register domain is ``MAX_SEQ * n_pids * payload_domain``.
    """

    def __init__(self, n_pids: int, payload_domain: int):
        self.n_pids = n_pids
        self.payload_domain = payload_domain
        self.domain = MAX_SEQ * n_pids * payload_domain

    def encode(self, seq: int, pid: int, val: int) -> int:
        if seq >= MAX_SEQ:
            raise EngineError(f"tag sequence {seq} overflows the encoding width")
        return (seq * self.n_pids + pid) * self.payload_domain + val

    def decode(self, raw: int) -> TaggedValue:
        rest, val = divmod(raw, self.payload_domain)
        seq, pid = divmod(rest, self.n_pids)
        return TaggedValue(Tag(seq, pid), val)


def _max_tagged(codec: TagCodec, a: int, b: int) -> int:
    """The encoded value carrying the larger tag (payload ignored)."""
    if tag_less(codec.decode(a).tag, codec.decode(b).tag):
        return b
    return a


# ---------------------------------------------------------------------------
# raw_register: high-level ops map one-to-one onto one base register
# ---------------------------------------------------------------------------


class _RawProgram(StepProgram):
    def begin(self, proc, mem, kind, arg):
        if kind == "Write":
            return WriteAction(0, arg), None
        return ReadAction(0), None

    def resume(self, proc, mem, state, result):
        return ReturnAction(result, mem), None


def build_raw_register(
    n_readers: int,
    domain: int = 2,
    semantics: SemanticsLevel = SemanticsLevel.SAFE,
    init: int = 0,
) -> ProtocolSpec:
    """Process 0 writes, processes 1..n_readers read, all directly against a
    single base register of the given semantics."""
    if n_readers < 1:
        raise EngineError("need at least one reader")
    readers = frozenset(range(1, n_readers + 1))
    reg = BaseRegisterSpec(
        name="r0", owner=0, readers=readers, domain=domain, init=init, semantics=semantics
    )
    return ProtocolSpec(
        name="raw_register",
        n_processes=n_readers + 1,
        registers=(reg,),
        program=_RawProgram(),
        budgets={"Write": 1, "Read": 1},
        var_name="X",
        domain=domain,
        init=init,
        writers=frozenset({0}),
        readers=readers,
    )


# ---------------------------------------------------------------------------
# regular_bit: regular bit from one safe bit
# ---------------------------------------------------------------------------


class _RegularBitProgram(StepProgram):
    """Writer memory holds the last value actually written.  A Write of the
    same value performs no base access at all, so every base write flips
    the bit and an overlapped safe Read cannot stray outside the regular
    feasible set."""

    def __init__(self, init: int):
        self._init = init

    def initial_memory(self, proc):
        return self._init if proc == 0 else None

    def begin(self, proc, mem, kind, arg):
        if kind == "Write":
            if arg not in (0, 1):
                raise EngineError("regular_bit is boolean")
            if arg == mem:
                return ReturnAction(None, mem), None
            return WriteAction(0, arg), arg
        return ReadAction(0), None

    def resume(self, proc, mem, state, result):
        if state is None:  # Read
            return ReturnAction(result, mem), None
        return ReturnAction(None, state), None  # Write: remember new value


def build_regular_bit(n_readers: int) -> ProtocolSpec:
    """Regular 1-writer n-reader boolean register over one safe bit."""
    if n_readers < 1:
        raise EngineError("need at least one reader")
    readers = frozenset(range(1, n_readers + 1))
    reg = BaseRegisterSpec(
        name="bit", owner=0, readers=readers, domain=2, init=0,
        semantics=SemanticsLevel.SAFE,
    )
    return ProtocolSpec(
        name="regular_bit",
        n_processes=n_readers + 1,
        registers=(reg,),
        program=_RegularBitProgram(init=0),
        budgets={"Write": 1, "Read": 1},
        var_name="X",
        domain=2,
        init=0,
        writers=frozenset({0}),
        readers=readers,
    )


# ---------------------------------------------------------------------------
# multireader: atomic 1-writer n-reader from n**2 atomic 1W1R registers
# ---------------------------------------------------------------------------


class _MultiReaderProgram(StepProgram):
    """Process 0 is the writer; processes 1..n are readers.

    Write(v): bump the local sequence number and push (tag, v) to the n
    writer-to-reader registers in index order.

    Read by reader j: collect the writer register and the n-1 incoming
    reader-to-reader registers, fold in the locally remembered last choice,
    pick the maximum tag, announce it through the n-1 outgoing registers,
    remember it, and return its payload.  The local memory keeps a reader's
    reads monotone; the announcements keep readers consistent with each
    other.
    """

    def __init__(self, n: int, codec: TagCodec, init_enc: int, writeback: bool):
        self.n = n
        self.codec = codec
        self.init_enc = init_enc
        self.writeback = writeback
        # Incoming registers per reader, in collect order, and outgoing
        # reader-to-reader registers, in announce order.
        self.sources = {j: [self._w_reg(j)] + [self._c_reg(i, j) for i in range(1, n + 1) if i != j]
                        for j in range(1, n + 1)}
        self.sinks = {j: [self._c_reg(j, i) for i in range(1, n + 1) if i != j]
                      for j in range(1, n + 1)}

    def _w_reg(self, j: int) -> int:
        return j - 1

    def _c_reg(self, i: int, j: int) -> int:
        # Outgoing block of reader i, positions ordered by destination j.
        return self.n + (i - 1) * (self.n - 1) + (j - 1 if j < i else j - 2)

    def initial_memory(self, proc):
        if proc == 0:
            return 0  # last used sequence number
        return self.init_enc  # last chosen (tag, value)

    def begin(self, proc, mem, kind, arg):
        if kind == "Write":
            enc = self.codec.encode(mem + 1, 0, arg)
            return WriteAction(self._w_reg(1), enc), ("w", 1, enc, mem + 1)
        return ReadAction(self.sources[proc][0]), ("collect", 1, mem)

    def resume(self, proc, mem, state, result):
        phase = state[0]
        if phase == "w":
            _, k, enc, seq = state
            if k < self.n:
                return WriteAction(self._w_reg(k + 1), enc), ("w", k + 1, enc, seq)
            return ReturnAction(None, seq), None
        if phase == "collect":
            _, k, best = state
            best = _max_tagged(self.codec, best, result)
            if k < self.n:
                return ReadAction(self.sources[proc][k]), ("collect", k + 1, best)
            if self.writeback and self.n > 1:
                return WriteAction(self.sinks[proc][0], best), ("announce", 1, best)
            return ReturnAction(self.codec.decode(best).val, best), None
        # announce
        _, k, best = state
        if k < self.n - 1:
            return WriteAction(self.sinks[proc][k], best), ("announce", k + 1, best)
        return ReturnAction(self.codec.decode(best).val, best), None


def build_multireader(n: int, domain: int = 8, writeback: bool = True) -> ProtocolSpec:
    """Atomic 1-writer n-reader register from n**2 atomic 1W1R registers.

    ``writeback=False`` builds the deliberately broken variant whose readers
    do not announce their choices; it is only regular, and exists to
    demonstrate that the reader-to-reader registers are necessary.
    """
    if n < 1:
        raise EngineError("need at least one reader")
    codec = TagCodec(n_pids=n + 1, payload_domain=domain)
    init_enc = codec.encode(0, 0, 0)
    regs = [
        BaseRegisterSpec(
            name=f"w{j}", owner=0, readers=frozenset({j}),
            domain=codec.domain, init=init_enc, semantics=SemanticsLevel.ATOMIC,
        )
        for j in range(1, n + 1)
    ]
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if j != i:
                regs.append(
                    BaseRegisterSpec(
                        name=f"c{i}_{j}", owner=i, readers=frozenset({j}),
                        domain=codec.domain, init=init_enc,
                        semantics=SemanticsLevel.ATOMIC,
                    )
                )
    return ProtocolSpec(
        name="multireader" if writeback else "multireader_nowriteback",
        n_processes=n + 1,
        registers=tuple(regs),
        program=_MultiReaderProgram(n, codec, init_enc, writeback),
        budgets={"Write": n, "Read": 2 * n - 1 if writeback else n},
        var_name="X",
        domain=domain,
        init=0,
        writers=frozenset({0}),
        readers=frozenset(range(1, n + 1)),
    )


# ---------------------------------------------------------------------------
# multiwriter: atomic n-writer n-reader from n atomic 1-writer n-reader
# ---------------------------------------------------------------------------


class _MultiWriterProgram(StepProgram):
    """Every process owns one register holding its latest (tag, value).

    Write(v) by p: collect all n registers, take the successor of the
    largest sequence number seen, and publish ((s, p), v) in p's register.
    Read by p: collect all n registers and return the payload under the
    maximal tag.  Concurrent writers may pick equal sequence numbers; the
    process-id tie-break keeps the tag order total.
    """

    def __init__(self, n: int, codec: TagCodec):
        self.n = n
        self.codec = codec

    def begin(self, proc, mem, kind, arg):
        if kind == "Write":
            return ReadAction(0), ("w", 1, 0, arg)
        return ReadAction(0), ("r", 1, None)

    def resume(self, proc, mem, state, result):
        phase = state[0]
        if phase == "w":
            _, k, max_seq, arg = state
            seq = self.codec.decode(result).tag.seq
            if seq > max_seq:
                max_seq = seq
            if k < self.n:
                return ReadAction(k), ("w", k + 1, max_seq, arg)
            enc = self.codec.encode(max_seq + 1, proc, arg)
            return WriteAction(proc, enc), ("commit",)
        if phase == "r":
            _, k, best = state
            best = result if best is None else _max_tagged(self.codec, best, result)
            if k < self.n:
                return ReadAction(k), ("r", k + 1, best)
            return ReturnAction(self.codec.decode(best).val, mem), None
        # commit
        return ReturnAction(None, mem), None


def build_multiwriter(n: int, domain: int = 8) -> ProtocolSpec:
    """Atomic n-writer n-reader register from n atomic 1WnR registers."""
    if n < 1:
        raise EngineError("need at least one process")
    codec = TagCodec(n_pids=n, payload_domain=domain)
    everyone = frozenset(range(n))
    regs = tuple(
        BaseRegisterSpec(
            name=f"r{p}", owner=p, readers=everyone,
            domain=codec.domain, init=codec.encode(0, p, 0),
            semantics=SemanticsLevel.ATOMIC,
        )
        for p in range(n)
    )
    return ProtocolSpec(
        name="multiwriter",
        n_processes=n,
        registers=regs,
        program=_MultiWriterProgram(n, codec),
        budgets={"Write": n + 1, "Read": n},
        var_name="X",
        domain=domain,
        init=0,
        writers=everyone,
        readers=everyone,
    )
