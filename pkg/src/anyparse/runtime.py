"""In-process producer/consumer runtime with a protected result slot.

A *producer* is a plain callable ``producer(ctx, input)`` that repeatedly
improves some result.  At every internal goal state it publishes the
current best through ``ctx.set_result`` and then polls ``ctx.check_status``
for consumer instructions.  Consumers never call the producer; they spawn
it with :func:`start_process` and read whatever is currently available
with :func:`get_result` -- possibly the preset *void* value if nothing has
been published yet.  That read may be disappointing but never blocks on
the producer beyond a mutual-exclusion critical section, and never yields
a torn value.

Interrupts are cooperative and transaction-aligned: :func:`abort_process`
and :func:`reset_process` enqueue control messages which the producer only
sees between two units of work, so whatever it was doing when the request
arrived is completed first.  The mailbox stamps each message with the
producer's transaction counter at enqueue time, which makes the "at most
one unit of work after the interrupt" guarantee measurable rather than a
matter of trust.

Everything runs in ordinary threads inside one process; there is no
distributed transport here.
"""

from __future__ import annotations

import copy
import enum
import itertools
import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable

logger = logging.getLogger(__name__)


class _Void:
    """The distinguished 'no result yet' value preset in every slot."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "VOID"

    def __deepcopy__(self, memo):
        return self


VOID = _Void()


class ProtocolError(RuntimeError):
    """An API call violated the process protocol."""


class StartError(RuntimeError):
    """The producer thread could not be created; no context was leaked."""


@dataclass(frozen=True)
class SnapshotEnvelope:
    """One published result with its slot version (0 = never set)."""

    payload: Any
    version: int
    produced_at: float

    @property
    def is_void(self) -> bool:
        return self.payload is VOID


class ResultSlot:
    """Mutually exclusive single-value cell between producer and consumers.

    Writers replace the whole envelope under a lock, so readers can never
    observe a torn value; the version counter increases by exactly one per
    successful publication (including the bump back to void on reset).
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._envelope = SnapshotEnvelope(VOID, 0, time.time())

    def read(self) -> SnapshotEnvelope:
        with self._lock:
            return self._envelope

    def publish(self, payload: Any) -> int:
        frozen = copy.deepcopy(payload)
        stamp = time.time()
        with self._lock:
            version = self._envelope.version + 1
            self._envelope = SnapshotEnvelope(frozen, version, stamp)
            return version

    def reset_to_void(self) -> int:
        with self._lock:
            version = self._envelope.version + 1
            self._envelope = SnapshotEnvelope(VOID, version, time.time())
            return version

    @property
    def version(self) -> int:
        with self._lock:
            return self._envelope.version


class Status(enum.Enum):
    RUNNING = "running"
    QUIESCENT = "quiescent"
    ABORTED = "aborted"
    RESETTING = "resetting"


#: The legal status transitions.  A quiescent producer keeps serving its
#: mailbox, so it can still be aborted or reset.
ALLOWED_TRANSITIONS: frozenset[tuple[Status, Status]] = frozenset(
    {
        (Status.RUNNING, Status.QUIESCENT),
        (Status.RUNNING, Status.ABORTED),
        (Status.RUNNING, Status.RESETTING),
        (Status.QUIESCENT, Status.ABORTED),
        (Status.QUIESCENT, Status.RESETTING),
        (Status.RESETTING, Status.RUNNING),
    }
)


# -- control messages ---------------------------------------------------------


@dataclass
class Message:
    kind: str  # "abort" | "reset" | "ping" | "user"
    payload: Any = None
    tag: str = ""
    enqueued_after_tx: int = -1
    applied: threading.Event = field(default_factory=threading.Event)


class Acknowledgement:
    """Resolves once the producer has acted on the request."""

    def __init__(self, message: Message, event: threading.Event):
        self.message = message
        self._event = event

    def wait(self, timeout: float | None = None) -> bool:
        return self._event.wait(timeout)

    def done(self) -> bool:
        return self._event.is_set()

    @property
    def enqueued_after_tx(self) -> int:
        return self.message.enqueued_after_tx


class Mailbox:
    """FIFO control channel, transaction-stamped on enqueue.

    The same lock serializes message arrival and the producer's transaction
    counter, giving a total order between "message enqueued" and
    "transaction completed" that the interrupt-latency oracle relies on.
    """

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._queue: list[Message] = []
        self._transactions = 0

    def put(self, message: Message) -> Message:
        with self._cond:
            message.enqueued_after_tx = self._transactions
            self._queue.append(message)
            self._cond.notify_all()
        return message

    def note_transaction(self) -> int:
        with self._cond:
            self._transactions += 1
            return self._transactions

    @property
    def transactions(self) -> int:
        with self._cond:
            return self._transactions

    def drain(self) -> list[Message]:
        with self._cond:
            messages, self._queue = self._queue, []
            return messages

    def push_back(self, messages: list[Message]) -> None:
        with self._cond:
            self._queue = messages + self._queue

    def wait_for_message(self, timeout: float | None = None) -> bool:
        with self._cond:
            if self._queue:
                return True
            return self._cond.wait(timeout)


# -- directives the producer obeys --------------------------------------------


class _Continue:
    def __repr__(self) -> str:
        return "CONTINUE"


class _StopNow:
    def __repr__(self) -> str:
        return "STOP_NOW"


CONTINUE = _Continue()
STOP_NOW = _StopNow()


@dataclass(frozen=True)
class ResetWith:
    new_input: Any
    message: Message | None = None


Directive = Any  # CONTINUE | STOP_NOW | ResetWith


_ids = itertools.count(1)
_registry: dict[int, "ProcessHandle"] = {}
_registry_lock = threading.Lock()


class ProcessHandle:
    """Consumer-side view of a spawned producer."""

    def __init__(self, process_id: int, name: str):
        self.id = process_id
        self.name = name
        self.slot = ResultSlot()
        self.mailbox = Mailbox()
        self.error: BaseException | None = None
        self.terminated = threading.Event()
        self.transition_log: list[tuple[Status, Status]] = []
        self._status = Status.RUNNING
        self._status_lock = threading.Lock()
        self._thread: threading.Thread | None = None

    @property
    def status(self) -> Status:
        with self._status_lock:
            return self._status

    @property
    def transactions(self) -> int:
        return self.mailbox.transactions

    def _transition(self, new: Status) -> None:
        with self._status_lock:
            old = self._status
            if old == new:
                return
            if (old, new) not in ALLOWED_TRANSITIONS:
                raise ProtocolError(f"illegal status transition {old.value} -> {new.value}")
            self.transition_log.append((old, new))
            self._status = new

    def __repr__(self) -> str:
        return f"<ProcessHandle {self.id} {self.name!r} {self.status.value}>"


class ProducerContext:
    """Producer-private side of the protocol.

    Only the owning producer may call :meth:`set_result`,
    :meth:`check_status` and :meth:`note_transaction`; consumers go through
    the module-level functions with the handle.
    """

    def __init__(self, handle: ProcessHandle):
        self._handle = handle
        self._stopped = False
        self._pending: Directive = None
        self._cleanup: Callable[[], None] | None = None
        self._hooks: dict[str, Callable[[Any], None]] = {}
        self.pings_seen = 0

    # -- publication ---------------------------------------------------------

    def set_result(self, payload: Any) -> int:
        """Publish; after an observed abort this is a no-op (last version)."""
        if self._stopped:
            return self._handle.slot.version
        return self._handle.slot.publish(payload)

    # -- transaction accounting ------------------------------------------------

    def note_transaction(self) -> int:
        return self._handle.mailbox.note_transaction()

    # -- polling ----------------------------------------------------------------

    def check_status(self) -> Directive:
        """Drain the mailbox in FIFO order and return the next directive.

        Ping and user messages fire their registered hooks on the spot.  An
        abort or reset takes effect exactly where it sits in the queue; any
        later messages stay queued (they matter only after a reset).
        """
        messages = self._handle.mailbox.drain()
        for position, message in enumerate(messages):
            if message.kind == "ping":
                self.pings_seen += 1
                hook = self._hooks.get("ping")
                if hook is not None:
                    hook(message.payload)
                message.applied.set()
            elif message.kind == "user":
                hook = self._hooks.get(message.tag)
                if hook is not None:
                    hook(message.payload)
                message.applied.set()
            elif message.kind == "abort":
                self._stopped = True
                self._pending = STOP_NOW
                message.applied.set()
                return STOP_NOW
            elif message.kind == "reset":
                self._pending = ResetWith(message.payload, message)
                self._handle.mailbox.push_back(messages[position + 1 :])
                return self._pending
        return CONTINUE

    # -- hooks --------------------------------------------------------------------

    def register_cleanup(self, fn: Callable[[], None]) -> None:
        self._cleanup = fn

    def register_hook(self, tag: str, fn: Callable[[Any], None]) -> None:
        self._hooks[tag] = fn

    def run_cleanup(self) -> None:
        if self._cleanup is not None:
            try:
                self._cleanup()
            except Exception:  # cleanup must never kill the reset
                logger.exception("cleanup hook failed")


def _apply_reset(handle: ProcessHandle, ctx: ProducerContext, directive: ResetWith) -> Any:
    """Run the cleanup hook, void the slot (version bumped) and resume."""
    handle._transition(Status.RESETTING)
    ctx.run_cleanup()
    handle.slot.reset_to_void()
    handle._transition(Status.RUNNING)
    if directive.message is not None:
        directive.message.applied.set()
    return directive.new_input


def _producer_main(handle: ProcessHandle, ctx: ProducerContext, producer, first_input) -> None:
    current_input = first_input
    try:
        while True:
            try:
                producer(ctx, current_input)
            except BaseException as exc:  # producer crash ends the process
                handle.error = exc
                logger.exception("producer %s crashed", handle.name)
                handle._transition(Status.ABORTED)
                return
            directive = ctx._pending
            ctx._pending = None
            if directive is STOP_NOW:
                handle._transition(Status.ABORTED)
                return
            if isinstance(directive, ResetWith):
                current_input = _apply_reset(handle, ctx, directive)
                continue
            # Returned with nothing pending: the producer is done improving,
            # but stays parked to serve late aborts and resets.
            handle._transition(Status.QUIESCENT)
            restart = False
            while not restart:
                handle.mailbox.wait_for_message(timeout=0.05)
                directive = ctx.check_status()
                ctx._pending = None
                if directive is STOP_NOW:
                    handle._transition(Status.ABORTED)
                    return
                if isinstance(directive, ResetWith):
                    current_input = _apply_reset(handle, ctx, directive)
                    restart = True
    finally:
        handle.terminated.set()


def start_process(
    producer: Callable[[ProducerContext, Any], None],
    input: Any = None,
    *,
    name: str | None = None,
) -> ProcessHandle:
    """Spawn ``producer`` in its own thread with a fresh void result slot.

    Returns immediately.  Any number of producers may run at once, and a
    producer is free to start further producers.  If the thread cannot be
    created the failure is explicit and nothing stays registered.
    """
    process_id = next(_ids)
    handle = ProcessHandle(process_id, name or getattr(producer, "__name__", "producer"))
    ctx = ProducerContext(handle)
    thread = threading.Thread(
        target=_producer_main,
        args=(handle, ctx, producer, input),
        name=f"producer-{process_id}",
        daemon=True,
    )
    handle._thread = thread
    with _registry_lock:
        _registry[process_id] = handle
    try:
        thread.start()
    except BaseException as exc:
        with _registry_lock:
            _registry.pop(process_id, None)
        raise StartError(f"could not start producer {handle.name!r}: {exc}") from exc
    return handle


def _resolve(handle_or_id: ProcessHandle | int) -> ProcessHandle:
    if isinstance(handle_or_id, ProcessHandle):
        return handle_or_id
    with _registry_lock:
        handle = _registry.get(handle_or_id)
    if handle is None:
        raise KeyError(f"unknown process id {handle_or_id!r}")
    return handle


def get_result(handle_or_id: ProcessHandle | int) -> SnapshotEnvelope:
    """Current envelope, without waiting for the producer.

    May be void (version 0, or freshly reset); that is a legal and
    possibly informative outcome.  Reading an aborted process's last
    published result is allowed -- salvaging partial results is the whole
    point of the slot.
    """
    return _resolve(handle_or_id).slot.read()


def abort_process(handle_or_id: ProcessHandle | int) -> Acknowledgement:
    """Ask the producer to stop after its current unit of work.

    Idempotent; the acknowledgement resolves when the producer thread has
    actually terminated.
    """
    handle = _resolve(handle_or_id)
    if handle.status is Status.ABORTED or handle.terminated.is_set():
        message = Message(kind="abort")
        message.enqueued_after_tx = handle.transactions
        message.applied.set()
        return Acknowledgement(message, handle.terminated)
    message = handle.mailbox.put(Message(kind="abort"))
    return Acknowledgement(message, handle.terminated)


def reset_process(handle_or_id: ProcessHandle | int, new_input: Any) -> Acknowledgement:
    """Restart the producer with new input after its current unit of work.

    The producer's registered cleanup hook runs first, then the slot
    returns to void (version bumped, so consumers can tell a reset from
    'never produced').
    """
    handle = _resolve(handle_or_id)
    if handle.status is Status.ABORTED or handle.terminated.is_set():
        raise ProtocolError("cannot reset an aborted process")
    message = handle.mailbox.put(Message(kind="reset", payload=new_input))
    return Acknowledgement(message, message.applied)


def send_message(
    handle_or_id: ProcessHandle | int, tag: str, payload: Any = None
) -> Acknowledgement:
    """Deliver a user message; the producer's registered hook handles it."""
    handle = _resolve(handle_or_id)
    message = handle.mailbox.put(Message(kind="user", payload=payload, tag=tag))
    return Acknowledgement(message, message.applied)


def ping(handle_or_id: ProcessHandle | int) -> Acknowledgement:
    handle = _resolve(handle_or_id)
    message = handle.mailbox.put(Message(kind="ping"))
    return Acknowledgement(message, message.applied)
