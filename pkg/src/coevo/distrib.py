"""Completion service: framed socket protocol, fault-tolerant task queue,
server loop, and the built-in worker client.

Tasks are executed at least once and their results delivered exactly once.
A worker that pulls a task and never returns it only costs time: the reaper
requeues the task at the head of the pending queue, and whichever attempt
finishes first wins while later duplicates are discarded.
"""
from __future__ import annotations

import json
import socket
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass, field

from .evaluation import EvaluationResult, EvaluationTask, failed_result

PROTO_VERSION = 1

MSG_HELLO = "hello"
MSG_PULL = "pull"
MSG_TASK = "task"
MSG_EMPTY = "empty"
MSG_RESULT = "result"
MSG_ACK = "ack"
MSG_ERROR = "error"

_MAX_FRAME = 64 * 1024 * 1024


class ProtocolError(RuntimeError):
    """Peer sent something the wire protocol does not allow."""


class EvaluatorUnreachable(RuntimeError):
    """No evaluation progress within the configured patience window."""


def encode_message(msg: dict) -> bytes:
    """Canonical frame bytes: 4-byte big-endian length, then compact JSON."""
    payload = json.dumps(msg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack("!I", len(payload)) + payload


def decode_frames(buffer: bytes) -> tuple[list[dict], bytes]:
    """Split a byte buffer into complete messages plus the unconsumed tail."""
    messages: list[dict] = []
    view = memoryview(buffer)
    offset = 0
    while len(view) - offset >= 4:
        (length,) = struct.unpack_from("!I", view, offset)
        if length > _MAX_FRAME:
            raise ProtocolError(f"frame of {length} bytes exceeds the maximum")
        if len(view) - offset - 4 < length:
            break
        payload = bytes(view[offset + 4 : offset + 4 + length])
        try:
            messages.append(json.loads(payload.decode("utf-8")))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"undecodable frame: {exc}") from exc
        offset += 4 + length
    return messages, bytes(view[offset:])


def send_message(sock: socket.socket, msg: dict) -> None:
    sock.sendall(encode_message(msg))


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            return None
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def recv_message(sock: socket.socket) -> dict | None:
    """Read one framed message; None when the peer closed between frames.

    A connection dropped mid-frame raises, so a partial frame is never
    delivered as if it were a message.
    """
    header = _recv_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack("!I", header)
    if length > _MAX_FRAME:
        raise ProtocolError(f"frame of {length} bytes exceeds the maximum")
    payload = _recv_exact(sock, length)
    if payload is None:
        raise ProtocolError("connection closed mid-frame")
    try:
        return json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"undecodable frame: {exc}") from exc


@dataclass
class _InFlight:
    task: EvaluationTask
    worker_id: str
    deadline: float
    seq: int


@dataclass
class QueueStats:
    submitted: int = 0
    pulls: int = 0
    completions: int = 0
    duplicates_discarded: int = 0
    requeues: int = 0
    exhausted: int = 0


class CompletionQueue:
    """Thread-safe pending / in-flight / done bookkeeping.

    Every task is always in exactly one of the three states. Timed-out
    attempts go back to the head of the pending queue until the attempt
    budget (1 + max_retries) runs out, after which a failed result is
    delivered so callers never wait forever.
    """

    def __init__(self, task_timeout: float = 30.0, max_retries: int = 2, clock=time.monotonic):
        self.task_timeout = task_timeout
        self.max_retries = max_retries
        self.clock = clock
        self.stats = QueueStats()
        self._lock = threading.Lock()
        self._done_ready = threading.Condition(self._lock)
        self._pending: deque[EvaluationTask] = deque()
        self._in_flight: dict[str, _InFlight] = {}
        self._done: deque[EvaluationResult] = deque()
        self._attempts: dict[str, int] = {}
        self._finished: set[str] = set()
        self._known: set[str] = set()
        self._seq = 0

    def submit(self, task: EvaluationTask) -> None:
        with self._lock:
            if task.task_id in self._known:
                raise ValueError(f"duplicate task id {task.task_id!r}")
            self._known.add(task.task_id)
            self._attempts[task.task_id] = 0
            self._pending.append(task)
            self.stats.submitted += 1

    def worker_pull(self, worker_id: str, now: float | None = None) -> EvaluationTask | None:
        now = self.clock() if now is None else now
        with self._lock:
            if not self._pending:
                return None
            task = self._pending.popleft()
            self._attempts[task.task_id] += 1
            self._seq += 1
            self._in_flight[task.task_id] = _InFlight(
                task, worker_id, now + self.task_timeout, self._seq
            )
            self.stats.pulls += 1
            return task

    def worker_return(self, result: EvaluationResult, now: float | None = None) -> bool:
        """Accept a completion; the first one per task wins, the rest are
        discarded without effect."""
        with self._lock:
            tid = result.task_id
            if tid in self._finished or tid not in self._known:
                self.stats.duplicates_discarded += 1
                return False
            if tid in self._in_flight:
                del self._in_flight[tid]
            else:
                # A reaped attempt finished late while its requeued copy was
                # still waiting; take the result and drop the copy.
                for queued in self._pending:
                    if queued.task_id == tid:
                        self._pending.remove(queued)
                        break
                else:
                    self.stats.duplicates_discarded += 1
                    return False
            self._finished.add(tid)
            self._done.append(result)
            self.stats.completions += 1
            self._done_ready.notify_all()
            return True

    def reap_timeouts(self, now: float | None = None) -> int:
        """Requeue expired attempts; exhausted tasks turn into failed results."""
        now = self.clock() if now is None else now
        with self._lock:
            expired = sorted(
                (rec for rec in self._in_flight.values() if rec.deadline <= now),
                key=lambda rec: rec.seq,
            )
            for rec in reversed(expired):
                tid = rec.task.task_id
                del self._in_flight[tid]
                if self._attempts[tid] >= self.max_retries + 1:
                    self._finished.add(tid)
                    self._done.append(
                        failed_result(
                            tid, f"timed out after {self._attempts[tid]} attempts"
                        )
                    )
                    self.stats.exhausted += 1
                    self._done_ready.notify_all()
                else:
                    self._pending.appendleft(rec.task)
                    self.stats.requeues += 1
            return len(expired)

    def next_result(self, timeout: float | None = None) -> EvaluationResult | None:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._done_ready:
            while not self._done:
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return None
                self._done_ready.wait(remaining if remaining is not None else 0.1)
            return self._done.popleft()

    def snapshot(self) -> dict[str, list[str]]:
        """State partition by task id, for invariant checks."""
        with self._lock:
            return {
                "pending": [t.task_id for t in self._pending],
                "in_flight": sorted(self._in_flight),
                "done": [r.task_id for r in self._done],
                "finished": sorted(self._finished),
            }

    def outstanding(self) -> int:
        with self._lock:
            return len(self._known) - len(self._finished)


class CompletionServer:
    """Socket front end for a CompletionQueue.

    One thread per connection; workers drive the conversation with hello,
    pull, and result messages. Connections idle past ``idle_timeout`` are
    dropped; a well-behaved worker simply reconnects.
    """

    def __init__(
        self,
        queue: CompletionQueue,
        host: str = "127.0.0.1",
        port: int = 0,
        idle_timeout: float = 60.0,
    ):
        self.queue = queue
        self.host = host
        self.port = port
        self.idle_timeout = idle_timeout
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()

    @property
    def address(self) -> tuple[str, int]:
        assert self._listener is not None, "server not started"
        return self._listener.getsockname()[:2]

    def start(self) -> "CompletionServer":
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.host, self.port))
        listener.listen(64)
        listener.settimeout(0.2)
        self._listener = listener
        t = threading.Thread(target=self._accept_loop, name="completion-accept", daemon=True)
        t.start()
        self._threads.append(t)
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._listener is not None:
            self._listener.close()
        for t in self._threads:
            t.join(timeout=2.0)

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            t = threading.Thread(target=self._serve, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _serve(self, conn: socket.socket) -> None:
        conn.settimeout(self.idle_timeout)
        try:
            while not self._stop.is_set():
                try:
                    msg = recv_message(conn)
                except (socket.timeout, ProtocolError, OSError):
                    return
                if msg is None:
                    return
                reply = self._dispatch(msg)
                if reply is None:
                    return
                try:
                    send_message(conn, reply)
                except OSError:
                    return
        finally:
            conn.close()

    def _dispatch(self, msg: dict) -> dict | None:
        kind = msg.get("type")
        if kind == MSG_HELLO:
            if msg.get("proto") != PROTO_VERSION:
                return {
                    "type": MSG_ERROR,
                    "message": f"unsupported protocol version {msg.get('proto')!r}",
                }
            return {"type": MSG_ACK, "proto": PROTO_VERSION}
        if kind == MSG_PULL:
            task = self.queue.worker_pull(str(msg.get("worker_id", "")))
            return task.to_message() if task is not None else {"type": MSG_EMPTY}
        if kind == MSG_RESULT:
            try:
                accepted = self.queue.worker_return(EvaluationResult.from_message(msg))
            except (KeyError, TypeError, ValueError) as exc:
                return {"type": MSG_ERROR, "message": f"bad result: {exc}"}
            return {"type": MSG_ACK, "accepted": accepted}
        return {"type": MSG_ERROR, "message": f"unknown message type {kind!r}"}


def run_worker(
    host: str,
    port: int,
    worker_id: str,
    evaluator,
    *,
    poll_interval: float = 0.05,
    reconnect_attempts: int = 5,
    reconnect_delay: float = 0.2,
    max_tasks: int | None = None,
) -> int:
    """Pull-execute-report loop; returns the number of tasks completed.

    The worker reconnects with backoff when the service drops the link and
    gives up once the service stays unreachable for ``reconnect_attempts``
    consecutive tries, which is how workers drain away after a run finishes.
    """
    completed = 0
    failures = 0
    while failures < reconnect_attempts:
        try:
            with socket.create_connection((host, port), timeout=10.0) as sock:
                sock.settimeout(30.0)
                send_message(sock, {"type": MSG_HELLO, "proto": PROTO_VERSION, "worker_id": worker_id})
                reply = recv_message(sock)
                if reply is None or reply.get("type") != MSG_ACK:
                    raise ProtocolError(f"handshake rejected: {reply!r}")
                failures = 0
                while True:
                    if max_tasks is not None and completed >= max_tasks:
                        return completed
                    send_message(sock, {"type": MSG_PULL, "worker_id": worker_id})
                    msg = recv_message(sock)
                    if msg is None:
                        break
                    if msg.get("type") == MSG_EMPTY:
                        time.sleep(poll_interval)
                        continue
                    if msg.get("type") != MSG_TASK:
                        raise ProtocolError(f"expected a task, got {msg!r}")
                    task = EvaluationTask.from_message(msg)
                    started = time.monotonic()
                    try:
                        result = evaluator.evaluate(task)
                    except Exception as exc:
                        result = failed_result(
                            task.task_id, f"{type(exc).__name__}: {exc}", worker_id
                        )
                    result = EvaluationResult(
                        task_id=result.task_id,
                        primary=result.primary,
                        raw_secondary=result.raw_secondary,
                        status=result.status,
                        worker_id=worker_id,
                        duration=time.monotonic() - started,
                        reason=result.reason,
                    )
                    send_message(sock, result.to_message())
                    ack = recv_message(sock)
                    if ack is None:
                        break
                    completed += 1
        except (OSError, ProtocolError):
            failures += 1
            time.sleep(reconnect_delay * failures)
    return completed


class LocalBackend:
    """Evaluate tasks in-process."""

    def __init__(self, evaluator, parallelism: int = 1):
        self.evaluator = evaluator
        self.parallelism = parallelism

    def evaluate(self, tasks: list[EvaluationTask]) -> list[EvaluationResult]:
        from .evaluation import evaluate_local

        return evaluate_local(tasks, self.evaluator, self.parallelism)

    def close(self) -> None:
        pass


class RemoteBackend:
    """Evaluate tasks through a completion service socket server.

    ``patience`` bounds how long the backend tolerates zero completions;
    when it trips, an EvaluatorUnreachable escapes so the caller can save a
    checkpoint and abort instead of hanging.
    """

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        task_timeout: float = 30.0,
        max_retries: int = 2,
        idle_timeout: float = 60.0,
        patience: float = 60.0,
    ):
        self.queue = CompletionQueue(task_timeout=task_timeout, max_retries=max_retries)
        self.server = CompletionServer(
            self.queue, host=host, port=port, idle_timeout=idle_timeout
        ).start()
        self.patience = patience

    @property
    def address(self) -> tuple[str, int]:
        return self.server.address

    def evaluate(self, tasks: list[EvaluationTask]) -> list[EvaluationResult]:
        for task in tasks:
            self.queue.submit(task)
        results: dict[str, EvaluationResult] = {}
        last_progress = time.monotonic()
        while len(results) < len(tasks):
            self.queue.reap_timeouts()
            result = self.queue.next_result(timeout=0.1)
            if result is None:
                if time.monotonic() - last_progress > self.patience:
                    raise EvaluatorUnreachable(
                        f"no completions for {self.patience:.0f}s with "
                        f"{self.queue.outstanding()} tasks outstanding"
                    )
                continue
            results[result.task_id] = result
            last_progress = time.monotonic()
        return [results[t.task_id] for t in tasks]

    def close(self) -> None:
        self.server.stop()
