"""Wire protocol client for externally served models.

Messages are newline-delimited JSON over a spawned subprocess's standard
streams or a TCP socket:

* client: ``{"type": "hello", "dim": m}``
* server: ``{"type": "ready", "dim": m}``
* client: ``{"type": "evaluate", "id": k, "batch": [<flat row-major floats>, ...]}``
* server: ``{"type": "scores", "id": k, "scores": [...]}``
* either: ``{"type": "error", "id": k or -1, "message": "..."}``

Each batch element is one embedding matrix flattened row-major; the column
count is the dimension agreed in the handshake.  Floats travel with 17
significant digits so values round-trip bit-exactly.  Request ids increase
strictly and only one request is in flight at a time.
"""

from __future__ import annotations

import json
import queue
import shlex
import socket
import subprocess
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import BridgeError, ParameterError
from .models import BlackBoxModel, ModelScore
from .rng import philox_generator

DEFAULT_TIMEOUT = 30.0


def _fmt17(value: float) -> str:
    return format(float(value), ".17g")


class SubprocessTransport:
    """Line transport over a child process's stdin/stdout."""

    def __init__(self, command: str | list[str]):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BridgeError(f"cannot spawn server {argv!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self._proc.stdout:
            self._lines.put(line.rstrip("\n"))
        self._lines.put(None)

    def send_line(self, line: str) -> None:
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise BridgeError(f"server process is gone: {exc}") from exc

    def recv_line(self, timeout: float) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty as exc:
            raise BridgeError(f"no reply within {timeout} s") from exc
        if line is None:
            raise BridgeError("server closed its output stream")
        return line

    def close(self) -> None:
        try:
            self._proc.stdin.close()
        except Exception:  # noqa: BLE001 - already closing
            pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()


class TcpTransport:
    """Line transport over a TCP connection."""

    def __init__(self, host: str, port: int, connect_timeout: float = 10.0):
        try:
            self._sock = socket.create_connection((host, port), timeout=connect_timeout)
        except OSError as exc:
            raise BridgeError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._file = self._sock.makefile("rw", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        try:
            self._file.write(line + "\n")
            self._file.flush()
        except OSError as exc:
            raise BridgeError(f"connection lost: {exc}") from exc

    def recv_line(self, timeout: float) -> str:
        self._sock.settimeout(timeout)
        try:
            line = self._file.readline()
        except OSError as exc:
            raise BridgeError(f"no reply within {timeout} s") from exc
        if line == "":
            raise BridgeError("server closed the connection")
        return line.rstrip("\n")

    def close(self) -> None:
        try:
            self._file.close()
        finally:
            self._sock.close()


def open_transport(command: str | None = None, tcp: str | None = None):
    if bool(command) == bool(tcp):
        raise ParameterError("specify exactly one of command/tcp")
    if command:
        return SubprocessTransport(command)
    host, _, port_text = tcp.rpartition(":")
    if not host or not port_text.isdigit():
        raise ParameterError(f"tcp address must be host:port, got {tcp!r}")
    return TcpTransport(host, int(port_text))


class BridgeClient:
    """Serializes requests to one served model; one request in flight."""

    def __init__(self, transport, timeout: float = DEFAULT_TIMEOUT):
        self._transport = transport
        self.timeout = timeout
        self._next_id = 0
        self._lines_seen = 0
        self.dim: int | None = None

    def _recv_message(self) -> dict:
        line = self._transport.recv_line(self.timeout)
        self._lines_seen += 1
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            excerpt = line[:120]
            raise BridgeError(
                f"malformed response on line {self._lines_seen}: {excerpt!r}"
            ) from exc
        if not isinstance(message, dict) or "type" not in message:
            raise BridgeError(f"response on line {self._lines_seen} lacks a type: {line[:120]!r}")
        return message

    def handshake(self, dim: int, expect_error: bool = False) -> dict:
        self._transport.send_line(json.dumps({"type": "hello", "dim": int(dim)}))
        message = self._recv_message()
        if expect_error:
            return message
        if message.get("type") == "error":
            raise BridgeError(f"handshake rejected: {message.get('message')}")
        if message.get("type") != "ready" or message.get("dim") != dim:
            raise BridgeError(f"bad handshake reply: {message!r}")
        self.dim = dim
        return message

    def evaluate_batch(self, matrices: list[np.ndarray]) -> list[float]:
        if self.dim is None:
            raise BridgeError("handshake has not completed")
        request_id = self._next_id
        self._next_id += 1
        parts = []
        for matrix in matrices:
            arr = np.asarray(matrix, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != self.dim:
                raise BridgeError(
                    f"matrix shape {arr.shape} disagrees with negotiated dim {self.dim}"
                )
            parts.append("[" + ",".join(_fmt17(v) for v in arr.ravel(order="C")) + "]")
        payload = f'{{"type":"evaluate","id":{request_id},"batch":[{",".join(parts)}]}}'
        self._transport.send_line(payload)
        message = self._recv_message()
        if message.get("type") == "error":
            raise BridgeError(
                f"server error for request {message.get('id')}: {message.get('message')}"
            )
        if message.get("type") != "scores":
            raise BridgeError(f"expected scores, got {message!r}")
        if message.get("id") != request_id:
            raise BridgeError(
                f"response id {message.get('id')} does not match request {request_id}"
            )
        scores = message.get("scores")
        if not isinstance(scores, list) or len(scores) != len(matrices):
            raise BridgeError(
                f"expected {len(matrices)} scores, got {scores!r}"
            )
        return [float(s) for s in scores]

    def send_raw(self, line: str) -> dict:
        """Send an arbitrary line and read one reply (conformance testing)."""
        self._transport.send_line(line)
        return self._recv_message()

    def close(self) -> None:
        self._transport.close()


class BridgedModel(BlackBoxModel):
    """Adapts a bridge client to the in-process model contract.

    The wire carries raw scores; this adapter requires them to be
    probabilities in [0, 1].  Serve logits through a calibration layer
    server-side if needed.
    """

    def __init__(self, client: BridgeClient, dim: int):
        self.client = client
        self.embedding_dimension = dim
        if client.dim is None:
            client.handshake(dim)

    def _wrap(self, value: float) -> ModelScore:
        try:
            return ModelScore(value)
        except ParameterError as exc:
            raise BridgeError(
                f"served score {value!r} is not a probability; "
                "the model contract needs scores in [0, 1]"
            ) from exc

    def evaluate(self, matrix: np.ndarray) -> ModelScore:
        return self._wrap(self.client.evaluate_batch([matrix])[0])

    def batch_evaluate(self, matrices: list[np.ndarray]) -> list[ModelScore]:
        if not matrices:
            return []
        return [self._wrap(v) for v in self.client.evaluate_batch(matrices)]


@dataclass
class BridgeCheckReport:
    checks: list[tuple[str, bool, str]] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def record(self, name: str, ok: bool, detail: str = "") -> None:
        self.checks.append((name, ok, detail))
        if not ok:
            self.violations.append(f"{name}: {detail}" if detail else name)


def bridge_check(
    transport,
    dim: int,
    reference: BlackBoxModel | None = None,
    timeout: float = DEFAULT_TIMEOUT,
    seed: int = 0,
) -> BridgeCheckReport:
    """Protocol conformance suite against a running server.

    Covers the handshake (including dim mismatch), score count and order,
    determinism, id echo, malformed-input recovery, and optionally numeric
    agreement with an in-process reference model.
    """
    report = BridgeCheckReport()
    client = BridgeClient(transport, timeout=timeout)
    gen = philox_generator(seed, 17)
    matrices = [gen.normal(size=(3, dim)) for _ in range(3)]

    try:
        reply = client.handshake(dim + 1, expect_error=True)
        report.record(
            "hello-dim-mismatch-rejected",
            reply.get("type") == "error",
            f"reply type {reply.get('type')!r}",
        )

        reply = client.handshake(dim)
        report.record("handshake-ready", True, f"dim {reply.get('dim')}")

        batch_scores = client.evaluate_batch(matrices)
        report.record(
            "scores-count",
            len(batch_scores) == len(matrices),
            f"{len(batch_scores)} scores for {len(matrices)} matrices",
        )
        report.record(
            "scores-finite",
            all(np.isfinite(s) for s in batch_scores),
            f"{batch_scores}",
        )

        singles = [client.evaluate_batch([m])[0] for m in matrices]
        report.record(
            "order-preserved",
            singles == batch_scores,
            f"batch {batch_scores} vs singles {singles}",
        )

        repeat = client.evaluate_batch(matrices)
        report.record("deterministic", repeat == batch_scores, f"{repeat}")

        reply = client.send_raw("this is not json")
        alive_after = None
        malformed_ok = reply.get("type") == "error" and reply.get("id") == -1
        if malformed_ok:
            alive_after = client.evaluate_batch([matrices[0]])
        report.record(
            "malformed-line-reported",
            malformed_ok and alive_after == [batch_scores[0]],
            f"reply {reply!r}",
        )

        reply = client.send_raw('{"type":"unknown-kind"}')
        report.record(
            "unknown-type-reported",
            reply.get("type") == "error",
            f"reply {reply!r}",
        )

        if reference is not None:
            expected = [reference.evaluate(m).value for m in matrices]
            gaps = [abs(a - b) for a, b in zip(batch_scores, expected)]
            report.record(
                "matches-reference",
                max(gaps) <= 1e-9,
                f"max |served - reference| = {max(gaps):.3e}",
            )
    except BridgeError as exc:
        report.record("protocol-error", False, str(exc))
    finally:
        client.close()
    return report
