"""Execution contract with two implementations: the hermetic simulator
executor (default) and an external adapter dispatching to a real shell
endpoint. Commands are never reordered, merged, or rewritten.
"""

from __future__ import annotations

import socket
import subprocess
from dataclasses import dataclass, field
from typing import Optional, Protocol

from .model import ActionBlock, CommandRecord, ExecutionResult
from .netsim import NetworkModel, SessionState, output_is_error, sim_console

DEFAULT_COMMAND_TIMEOUT_S = 120.0
DEFAULT_HEAD_CAP = 256 * 1024
DEFAULT_TAIL_CAP = 16 * 1024
CAP_MARKER = "\n[... output truncated ...]\n"


class ExecutorError(RuntimeError):
    """Transport-level executor failure (distinct from in-band command errors)."""


class Executor(Protocol):
    def execute(self, block: ActionBlock) -> ExecutionResult: ...


def _cap_output(text: str, head_cap: int = DEFAULT_HEAD_CAP, tail_cap: int = DEFAULT_TAIL_CAP) -> str:
    data = text.encode("utf-8", errors="replace")
    if len(data) <= head_cap + tail_cap:
        return text
    head = data[:head_cap].decode("utf-8", errors="replace")
    tail = data[-tail_cap:].decode("utf-8", errors="replace")
    return head + CAP_MARKER + tail


class SimExecutor:
    """Routes commands into the simulator; session state persists across steps."""

    def __init__(self, model: NetworkModel, session_state: Optional[SessionState] = None):
        self.model = model
        self.session_state = session_state or SessionState()

    def execute(self, block: ActionBlock) -> ExecutionResult:
        if not block.commands:
            raise ExecutorError("nothing to execute: block has no commands")
        records = []
        session_events: list[str] = []
        for command in block.commands:
            before = set(self.session_state.sessions)
            output, _ = sim_console(self.model, self.session_state, [command])
            output = _cap_output(output)
            for sid in sorted(set(self.session_state.sessions) - before):
                session = self.session_state.sessions[sid]
                session_events.append(
                    f"session-opened:{sid}:{session.host_ip}:{session.privilege}"
                )
            if "Credentials harvested" in output:
                session_events.append("credential-leak")
            status = 1 if output_is_error(output) else 0
            records.append(
                CommandRecord(command=command, exit_status=status, output=output)
            )
        return ExecutionResult(records=tuple(records), session_events=tuple(session_events))


@dataclass(frozen=True)
class ExternalEndpoint:
    """Descriptor for an external shell endpoint.

    ``kind`` is "process" (each command piped to a local shell) or "tcp"
    (line-oriented remote shell: one command line out, response terminated by
    a lone ASCII EOT line). Selecting an external target requires both the
    enable flag and an explicit acknowledgment.
    """

    kind: str = "process"
    host: str = "127.0.0.1"
    port: int = 0
    shell: str = "/bin/sh"
    timeout_s: float = DEFAULT_COMMAND_TIMEOUT_S
    head_cap: int = DEFAULT_HEAD_CAP
    tail_cap: int = DEFAULT_TAIL_CAP
    credential: str = ""


class ExternalExecutor:
    """Dispatches each command to a real shell endpoint, in order."""

    def __init__(self, endpoint: ExternalEndpoint, allow_external: bool = False,
                 acknowledge_risk: bool = False):
        if not (allow_external and acknowledge_risk):
            raise ExecutorError(
                "external execution requires allow_external and acknowledge_risk"
            )
        if endpoint.kind not in ("process", "tcp"):
            raise ExecutorError(f"unknown endpoint kind {endpoint.kind!r}")
        self.endpoint = endpoint

    def execute(self, block: ActionBlock) -> ExecutionResult:
        if not block.commands:
            raise ExecutorError("nothing to execute: block has no commands")
        records: list[CommandRecord] = []
        timed_out = False
        for command in block.commands:
            if timed_out:
                records.append(CommandRecord(command, -1, "", 0, False, ran=False))
                continue
            record = self._dispatch(command)
            records.append(record)
            timed_out = record.timed_out
        return ExecutionResult(records=tuple(records))

    def _dispatch(self, command: str) -> CommandRecord:
        if self.endpoint.kind == "process":
            return self._dispatch_process(command)
        return self._dispatch_tcp(command)

    def _dispatch_process(self, command: str) -> CommandRecord:
        try:
            proc = subprocess.run(
                [self.endpoint.shell, "-c", command],
                capture_output=True,
                text=True,
                timeout=self.endpoint.timeout_s,
            )
        except subprocess.TimeoutExpired:
            return CommandRecord(command, -1, "", int(self.endpoint.timeout_s * 1000), True)
        except OSError as exc:
            raise ExecutorError(f"endpoint unreachable: {exc}")
        output = _cap_output(
            proc.stdout + proc.stderr, self.endpoint.head_cap, self.endpoint.tail_cap
        )
        return CommandRecord(command, proc.returncode, output)

    def _dispatch_tcp(self, command: str) -> CommandRecord:
        try:
            with socket.create_connection(
                (self.endpoint.host, self.endpoint.port), timeout=self.endpoint.timeout_s
            ) as conn:
                conn.settimeout(self.endpoint.timeout_s)
                if self.endpoint.credential:
                    conn.sendall((self.endpoint.credential + "\n").encode())
                conn.sendall((command + "\n").encode())
                chunks: list[bytes] = []
                size = 0
                while size <= self.endpoint.head_cap + self.endpoint.tail_cap:
                    chunk = conn.recv(65536)
                    if not chunk:
                        break
                    chunks.append(chunk)
                    size += len(chunk)
                    if b"\x04\n" in chunk or chunk.endswith(b"\x04"):
                        break
        except socket.timeout:
            return CommandRecord(command, -1, "", int(self.endpoint.timeout_s * 1000), True)
        except OSError as exc:
            raise ExecutorError(f"endpoint unreachable: {exc}")
        raw = b"".join(chunks).replace(b"\x04", b"")
        output = _cap_output(
            raw.decode("utf-8", errors="replace").rstrip("\n"),
            self.endpoint.head_cap,
            self.endpoint.tail_cap,
        )
        return CommandRecord(command, 0, output)


@dataclass
class ObserverExecutor:
    """Dry-run executor: every command is recorded but marked not-run."""

    def execute(self, block: ActionBlock) -> ExecutionResult:
        records = tuple(
            CommandRecord(command=c, exit_status=-1, output="(not run: observer mode)", ran=False)
            for c in block.commands
        )
        return ExecutionResult(records=records)
