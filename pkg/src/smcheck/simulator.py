"""The simulator adaptor contract: reset / next / eval.

Two realizations: in-process built-in models (subclasses of
:class:`BuiltinSimulator`) and :class:`ExternalSimulator`, which drives any
simulator speaking the newline-delimited JSON wire protocol over a child
process's stdio or a TCP socket.
"""

from __future__ import annotations

import json
import queue
import socket
import subprocess
import threading
from dataclasses import dataclass, field

from .obsexpr import ObsExprError, compile_expr, eval_expr
from .rng import Xoshiro256StarStar


class SimulatorError(Exception):
    """Base class for adaptor failures."""


class ParamError(SimulatorError):
    """Unknown parameter name or value outside the declared range."""


class UnknownObservableError(SimulatorError):
    pass


class TransportError(SimulatorError):
    """External process dead, unresponsive, or speaking garbage."""


@dataclass(frozen=True)
class ModelSpec:
    """Declared surface of a built-in model: parameters with ranges, observables."""

    name: str
    declared_params: dict  # name -> (min, max)
    declared_observables: tuple
    description: str = ""


class Simulator:
    """Adaptor contract.  One instance is confined to a single worker at a time."""

    kind = "abstract"

    def __init__(self):
        self.current_step = 0
        self.alive = True

    def reset(self, seed: int, params: dict | None = None) -> None:
        raise NotImplementedError

    def next(self) -> None:
        raise NotImplementedError

    def eval(self, obs: str) -> float:
        raise NotImplementedError

    def close(self) -> None:
        self.alive = False


class BuiltinSimulator(Simulator):
    """In-process model base: parameter validation, step counting, eval dispatch.

    Subclasses implement ``_init_state(rng)`` and ``_advance(rng)`` and keep
    their observable values in ``self.observables`` (name -> float).  ``eval``
    interprets a small arithmetic expression language over those names plus
    the implicit ``steps`` observable; it never mutates state.
    """

    kind = "builtin"

    def __init__(self, spec: ModelSpec, params: dict | None = None):
        super().__init__()
        self.spec = spec
        self.params = {name: lo for name, (lo, hi) in spec.declared_params.items()}
        if params:
            self._apply_params(params)
        self.observables: dict[str, float] = {}
        self._rng: Xoshiro256StarStar | None = None
        self._expr_cache: dict = {}

    def _apply_params(self, params: dict) -> None:
        for name, value in params.items():
            if name not in self.spec.declared_params:
                raise ParamError(f"unknown parameter {name!r} for model {self.spec.name!r}")
            lo, hi = self.spec.declared_params[name]
            if not (lo <= value <= hi):
                raise ParamError(
                    f"parameter out of range: {name}={value} not in [{lo}, {hi}]"
                )
        self.params.update(params)

    def reset(self, seed: int, params: dict | None = None) -> None:
        if params:
            self._apply_params(params)
        self.current_step = 0
        self._rng = Xoshiro256StarStar.from_seed(seed)
        self._init_state(self._rng)

    def next(self) -> None:
        if self._rng is None:
            raise SimulatorError("next() before reset()")
        self._advance(self._rng)
        self.current_step += 1

    def eval(self, obs: str) -> float:
        compiled = self._expr_cache.get(obs)
        if compiled is None:
            try:
                compiled = compile_expr(obs)
            except ObsExprError as exc:
                raise UnknownObservableError(str(exc)) from exc
            self._expr_cache[obs] = compiled
        return eval_expr(compiled, self._lookup)

    def _lookup(self, name: str) -> float:
        if name == "steps":
            return float(self.current_step)
        try:
            return float(self.observables[name])
        except KeyError:
            raise UnknownObservableError(
                f"unknown observable {name!r} for model {self.spec.name!r}"
            ) from None

    def state_fingerprint(self) -> tuple:
        """Hashable snapshot of the full model state (used to verify eval purity)."""
        rng_state = self._rng.state_tuple() if self._rng is not None else None
        return (
            self.current_step,
            tuple(sorted(self.observables.items())),
            tuple(sorted(self.params.items())),
            rng_state,
            self._extra_state(),
        )

    # Subclass hooks -------------------------------------------------------

    def _init_state(self, rng: Xoshiro256StarStar) -> None:
        raise NotImplementedError

    def _advance(self, rng: Xoshiro256StarStar) -> None:
        raise NotImplementedError

    def _extra_state(self) -> tuple:
        return ()


# ---------------------------------------------------------------------------
# External-process wire protocol client
# ---------------------------------------------------------------------------

@dataclass
class _LineTransport:
    """Reader-thread wrapper so every request honors the per-call timeout."""

    write_line: callable
    readline: callable
    close_fn: callable
    _queue: queue.Queue = field(default_factory=queue.Queue)
    _reader: threading.Thread | None = None

    def start(self):
        self._reader = threading.Thread(target=self._drain, daemon=True)
        self._reader.start()

    def _drain(self):
        try:
            while True:
                line = self.readline()
                if not line:
                    break
                self._queue.put(line)
        except Exception:
            pass
        self._queue.put(None)

    def request_line(self, line: str, timeout: float) -> str:
        self.write_line(line)
        try:
            reply = self._queue.get(timeout=timeout)
        except queue.Empty:
            raise TransportError(f"simulator did not respond within {timeout} s") from None
        if reply is None:
            raise TransportError("simulator closed the connection")
        return reply


class ExternalSimulator(Simulator):
    """Client side of the wire protocol.

    Messages are UTF-8, one JSON object per line, no pretty-printing;
    requests carry a u64 ``id`` that the server must echo verbatim.
    """

    kind = "external"

    def __init__(self, command: list[str] | None = None,
                 address: tuple[str, int] | None = None,
                 timeout: float = 30.0):
        super().__init__()
        if (command is None) == (address is None):
            raise ValueError("provide exactly one of command / address")
        self.timeout = timeout
        self._next_id = 0
        self._proc = None
        self._sock = None
        if command is not None:
            self._proc = subprocess.Popen(
                command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, encoding="utf-8", bufsize=1,
            )
            self._transport = _LineTransport(
                write_line=self._write_stdio,
                readline=self._proc.stdout.readline,
                close_fn=self._close_stdio,
            )
        else:
            self._sock = socket.create_connection(address, timeout=timeout)
            self._sock_file = self._sock.makefile("rw", encoding="utf-8", newline="\n")
            self._transport = _LineTransport(
                write_line=self._write_sock,
                readline=self._sock_file.readline,
                close_fn=self._close_sock,
            )
        self._transport.start()

    def _write_stdio(self, line):
        if self._proc.poll() is not None:
            raise TransportError("simulator process has exited")
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise TransportError("simulator process pipe broken") from exc

    def _write_sock(self, line):
        try:
            self._sock_file.write(line + "\n")
            self._sock_file.flush()
        except OSError as exc:
            raise TransportError("simulator socket broken") from exc

    def _close_stdio(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.wait(timeout=5)

    def _close_sock(self):
        self._sock_file.close()
        self._sock.close()

    def _request(self, payload: dict) -> dict:
        if not self.alive:
            raise TransportError("simulator handle is closed")
        req_id = self._next_id
        self._next_id += 1
        payload = {"id": req_id, **payload}
        line = json.dumps(payload, separators=(",", ":"))
        reply_line = self._transport.request_line(line, self.timeout)
        try:
            reply = json.loads(reply_line)
        except json.JSONDecodeError as exc:
            raise TransportError(f"malformed response line: {reply_line!r}") from exc
        if reply.get("id") != req_id:
            raise TransportError(
                f"response id {reply.get('id')!r} does not match request id {req_id}"
            )
        if not reply.get("ok", False):
            raise SimulatorError(reply.get("error", "simulator reported an error"))
        return reply

    def reset(self, seed: int, params: dict | None = None) -> None:
        self._request({"cmd": "reset", "seed": seed, "params": dict(params or {})})
        self.current_step = 0

    def next(self) -> None:
        self._request({"cmd": "next"})
        self.current_step += 1

    def eval(self, obs: str) -> float:
        reply = self._request({"cmd": "eval", "obs": obs})
        if "value" not in reply:
            raise TransportError("eval response missing 'value'")
        return float(reply["value"])

    def close(self) -> None:
        if not self.alive:
            return
        try:
            self._request({"cmd": "shutdown"})
        except (SimulatorError, TransportError):
            pass
        try:
            self._transport.close_fn()
        except Exception:
            pass
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
        self.alive = False
