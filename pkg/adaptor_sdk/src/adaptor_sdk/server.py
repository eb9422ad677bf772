"""Single-threaded request loop speaking the wire protocol.

One JSON object per line, UTF-8, compact separators.  Requests carry a u64
``id`` that is echoed verbatim; the four commands are reset, next, eval, and
shutdown.  Standard output (or the socket) carries protocol lines and
nothing else; all logging goes to standard error.
"""

import json
import logging
import socket
import sys

log = logging.getLogger("adaptor_sdk")


class ProtocolError(Exception):
    """A request line that is not a valid protocol message."""


class AdaptorServer:
    """Dispatches protocol requests to three registered callbacks.

    Callbacks are registered with the decorator methods ``on_reset``,
    ``on_next``, and ``on_eval`` (each can also be called as a plain setter).
    ``serve`` runs until a shutdown message arrives or the peer disconnects.
    """

    def __init__(self):
        self._on_reset = None
        self._on_next = None
        self._on_eval = None

    # -- registration -------------------------------------------------------

    def on_reset(self, fn):
        """Register ``fn(seed: int, params: dict)``; returns fn (decorator)."""
        self._on_reset = fn
        return fn

    def on_next(self, fn):
        """Register ``fn()`` advancing the simulation one step."""
        self._on_next = fn
        return fn

    def on_eval(self, fn):
        """Register ``fn(obs: str) -> number``."""
        self._on_eval = fn
        return fn

    # -- request handling ---------------------------------------------------

    def handle_line(self, line: str) -> tuple[str, bool]:
        """Process one request line; returns (response line, keep-running).

        Never raises for bad input or callback failures: those become
        ok:false responses, keeping the loop alive.
        """
        req_id = None
        try:
            try:
                req = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"protocol error: bad JSON ({exc.msg})") from exc
            if not isinstance(req, dict):
                raise ProtocolError("protocol error: request is not an object")
            req_id = req.get("id")
            if not isinstance(req_id, int) or isinstance(req_id, bool) or req_id < 0:
                req_id = None
                raise ProtocolError("protocol error: missing or invalid id")
            cmd = req.get("cmd")
            if cmd == "shutdown":
                return self._ok(req_id), False
            if cmd == "reset":
                if "seed" not in req:
                    raise ProtocolError("protocol error: reset needs a seed")
                self._on_reset(req["seed"], dict(req.get("params") or {}))
                return self._ok(req_id), True
            if cmd == "next":
                self._on_next()
                return self._ok(req_id), True
            if cmd == "eval":
                if "obs" not in req:
                    raise ProtocolError("protocol error: eval needs an obs")
                value = float(self._on_eval(req["obs"]))
                return self._ok(req_id, value), True
            raise ProtocolError(f"protocol error: unknown command {cmd!r}")
        except Exception as exc:
            log.warning("request failed: %s", exc)
            return self._fail(req_id, str(exc) or type(exc).__name__), True

    @staticmethod
    def _ok(req_id, value=None):
        doc = {"id": req_id, "ok": True}
        if value is not None:
            doc["value"] = value
        return json.dumps(doc, separators=(",", ":"))

    @staticmethod
    def _fail(req_id, message):
        doc = {"ok": False, "error": message}
        if req_id is not None:
            doc = {"id": req_id, "ok": False, "error": message}
        return json.dumps(doc, separators=(",", ":"))

    # -- transports ---------------------------------------------------------

    def serve(self, transport: str = "stdio", host: str = "127.0.0.1",
              port: int = 0) -> int:
        """Run the request loop; returns the process exit status (0)."""
        if None in (self._on_reset, self._on_next, self._on_eval):
            raise ValueError("register on_reset, on_next, and on_eval before serving")
        if transport == "stdio":
            self._loop(iter(sys.stdin.readline, ""), self._write_stdout)
        elif transport == "tcp":
            self._serve_tcp(host, port)
        else:
            raise ValueError(f"unknown transport {transport!r}")
        return 0

    @staticmethod
    def _write_stdout(line):
        sys.stdout.write(line + "\n")
        sys.stdout.flush()

    def _loop(self, lines, write):
        for line in lines:
            line = line.strip()
            if not line:
                continue
            response, keep_going = self.handle_line(line)
            write(response)
            if not keep_going:
                log.info("shutdown requested")
                return
        log.info("peer closed the connection")

    def _serve_tcp(self, host, port):
        with socket.create_server((host, port)) as listener:
            # Port 0 means "pick one"; announce the choice on stderr so a
            # parent process can parse it.
            addr = listener.getsockname()
            print(f"adaptor_sdk listening on {addr[0]}:{addr[1]}",
                  file=sys.stderr, flush=True)
            conn, peer = listener.accept()
            log.info("connection from %s:%s", *peer)
            with conn, conn.makefile("rw", encoding="utf-8", newline="\n") as fh:
                def write(line):
                    fh.write(line + "\n")
                    fh.flush()
                self._loop(iter(fh.readline, ""), write)


def serve(callbacks, transport: str = "stdio", **kwargs) -> int:
    """Functional entry point.

    ``callbacks`` is any object with ``on_reset``/``on_next``/``on_eval``
    attributes (a simulator facade), or a dict with those keys.
    """
    server = AdaptorServer()
    if isinstance(callbacks, dict):
        get = callbacks.__getitem__
    else:
        get = lambda name: getattr(callbacks, name)
    server.on_reset(get("on_reset"))
    server.on_next(get("on_next"))
    server.on_eval(get("on_eval"))
    return server.serve(transport=transport, **kwargs)
