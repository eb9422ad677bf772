#!/usr/bin/env python3
"""Minimal SDK usage: a constant-valued simulator behind the wire protocol.

Observable "x" reports the value of the ``c`` parameter (default 0, settable
per reset), "steps" reports the step counter.  Functionally identical to the
engine's in-process constant model, which makes it useful for conformance
checks: an analysis run through this server must reproduce the in-process
result exactly.

Usage: constant_server.py [--tcp PORT] [c]
"""

import os
import sys

try:
    from adaptor_sdk import AdaptorServer
except ImportError:  # running from a checkout without the package installed
    sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))
    from adaptor_sdk import AdaptorServer

server = AdaptorServer()
state = {"c": 0.0, "steps": 0, "default_c": 0.0}


@server.on_reset
def reset(seed, params):
    state["c"] = float(params.get("c", state["default_c"]))
    state["steps"] = 0


@server.on_next
def step():
    state["steps"] += 1


@server.on_eval
def observe(obs):
    if obs == "x":
        return state["c"]
    if obs == "steps":
        return float(state["steps"])
    raise ValueError("unknown observable")


def main(argv):
    transport, port = "stdio", 0
    args = list(argv)
    if args and args[0] == "--tcp":
        transport, port = "tcp", int(args[1])
        args = args[2:]
    if args:
        state["default_c"] = state["c"] = float(args[0])
    return server.serve(transport=transport, port=port)


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
