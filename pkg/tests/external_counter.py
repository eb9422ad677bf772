"""Throwaway wire-protocol server used by the transport tests.

A deterministic counter model: reset puts ``value`` at seed % 10, every step
adds the ``inc`` parameter (default 1).  Not a reference implementation -
just enough protocol to exercise the client.  Flags make it misbehave on
purpose (sleep on next, garbage replies, wrong ids, immediate crash).
"""

import json
import sys
import time


def main() -> int:
    mode = sys.argv[1] if len(sys.argv) > 1 else "ok"
    if mode == "crash-on-start":
        return 3
    value = 0.0
    steps = 0
    inc = 1.0
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        req = json.loads(line)
        rid = req["id"]
        cmd = req["cmd"]
        if mode == "garbage" and cmd == "eval":
            print("not json at all")
            sys.stdout.flush()
            continue
        if mode == "wrong-id":
            rid = rid + 1000
        if mode == "sleep-on-next" and cmd == "next":
            time.sleep(10)
        if cmd == "reset":
            value = float(req["seed"] % 10)
            steps = 0
            inc = float(req.get("params", {}).get("inc", 1.0))
            reply = {"id": rid, "ok": True}
        elif cmd == "next":
            value += inc
            steps += 1
            reply = {"id": rid, "ok": True}
        elif cmd == "eval":
            obs = req["obs"]
            if obs == "value":
                reply = {"id": rid, "ok": True, "value": value}
            elif obs == "steps":
                reply = {"id": rid, "ok": True, "value": float(steps)}
            else:
                reply = {"id": rid, "ok": False, "error": f"unknown observable {obs!r}"}
        elif cmd == "shutdown":
            print(json.dumps({"id": rid, "ok": True}))
            sys.stdout.flush()
            return 0
        else:
            reply = {"id": rid, "ok": False, "error": f"unknown command {cmd!r}"}
        print(json.dumps(reply, separators=(",", ":")))
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
