"""Deliberately misbehaving runner used to exercise client error paths.

Modes (first argv argument):
  garbage    - replies to every frame with non-JSON text
  bad-id     - answers fit/predict with a wrong request id
  error      - answers every post-handshake request with an error frame
  die        - exits immediately after the handshake reply
  old        - handshakes with an unsupported protocol version
"""

import json
import sys


def main() -> int:
    mode = sys.argv[1] if len(sys.argv) > 1 else "error"
    for line in sys.stdin:
        if not line.strip():
            continue
        frame = json.loads(line)
        kind = frame.get("type")
        if kind == "handshake":
            if mode == "old":
                reply = {"type": "handshake", "version": 0, "capabilities": []}
            else:
                reply = {"type": "handshake", "version": 1,
                         "capabilities": ["fit", "predict"]}
            sys.stdout.write(json.dumps(reply) + "\n")
            sys.stdout.flush()
            if mode == "die":
                return 3
            continue
        if kind == "shutdown":
            return 0
        if mode == "garbage":
            sys.stdout.write("this is not json\n")
        elif mode == "bad-id":
            sys.stdout.write(json.dumps(
                {"type": "result", "id": 999_999, "ok": True}) + "\n")
        else:
            sys.stdout.write(json.dumps(
                {"type": "error", "id": frame.get("id"),
                 "message": "refusing on principle"}) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
