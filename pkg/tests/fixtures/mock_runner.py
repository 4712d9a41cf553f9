#!/usr/bin/env python3
"""Scripted stand-in for the sandbox runner used by pipeline tests.

Speaks the stdio wire protocol but never executes anything: a request whose
code contains both "avg_pool3d" and "stride=0" is reported as a segfault,
everything else exits cleanly. Wall times are constants so whole runs are
bit-reproducible.
"""

import json
import sys


def main() -> None:
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            code = request["code"]
        except (json.JSONDecodeError, KeyError, TypeError):
            print(
                json.dumps(
                    {
                        "outcome_raw": 0,
                        "wall_s": 0.0,
                        "stderr_tail": "",
                        "protocol_error": "malformed request",
                    }
                ),
                flush=True,
            )
            continue
        if "avg_pool3d" in code and "stride=0" in code:
            reply = {
                "outcome_raw": -11,
                "wall_s": 0.02,
                "stderr_tail": "Segmentation fault (core dumped) in pool kernel at 0x7ffd1234\n",
            }
        else:
            reply = {"outcome_raw": 0, "wall_s": 0.01, "stderr_tail": ""}
        print(json.dumps(reply), flush=True)


if __name__ == "__main__":
    main()
