"""Regenerate bridge_golden_transcript.txt from the reference wrapper.

The fixture is a recorded stdio session against the random-walk reference
wrapper: odd lines are raw request lines (one is deliberately not JSON),
even lines are the exact response bytes the wrapper produced. Conformance
tests replay the odd lines and byte-compare the answers, so the fixture
pins both the wire schema and the wrapper's determinism.

Run from the repository root:

    python3 tests/data/make_golden_transcript.py
"""

from __future__ import annotations

import io
from pathlib import Path

from mdpfuzz_bridge_sdk import serve
from mdpfuzz_bridge_sdk.randomwalk import make_adapter

# One happy-path exercise of every command (including determinism repeats),
# then the failure modes a client can trigger, then proof the connection
# still answers afterwards.
REQUESTS = [
    '{"id":1,"cmd":"spec"}',
    '{"id":2,"cmd":"sample","rng":12345}',
    '{"id":3,"cmd":"sample","rng":12345}',
    '{"id":4,"cmd":"validate","state":[0.5]}',
    '{"id":5,"cmd":"validate","state":[25.0]}',
    '{"id":6,"cmd":"validate","state":[9.0]}',
    '{"id":7,"cmd":"rollout","state":[7.5],"horizon":10,"rng":99}',
    '{"id":8,"cmd":"rollout","state":[0.0],"horizon":5,"rng":7}',
    '{"id":9,"cmd":"rollout","state":[0.0],"horizon":5,"rng":7}',
    '{"id":10,"cmd":"rollout","state":[7.5],"horizon":10,"rng":1}',
    'this line is not json',
    '{"id":11,"cmd":"warp"}',
    '{"id":12,"cmd":"rollout","state":[0.0],"horizon":0,"rng":1}',
    '{"id":13,"cmd":"rollout","state":[0.0,1.0],"horizon":5,"rng":1}',
    '{"id":14,"cmd":"sample"}',
    '{"id":15,"cmd":"spec"}',
]

TRANSCRIPT = Path(__file__).with_name("bridge_golden_transcript.txt")


def main() -> None:
    rfile = io.StringIO("".join(line + "\n" for line in REQUESTS))
    wfile = io.StringIO()
    serve(make_adapter(), rfile, wfile)
    responses = wfile.getvalue().splitlines()
    if len(responses) != len(REQUESTS):
        raise RuntimeError(
            f"{len(REQUESTS)} requests produced {len(responses)} responses")
    lines = []
    for request, response in zip(REQUESTS, responses):
        lines.append(request)
        lines.append(response)
    TRANSCRIPT.write_text("".join(line + "\n" for line in lines))
    print(f"wrote {TRANSCRIPT} ({len(REQUESTS)} request/response pairs)")


if __name__ == "__main__":
    main()
