"""Rewrite testdata/sm/*.json from tests/golden_messages.py.

Only needed when the wire format changes on purpose; the test suite checks
that encoding the reference messages reproduces these files byte for byte.
"""

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from golden_messages import GOLDEN  # noqa: E402

from visionran.sm_protocol import encode  # noqa: E402

out = ROOT / "testdata" / "sm"
out.mkdir(parents=True, exist_ok=True)
for name, (kind, msg) in sorted(GOLDEN.items()):
    (out / f"{name}.json").write_bytes(encode(kind, msg))
    print(out / f"{name}.json")
