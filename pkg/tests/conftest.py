import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from helpers import ACCEPTANCE_LINES  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    grouped = {}
    for key, (ok, detail) in ACCEPTANCE_LINES.items():
        grouped.setdefault(int(key.split(".")[0]), []).append((key, ok, detail))
    terminalreporter.section("acceptance criteria")
    for k in sorted(grouped):
        parts = sorted(grouped[k], key=lambda t: [int(x) for x in t[0].split(".")])
        ok = all(p[1] for p in parts)
        detail = "; ".join(p[2] for p in parts if p[2])
        terminalreporter.write_line(f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}")
