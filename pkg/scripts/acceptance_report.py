"""Evaluate all acceptance criteria and print one PASS/FAIL line per criterion."""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import test_acceptance  # noqa: E402

if __name__ == "__main__":
    for crit in test_acceptance.CRITERIA:
        crit()
    print("\n".join(test_acceptance.report_lines()))
