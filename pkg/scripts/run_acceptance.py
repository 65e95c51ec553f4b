"""Run only the acceptance gate and print its per-criterion lines."""
import sys
from pathlib import Path

import pytest

if __name__ == "__main__":
    root = Path(__file__).resolve().parent.parent
    sys.exit(pytest.main([str(root / "tests" / "test_acceptance.py"), "-q", "-p", "no:cacheprovider"]))
