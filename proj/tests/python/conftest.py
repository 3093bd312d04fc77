import pathlib
import sys

# tools/recompute_metrics.py is imported as a module by the tests.
sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[2] / "tools"))
