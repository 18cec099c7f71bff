"""Collects one verdict line per acceptance criterion for the terminal summary."""

import contextlib
import time

LINES = []


@contextlib.contextmanager
def criterion(number, title, budget_s):
    start = time.perf_counter()
    try:
        yield
        secs = time.perf_counter() - start
        assert secs < budget_s, f"took {secs:.1f}s, budget {budget_s}s"
    except BaseException as exc:
        secs = time.perf_counter() - start
        line = f"criterion {number:>2} FAIL  {title} ({secs:.1f}s): {str(exc).splitlines()[0] if str(exc) else type(exc).__name__}"
        LINES.append(line)
        print(line)
        raise
    line = f"criterion {number:>2} PASS  {title} ({secs:.1f}s)"
    LINES.append(line)
    print(line)
