"""Local execution of relayed code tests.

Tests run here, in the student's own process, never on the server. Each
test source defines a function that receives the student's submitted
function and returns ``(reply, points)``. A wall-clock guard keeps a hung
test (or a hung student function) from outliving the server's relay window:
we answer before the server gives up.
"""

from __future__ import annotations

import threading
from typing import Callable

# Shorter than the server's 60 s relay timeout so our reply always lands.
DEFAULT_TEST_TIMEOUT_S = 45.0


def load_test_function(test_source: str) -> Callable:
    """Execute the test source and return the function it defines."""
    namespace: dict = {}
    exec(compile(test_source, "<relayed-test>", "exec"), namespace)
    functions = [v for v in namespace.values() if callable(v) and not isinstance(v, type)]
    if not functions:
        raise ValueError("test source defines no function")
    return functions[-1]  # the last def wins, helpers may precede it


def run_one_test(test: dict, solution: Callable, timeout_s: float = DEFAULT_TEST_TIMEOUT_S) -> dict:
    """One relayed test against the submitted function.

    Exceptions become a "test raised: ..." reply worth zero points so one
    broken test cannot sink the batch; a test that outlives the guard is
    reported as timed out, also worth zero.
    """
    outcome: dict = {}

    def work():
        try:
            test_fn = load_test_function(test["test_source"])
            result = test_fn(solution)
            reply, points = result
            if not isinstance(reply, str):
                reply = str(reply)
            outcome["reply"] = reply
            outcome["points"] = float(points)
        except Exception as exc:  # noqa: BLE001 - any failure is the test's result
            outcome["reply"] = f"test raised: {exc}"
            outcome["points"] = 0

    worker = threading.Thread(target=work, daemon=True)
    worker.start()
    worker.join(timeout_s)
    if worker.is_alive() or "reply" not in outcome:
        return {
            "test_id": test["test_id"],
            "reply": f"test did not finish within {timeout_s:.0f}s",
            "points": 0,
        }
    return {"test_id": test["test_id"], "reply": outcome["reply"], "points": outcome["points"]}


def run_tests(tests: list[dict], solution: Callable, timeout_s: float = DEFAULT_TEST_TIMEOUT_S) -> list[dict]:
    return [run_one_test(test, solution, timeout_s) for test in tests]
