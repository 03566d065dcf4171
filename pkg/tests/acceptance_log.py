"""Collects one verdict line per acceptance criterion for the terminal summary."""

RESULTS: dict[int, str] = {}


def record(number: int, passed: bool, detail: str):
    RESULTS[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(RESULTS[number])
    return passed
