"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

LINES: list[str] = []


def record(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    LINES.append(line)
    print(line)
    return ok
