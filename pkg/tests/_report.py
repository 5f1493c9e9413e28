"""Collects the one-line verdicts printed by the acceptance suite."""

LINES = []


def verdict(criterion, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    LINES.append(line)
    print(line)
    return ok
