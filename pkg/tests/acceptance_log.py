"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES = []


def record(name: str, ok: bool, detail: str) -> str:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    LINES.append(line)
    print(line)
    return line
