"""Collects one status line per acceptance criterion for the terminal summary."""

LINES = []


def record(criterion, status, detail):
    line = f"criterion {criterion}: {status} {detail}"
    LINES.append(line)
    print(line)
    return line
