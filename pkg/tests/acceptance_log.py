"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES = []


def verdict(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"[{number:02d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    LINES.append(line)
    print(line)
    return ok
