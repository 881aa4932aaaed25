"""Shared record of acceptance outcomes, printed by the terminal-summary hook in conftest."""

RESULTS = {}


def record(number: int, title: str, ok: bool, detail: str) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} ({detail})"
    RESULTS[number] = line
    print(line)
    return line
