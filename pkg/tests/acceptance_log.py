"""Verdict lines collected by the acceptance tests, printed at session end."""

VERDICTS: list[str] = []


def check(criterion: str, title: str, ok: bool, detail: str) -> None:
    VERDICTS.append(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {title} ({detail})")
    print(VERDICTS[-1])
    assert ok, detail
