"""PASS/FAIL lines collected by the acceptance module, echoed in the terminal summary."""

LINES: list[str] = []


def report(name: str, ok: bool, detail: str = "") -> bool:
    line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
    print(line)
    LINES.append(line)
    return ok
