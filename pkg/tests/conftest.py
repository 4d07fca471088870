import os
from collections import OrderedDict

import pytest

EXTENDED = os.environ.get("RSSKIT_EXTENDED") == "1"

# criterion id -> list of (part, passed, message); filled by tests/test_acceptance.py
_VERDICTS: "OrderedDict[int, list]" = OrderedDict()


def pytest_collection_modifyitems(config, items):
    skip = pytest.mark.skip(reason="extended run; set RSSKIT_EXTENDED=1")
    for item in items:
        if "extended" in item.keywords and not EXTENDED:
            item.add_marker(skip)


@pytest.fixture
def verdict(request):
    """``verdict(criterion, ok, message)``: print and record one PASS/FAIL line, then assert."""

    def record(criterion: int, ok: bool, message: str, part: str = ""):
        ok = bool(ok)
        _VERDICTS.setdefault(criterion, []).append((part, ok, message))
        tag = f"{criterion}{part}"
        print(f"criterion {tag}: {'PASS' if ok else 'FAIL'} | {message}")
        assert ok, f"criterion {tag}: {message}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_VERDICTS):
        parts = _VERDICTS[crit]
        ok = all(p[1] for p in parts)
        tr.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}")
        for part, pok, msg in parts:
            tr.write_line(f"    {crit}{part} {'PASS' if pok else 'FAIL'}: {msg}")
    if 11 not in _VERDICTS and not EXTENDED:
        tr.write_line("criterion 11: NOT RUN (extended reference runs; set RSSKIT_EXTENDED=1)")
