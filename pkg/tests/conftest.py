import pytest

# (criterion id, title, passed, detail) filled in by test_acceptance.py
ACCEPTANCE = []


@pytest.fixture
def record():
    def _record(cid, title, passed, detail=""):
        ACCEPTANCE.append((cid, title, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {cid} {title}: {detail}")
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid, title, passed, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0].split(".")[0])):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {cid:<3} {title}: {detail}")
