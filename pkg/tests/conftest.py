import sys


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(acceptance.RESULTS):
        terminalreporter.write_line(acceptance.report_line(k))
