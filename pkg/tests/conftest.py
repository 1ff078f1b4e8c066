"""Collects the outcome of every acceptance criterion and prints one line each."""
import re

_CRITERIA = {}
_NAMES = {
    1: "exact-posterior agreement (n = 3, 4, 5)",
    2: "V_n series and Gamma-Poisson marginal oracles",
    3: "scenario 1 recovery (K = 3, R = 100)",
    4: "scenario 2 recovery (K = 6, R = 100)",
    5: "real-data workflow (20/50/100 grids)",
    6: "degenerate inputs and determinism",
    7: "metric oracles (Rand index, Dahl distance, LPML)",
}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome != "passed":
        num = int(m.group(1))
        ok = report.outcome == "passed"
        prev = _CRITERIA.get(num, (True, []))
        detail = prev[1]
        if not ok:
            detail.append(str(report.longrepr.reprcrash.message) if hasattr(report.longrepr, "reprcrash")
                          else str(report.longrepr).splitlines()[-1])
        _CRITERIA[num] = (prev[0] and ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        ok, detail = _CRITERIA[num]
        line = f"criterion {num} [{_NAMES.get(num, '')}]: {'PASS' if ok else 'FAIL'}"
        if detail:
            line += " :: " + " | ".join(d.replace("\n", " ")[:300] for d in detail)
        terminalreporter.write_line(line)
