import sys
from pathlib import Path

# make tests/oracles.py importable regardless of rootdir
sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[str, dict[str, str]] = {}
_names: dict[str, str] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _names[item.nodeid] = m.args[0]
            _criteria.setdefault(m.args[0], {})


def pytest_runtest_logreport(report):
    name = _names.get(report.nodeid)
    if name is None:
        return
    results = _criteria[name]
    if report.failed:
        results[report.nodeid] = "failed"
    elif report.when == "call" and report.passed:
        results.setdefault(report.nodeid, "passed")
    elif report.skipped:
        results.setdefault(report.nodeid, "skipped")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, results in _criteria.items():
        if not results:
            status = "NOT RUN"
        elif all(v == "passed" for v in results.values()):
            status = "PASS"
        else:
            status = "FAIL"
        parts = ", ".join(f"{nid.split('::')[-1]}={v}" for nid, v in results.items())
        tr.write_line(f"{status:7s} {name}  [{parts}]")
