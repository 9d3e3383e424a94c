from collections import defaultdict

import pytest

_criteria: dict[int, list[tuple[str, bool, str]]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        _criteria[(marker.args[0], marker.args[1])].append((item.name, rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for (n, title), results in sorted(_criteria.items()):
        ok = all(passed for _, passed, _ in results)
        details = " | ".join(d for _, _, d in results if d)
        terminalreporter.write_line(
            f"criterion {n:2d} [{'PASS' if ok else 'FAIL'}] {title}: {details}"
        )
