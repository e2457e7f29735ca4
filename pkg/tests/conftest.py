from collections import defaultdict

import pytest

CRITERIA = {
    1: "DAIPW 95% CI coverage of both arms in [0.93, 0.97]",
    2: "|bias NH0 arm 1| > 0.3 and |bias DAIPW arm 1| < 0.02",
    3: "NH coverage of arm 1 < 0.93",
    4: "non-Hajek IPW mean for arm 1 in [0.45, 0.55]",
    5: "mean p_hat(1) in [0.48, 0.52], mean p_hat(2) in [0.98, 1.02]",
    6: "DAIPW standardized-error KS < 0.05 (zero margin, margin 0.1)",
    7: "coverage and KS hold under negative binomial and rounded Pareto delays",
    8: "exhaustive small-trajectory reduction and recomputation to 1e-12",
    9: "invariant property suite (>= 1000 cases each)",
    10: "A1, A3 medians decrease from T=1e3 to T=1e4; A5 == 1 for h = sqrt(pi)",
}

_results: dict[int, list[tuple[str, bool, str]]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        _results[marker.args[0]].append((item.name, rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        checks = _results[n]
        ok = all(passed for _, passed, _ in checks)
        details = " | ".join(d for _, _, d in checks if d)
        line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}: {CRITERIA[n]}"
        if details:
            line += f" -- {details}"
        terminalreporter.write_line(line)
