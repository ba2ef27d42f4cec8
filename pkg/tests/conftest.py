from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings

from rdtkit.devsim import ChipGeometry, ConditionPreset, RowDistribution, new_device

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def small_device(seed=0, jitter=0.12, rows=256, banks=1, weak=4, **dist):
    geometry = ChipGeometry(banks=banks, rows_per_bank=rows, bits_per_row=4096, tested_row_fraction=Fraction(1, 4))
    distribution = RowDistribution(jitter_half_width=jitter, weak_rows_per_bank=weak, **dist)
    return new_device(geometry, distribution, ConditionPreset(), seed)


@pytest.fixture
def device():
    return small_device()


# one verdict line per acceptance criterion, shown at the end of every run
_VERDICTS: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    n, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    if report.failed and not detail:
        detail = report.longreprtext.strip().splitlines()[-1] if report.longreprtext else ""
    _VERDICTS[n] = ("PASS" if report.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        verdict, title, detail = _VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d} {verdict}: {title}" + (f" | {detail}" if detail else ""))
