import pytest

from ipnsim.ephemeris import Ephemeris, OrbitSpec
from ipnsim.units import AU, DAY

T_EARTH = 365.256 * DAY
T_MARS = 686.98 * DAY
R_MARS = 1.523679 * AU
MARS_PHASE = -0.7246  # puts solar conjunction near day 300


@pytest.fixture(scope="session")
def solar():
    return Ephemeris({
        "Sun": OrbitSpec("fixed-point"),
        "Earth": OrbitSpec("circular-heliocentric", AU, T_EARTH, 0.0, mass_ratio=3.0035e-6),
        "Mars": OrbitSpec("circular-heliocentric", R_MARS, T_MARS, MARS_PHASE, mass_ratio=3.227e-7),
        "Jupiter": OrbitSpec("circular-heliocentric", 5.2044 * AU, 4332.59 * DAY, 1.0, mass_ratio=9.5479e-4),
        "Moon": OrbitSpec("circular-planetocentric", 384400e3, 27.3217 * DAY, 0.0, parent="Earth"),
        "EL1": OrbitSpec("lagrangian", parent="Earth", lagrange_point="L1"),
        "EL2": OrbitSpec("lagrangian", parent="Earth", lagrange_point="L2"),
        "EL3": OrbitSpec("lagrangian", parent="Earth", lagrange_point="L3"),
        "EL4": OrbitSpec("lagrangian", parent="Earth", lagrange_point="L4"),
        "EL5": OrbitSpec("lagrangian", parent="Earth", lagrange_point="L5"),
        "ML1": OrbitSpec("lagrangian", parent="Mars", lagrange_point="L1"),
        "JL1": OrbitSpec("lagrangian", parent="Jupiter", lagrange_point="L1"),
    })


# ---- acceptance report -------------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    if report.when == "call" or report.failed:
        detail = ""
        if report.failed:
            detail = str(report.longrepr.reprcrash.message if hasattr(report.longrepr, "reprcrash")
                         else report.longrepr).splitlines()[0]
        _ACCEPTANCE[number] = (title, report.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[number]
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
