import pytest

from sceneupdate import PlannerConfig, load_bundled
from sceneupdate.prior import plan_prior


@pytest.fixture(scope="session")
def cfg():
    return PlannerConfig()


@pytest.fixture(scope="session")
def five_changes():
    return load_bundled("five_changes")


@pytest.fixture(scope="session")
def five_plan(five_changes, cfg):
    return plan_prior(five_changes[0], cfg)


@pytest.fixture(scope="session")
def five_mission(five_changes, cfg, five_plan):
    from sceneupdate.realtime import run_mission

    t1, t2 = five_changes
    return run_mission(t1, t2, cfg, plan=five_plan)


_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, name): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not rep.failed:
        return
    n, name = mark.args
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    status = "PASS" if rep.passed else "FAIL"
    results = item.config.stash.setdefault(_RESULTS, {})
    if n in results:  # parametrized criterion: any failure fails it
        prev, _, prev_detail = results[n]
        status = "FAIL" if "FAIL" in (prev, status) else "PASS"
        detail = "; ".join(d for d in (prev_detail, detail) if d)
    results[n] = (status, name, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        status, name, detail = results[n]
        line = f"criterion {n:2d} {status}  {name}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
