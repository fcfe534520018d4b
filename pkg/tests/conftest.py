import pytest

ACCEPTANCE_LINES = []


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False,
                     help="run the learning suite (hours)")
    parser.addoption("--artifacts", default=None,
                     help="directory for learning-suite checkpoints and logs (reused when present)")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: learning-suite tests, run with --run-slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="learning suite; pass --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter, config):
    if ACCEPTANCE_LINES and not config.getoption("--run-slow"):
        ACCEPTANCE_LINES.append("SKIP criteria 9-13: learning suite not requested (--run-slow)")
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
