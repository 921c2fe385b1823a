import time

import pytest
from hypothesis import HealthCheck, settings

from cpagain import config, io, pipeline, system

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def pendulum():
    return system.load_system("pendulum")


@pytest.fixture(scope="session")
def reference_config():
    return config.load_config("pendulum-reference")


@pytest.fixture(scope="session")
def reference_run(pendulum, reference_config):
    """The reference analysis, run once per session, with its wall time in seconds."""
    start = time.perf_counter()
    cert = pipeline.analyze(pendulum, reference_config)
    return cert, time.perf_counter() - start


@pytest.fixture(scope="session")
def reference_cert(reference_run):
    return reference_run[0]


CRITERIA: dict = {}


@pytest.fixture(scope="session")
def criteria():
    """Acceptance lines keyed by criterion number, echoed in the terminal summary."""
    return CRITERIA


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for key in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[key])


@pytest.fixture(scope="session")
def reference_cert_file(reference_cert, tmp_path_factory):
    path = tmp_path_factory.mktemp("reference") / "cert.json"
    io.save_certificate(reference_cert, path)
    return path
