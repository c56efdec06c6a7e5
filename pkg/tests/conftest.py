import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from lfopf.cases import case_path
from lfopf.ingest import merge, parse_case, parse_extension

settings.register_profile("deterministic", derandomize=True)
settings.load_profile("deterministic")


@pytest.fixture(scope="session")
def case2():
    return parse_case(case_path("case2").read_text())


@pytest.fixture(scope="session")
def case3():
    return parse_case(case_path("case3").read_text())


@pytest.fixture(scope="session")
def case3r():
    return parse_case(case_path("case3r").read_text())


@pytest.fixture(scope="session")
def corridor_case():
    return parse_case(case_path("corridor").read_text())


@pytest.fixture(scope="session")
def corridor_ext():
    return parse_extension(case_path("corridor-lfac").read_text())


@pytest.fixture(scope="session")
def net2(case2):
    return merge(case2)


@pytest.fixture(scope="session")
def net3(case3):
    return merge(case3)


@pytest.fixture(scope="session")
def corridor_net(corridor_case, corridor_ext):
    return merge(corridor_case, corridor_ext)


@pytest.fixture(scope="session")
def corridor_baseline_net(corridor_case):
    return merge(corridor_case)


@pytest.fixture(scope="session")
def light_net():
    case = parse_case(case_path("corridor-light").read_text())
    ext = parse_extension(case_path("corridor-light-lfac").read_text())
    return merge(case, ext)


@pytest.fixture(scope="session")
def light_baseline_net():
    return merge(parse_case(case_path("corridor-light").read_text()))


@pytest.fixture(scope="session")
def fopf_net(case3r):
    return merge(case3r, parse_extension(case_path("case3r-fopf").read_text()))
