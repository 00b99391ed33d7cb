import importlib.resources as resources

import pytest

from fankoszul.fan import load_fan


def fixture_text(name: str) -> str:
    return resources.files("fankoszul").joinpath(f"data/{name}.json").read_text()


@pytest.fixture(scope="session")
def fx1():
    return load_fan(fixture_text("fx1"))


@pytest.fixture(scope="session")
def fx2():
    return load_fan(fixture_text("fx2"))


@pytest.fixture(scope="session")
def fx3():
    return load_fan(fixture_text("fx3"))
