from importlib import resources

import pytest

from brickflow.netpbm import checkerboard
from brickflow.registry import default_registry
from brickflow.workflow import parse_workflow

EXAMPLES = ("example1", "example2", "example3")


def example_text(name: str) -> str:
    return resources.files("brickflow.data").joinpath("examples", f"{name}.json").read_text("utf-8")


def example(name: str):
    return parse_workflow(example_text(name))


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture(scope="session")
def checker64():
    return checkerboard(64, 64)


@pytest.fixture(params=EXAMPLES)
def example_name(request):
    return request.param
