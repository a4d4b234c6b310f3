import pytest

from scenarios import make_team, make_toy_repo
from teamflow import init_forge


@pytest.fixture
def toy_repo(tmp_path):
    return make_toy_repo(tmp_path / "src-repo")


@pytest.fixture
def forge(tmp_path, toy_repo):
    return init_forge(toy_repo, "T1", tmp_path / "task" / "forge")


@pytest.fixture
def team():
    return make_team()
