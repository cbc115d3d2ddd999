import pytest

from liftfix.strips import ground
from liftfix.strips.domains import FIXTURE_KEYS, fixture


@pytest.fixture(scope="session")
def domains():
    """key -> (fixture, default instance, ground index), built once per run."""
    out = {}
    for key in FIXTURE_KEYS:
        fx = fixture(key)
        inst = fx.default_instance()
        out[key] = (fx, inst, ground(inst))
    return out


@pytest.fixture(scope="session")
def blocks_fx():
    return fixture("blocksworld")


@pytest.fixture(scope="session")
def gripper_fx():
    return fixture("gripper")


@pytest.fixture(scope="session")
def bw1(blocks_fx):
    return ground(blocks_fx.make_instance(blocks=1))


@pytest.fixture(scope="session")
def bw2(blocks_fx):
    return ground(blocks_fx.make_instance(blocks=2))


@pytest.fixture(scope="session")
def bw3(blocks_fx):
    return ground(blocks_fx.make_instance(blocks=3))


@pytest.fixture(scope="session")
def toy_gripper(gripper_fx):
    """3 balls, 1 gripper, 2 rooms: 12 propositions, 14 actions."""
    return ground(gripper_fx.make_instance(balls=3, grippers=1, rooms=2))
