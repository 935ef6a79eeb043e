from datetime import datetime, timezone

import pytest

from alas.backends import ScriptedBackend
from alas.demo import demo_script
from alas.knowledge import fixed_clock
from alas.profiles import builtin_roster
from alas.tasks import builtin_demo_task

FIXED = datetime(2024, 3, 1, 9, 0, tzinfo=timezone.utc)


@pytest.fixture
def roster():
    return builtin_roster()


@pytest.fixture
def demo():
    return builtin_demo_task()


@pytest.fixture
def clock():
    return fixed_clock(FIXED)


@pytest.fixture
def scripted():
    return ScriptedBackend(demo_script())


@pytest.fixture
def no_sleep():
    slept = []
    return slept.append, slept
