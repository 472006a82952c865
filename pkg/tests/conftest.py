from __future__ import annotations

import pytest

from eai.domain import builtin_domain
from eai.tasks import fixture_tasks


@pytest.fixture(scope="session")
def tasks():
    return {t.task_id: t for t in fixture_tasks()}


@pytest.fixture(scope="session")
def behavior():
    return builtin_domain("behavior-symbolic")


@pytest.fixture(scope="session")
def vh():
    return builtin_domain("virtualhome-core")


@pytest.fixture(scope="session")
def fridge(tasks):
    return tasks["cleaning_fridge_0"]


FRIDGE_PLAN = [
    "RIGHT_GRASP(rag.0)",
    "RIGHT_PLACE_NEXTTO(sink.82)",
    "TOGGLE_ON(sink.82)",
    "SOAK(rag.0)",
    "TOGGLE_OFF(sink.82)",
    "OPEN(fridge.97)",
    "CLEAN(fridge.97)",
]

FRIDGE_SUBGOALS = (
    "next_to(rag.0, sink.82) then toggled_on(sink.82) then soaked(rag.0) then "
    "toggled_off(sink.82) then open(fridge.97) then not stained(fridge.97)"
)
