from __future__ import annotations

import pytest

from stmpi import CostModel, World


@pytest.fixture
def cost():
    return CostModel()


def run_world(n_ranks, programs, cost=None, expect_completed=True, **kwargs):
    """Build a world, attach {rank: program} generators, run to quiescence."""
    world = World(n_ranks, cost=cost, **kwargs)
    for rank, program in programs.items():
        world.add_program(rank, program)
    outcome = world.run()
    if expect_completed:
        assert outcome.completed, getattr(outcome, "describe", lambda: outcome)()
    return world, outcome
