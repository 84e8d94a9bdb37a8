import pytest

from stmpi.bench.sweep import problem_side, run_scaling_sweep
from stmpi.errors import StmpiError

GRIDS = [(1, 1), (2, 2), (4, 4)]


@pytest.fixture(scope="module")
def sweep():
    results, digests, _ = run_scaling_sweep(
        1 << 16, GRIDS, ["baseline", "st-send", "st-rsend"],
        steps=5, pattern="random", seed=4)
    return results, digests


def test_single_rank_baseline_speedup_is_one(sweep):
    results, _ = sweep
    row = next(r for r in results if r.backend == "baseline" and r.ranks == 1)
    assert row.metrics["speedup"] == 1.0


def test_ready_send_speedup_dominates_regular_send(sweep):
    results, _ = sweep
    speed = {(r.backend, r.ranks): r.metrics["speedup"] for r in results}
    for R, C in GRIDS:
        assert speed[("st-rsend", R * C)] >= speed[("st-send", R * C)]


def test_all_cells_share_one_digest(sweep):
    _, digests = sweep
    assert len(set(digests.values())) == 1


def test_replicates_stack_rows():
    results, _, _ = run_scaling_sweep(
        1 << 14, [(1, 1), (2, 2)], ["baseline"], steps=3,
        pattern="random", seed=0, replicates=2)
    per_cell = [r for r in results if r.ranks == 4]
    assert len(per_cell) == 2  # one row per replicate


def test_problem_side_requires_square():
    assert problem_side(1 << 16) == 256
    with pytest.raises(StmpiError):
        problem_side((1 << 16) + 1)


def test_indivisible_grid_rejected():
    with pytest.raises(StmpiError):
        run_scaling_sweep(1 << 16, [(3, 3)], ["baseline"], steps=1)
