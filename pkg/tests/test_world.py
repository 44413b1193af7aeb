import math

import numpy as np
import pytest

from meshfleet.geometry import Pose2
from meshfleet.mapping import OccupancyGrid
from meshfleet.world import (ArenaSpec, Obstacle, WorldError, coverage_fraction,
                             load_world, raycast)


def test_default_arena_dimensions():
    grid = load_world(ArenaSpec())
    assert (grid.nx, grid.ny) == (500, 360)


def test_empty_world_interior_free_and_boundary_occupied():
    grid = load_world(ArenaSpec(width_m=10, height_m=8))
    assert not grid.occupied[1:-1, 1:-1].any()
    assert grid.occupied[0, :].all() and grid.occupied[-1, :].all()
    assert grid.occupied[:, 0].all() and grid.occupied[:, -1].all()


def test_boulder_disk_area_close_to_analytic():
    spec = ArenaSpec(obstacles=[Obstacle("boulder", (25.0, 18.0), radius=1.0)])
    grid = load_world(spec)
    cells = int(grid.occupied[1:-1, 1:-1].sum())
    analytic = math.pi * (1.0 / 0.1) ** 2
    assert abs(cells - analytic) / analytic < 0.05


def test_crater_has_occupied_rim_and_free_floor():
    spec = ArenaSpec(obstacles=[Obstacle("crater", (25.0, 18.0), radius=2.0)])
    grid = load_world(spec)
    cx, cy = grid.cell_of(25.0, 18.0)
    assert not grid.occupied[cx, cy]          # floor is free
    rim_x, _ = grid.cell_of(25.0 + 1.95, 18.0)
    assert grid.occupied[rim_x, cy]           # rim is occupied


def test_obstacle_out_of_bounds_rejected():
    spec = ArenaSpec(obstacles=[Obstacle("boulder", (0.5, 0.5), radius=1.0)])
    with pytest.raises(WorldError):
        load_world(spec)


def test_raycast_open_area_returns_none():
    grid = load_world(ArenaSpec())
    assert raycast(grid, (25.0, 18.0), 0.0, 8.0) is None


def test_raycast_hits_wall_within_resolution():
    spec = ArenaSpec(obstacles=[Obstacle("wall", (28.0, 18.0), extent=(0.4, 6.0))])
    grid = load_world(spec)
    d = raycast(grid, (24.8, 18.0), 0.0, 8.0)
    assert d == pytest.approx(3.0, abs=grid.resolution)


def test_raycast_reaches_arena_boundary():
    grid = load_world(ArenaSpec(width_m=10, height_m=8))
    d = raycast(grid, (2.0, 4.0), math.pi, 8.0)   # facing x=0 wall
    assert d == pytest.approx(2.0, abs=2 * grid.resolution)


def test_raycast_from_occupied_cell_rejected():
    spec = ArenaSpec(obstacles=[Obstacle("boulder", (5.0, 5.0), radius=0.5)])
    grid = load_world(spec)
    with pytest.raises(WorldError):
        raycast(grid, (5.0, 5.0), 0.0, 4.0)


def test_raycast_translation_symmetry():
    # translation by grid multiples preserves hits up to the march step
    base = 7.0
    hits = []
    for shift in (0.0, 3.0):
        spec = ArenaSpec(width_m=40, height_m=30,
                         obstacles=[Obstacle("boulder", (base + shift, 15.0), radius=0.8)])
        grid = load_world(spec)
        hits.append(raycast(grid, (2.0 + shift, 15.0), 0.0, 10.0))
    assert hits[0] == pytest.approx(hits[1], abs=0.5 * 0.1 + 1e-9)


def _merged_like(truth, known_value=1.0):
    g = OccupancyGrid(resolution=truth.resolution, origin=Pose2(0, 0, 0),
                      nx=truth.nx, ny=truth.ny)
    return g


def test_coverage_all_unknown_is_zero():
    truth = load_world(ArenaSpec(width_m=10, height_m=8))
    merged = _merged_like(truth)
    assert coverage_fraction(merged, truth) == 0.0


def test_coverage_full_observation_is_one():
    truth = load_world(ArenaSpec(width_m=10, height_m=8))
    merged = _merged_like(truth)
    merged.cells[truth.free_mask()] = -1.0
    assert coverage_fraction(merged, truth) == pytest.approx(1.0)


def test_coverage_half_marked_grid():
    truth = load_world(ArenaSpec(width_m=10, height_m=8))
    merged = _merged_like(truth)
    free = truth.free_mask()
    fx, fy = np.nonzero(free)
    half = len(fx) // 2
    merged.cells[fx[:half], fy[:half]] = -1.0
    expect = half / len(fx)
    assert coverage_fraction(merged, truth) == pytest.approx(expect, abs=1e-9)


def test_coverage_monotone_in_known_cells():
    truth = load_world(ArenaSpec(width_m=10, height_m=8))
    merged = _merged_like(truth)
    free = truth.free_mask()
    fx, fy = np.nonzero(free)
    prev = 0.0
    for upto in (100, 500, 2000, len(fx)):
        merged.cells[fx[:upto], fy[:upto]] = -1.0
        cov = coverage_fraction(merged, truth)
        assert cov >= prev
        prev = cov


def test_coverage_resolution_mismatch_rejected():
    truth = load_world(ArenaSpec(width_m=10, height_m=8))
    merged = OccupancyGrid(resolution=0.2, nx=50, ny=40)
    with pytest.raises(WorldError):
        coverage_fraction(merged, truth)


def test_coverage_epsilon_gates_known():
    truth = load_world(ArenaSpec(width_m=10, height_m=8))
    merged = _merged_like(truth)
    merged.cells[truth.free_mask()] = 0.05   # below the default 0.1 epsilon
    assert coverage_fraction(merged, truth) == 0.0
    merged.cells[truth.free_mask()] = 0.2
    assert coverage_fraction(merged, truth) == pytest.approx(1.0)
