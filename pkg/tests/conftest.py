import numpy as np
import pytest

import celldim

# pass/fail lines recorded by the acceptance tests; replayed after the run
# so they stay visible even though pytest captures stdout
acceptance_lines = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def urban_pathloss():
    # K ~ 8667 per km, beta = 3.38
    return celldim.params_from_cost_hata(celldim.CostHataZone(133.1, 33.8))


@pytest.fixture
def plain_model(urban_pathloss):
    """Omni, no shadowing, equal powers: selection reduces to nearest station."""
    return celldim.PropagationModel(
        pathloss=urban_pathloss,
        shadowing=celldim.ShadowingConfig(mode="off"),
        antenna=celldim.AntennaConfig(mode="omni"),
        link=celldim.LinkParams())


def small_network(model, seed=42, window_km=6.0, guard_km=2.0,
                  resolution_m=100.0, intensity=1.0):
    window = celldim.Window(window_km, guard_km=guard_km)
    grid = celldim.EvalGrid(window, resolution_m)
    deployment = celldim.sample_ppp(intensity, window, seed=seed)
    prepared = celldim.prepare_network(deployment, model, grid)
    return prepared


def three_station_network(model, window_km=2.0, resolution_m=100.0):
    window = celldim.Window(window_km, guard_km=0.0)
    positions = [[-0.5, -0.3], [0.6, 0.1], [-0.1, 0.55]]
    deployment = celldim.place_deterministic(positions, window)
    grid = celldim.EvalGrid(window, resolution_m)
    return celldim.prepare_network(deployment, model, grid)
