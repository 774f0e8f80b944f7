import numpy as np
import pytest

from shieldsim.core.errors import FloorplanError
from shieldsim.core.pdn import (
    CurrentSource, Floorplan, PdnParams, PdnState, attenuation, attenuation_matrix,
    drop_signal, manhattan, ring_locations, source_current, step, voltage_at,
)

PARAMS = PdnParams(v_nom=1.0, r_eff=0.1, l_eff=1e-8, lam=0.5, tick_period=1e-7)


@pytest.mark.parametrize("d, lam, expected", [(0, 0.5, 1.0), (4, 0.5, 1 / 3), (10, 0.0, 1.0)])
def test_attenuation(d, lam, expected):
    assert attenuation(d, lam) == pytest.approx(expected, abs=1e-12)


def test_attenuation_rejects_negative_distance():
    with pytest.raises(ValueError):
        attenuation(-1, 0.5)


@pytest.mark.parametrize("p, v_nom, amps", [(0.0, 1.0, 0.0), (0.1, 1.0, 0.1), (0.05, 0.5, 0.1)])
def test_source_current(p, v_nom, amps):
    assert source_current(p, v_nom) == pytest.approx(amps, abs=1e-12)


def test_source_current_needs_positive_supply():
    with pytest.raises(ValueError):
        source_current(0.1, 0.0)


def test_voltage_without_sources_is_nominal():
    assert voltage_at((3, 3), [], PARAMS) == 1.0


def test_steady_source_at_the_sensor():
    src = CurrentSource((5, 5), 0.1, prev_current=0.1)
    assert voltage_at((5, 5), [src], PARAMS) == pytest.approx(0.99, abs=1e-12)


def test_steady_source_four_cells_away():
    src = CurrentSource((5, 5), 0.1, prev_current=0.1)
    assert voltage_at((7, 7), [src], PARAMS) == pytest.approx(1.0 - 0.01 / 3, abs=1e-12)


def test_two_sources_in_one_cell_double_the_drop():
    one = CurrentSource((1, 1), 0.3, prev_current=0.3)
    drop_one = 1.0 - voltage_at((2, 1), [one], PARAMS)
    drop_two = 1.0 - voltage_at((2, 1), [one, one], PARAMS)
    assert drop_two == pytest.approx(2 * drop_one, abs=1e-12)


def test_voltage_clamps_at_zero():
    src = CurrentSource((0, 0), 1000.0, prev_current=1000.0)
    assert voltage_at((0, 0), [src], PARAMS) == 0.0


def test_voltage_rejects_off_floorplan_source():
    fp = Floorplan(4, 4)
    with pytest.raises(FloorplanError):
        voltage_at((0, 0), [CurrentSource((9, 9), 0.1)], PARAMS, fp)


def test_step_inductive_drop_only_on_the_edge():
    state = PdnState(PARAMS, (CurrentSource((0, 0), 0.0),), tick=0)
    state = step(state, 1, [0.1])
    edge = 1.0 - voltage_at((0, 0), state.sources, PARAMS)
    state = step(state, 2, [0.1])
    steady = 1.0 - voltage_at((0, 0), state.sources, PARAMS)
    assert steady == pytest.approx(0.01, abs=1e-12)
    # l_eff * dI / dt = 1e-8 * 0.1 / 1e-7
    assert edge == pytest.approx(0.01 + 0.01, abs=1e-12)


def test_step_must_advance_by_one():
    state = PdnState(PARAMS, (CurrentSource((0, 0), 0.0),), tick=3)
    with pytest.raises(ValueError):
        step(state, 5, [0.0])


def test_drop_signal_matches_point_model():
    power = np.array([0.0, 0.0, 0.1, 0.1, 0.4, 0.0])
    signal = drop_signal(power, PARAMS)
    prev = 0.0
    for tick, p in enumerate(power):
        src = CurrentSource((0, 0), float(p), prev_current=prev)
        assert 1.0 - voltage_at((0, 0), [src], PARAMS) == pytest.approx(signal[tick], abs=1e-12)
        prev = source_current(float(p), PARAMS.v_nom)


def test_attenuation_matrix_shape_and_values():
    a = attenuation_matrix([(0, 0), (2, 2)], [(0, 0), (0, 4), (1, 0)], 0.5)
    assert a.shape == (2, 3)
    assert a[0, 0] == 1.0
    assert a[1, 1] == pytest.approx(1 / 3)


def test_floorplan_resolves_labels_and_pairs():
    fp = Floorplan(8, 8, {"rsa": (4, 4)})
    assert fp.resolve("rsa") == (4, 4)
    assert fp.resolve([1, 2]) == (1, 2)
    with pytest.raises(FloorplanError, match="victim.location"):
        fp.resolve([8, 0], "victim.location")
    with pytest.raises(FloorplanError):
        fp.resolve("nowhere")


def test_floorplan_rejects_labels_off_the_grid():
    with pytest.raises(FloorplanError, match="floorplan.locations.rsa"):
        Floorplan(4, 4, {"rsa": (4, 0)})


@pytest.mark.parametrize("radius, count", [(1, 4), (2, 8), (2, 32), (12, 16)])
def test_ring_locations_sit_on_the_radius(radius, count):
    cells = ring_locations((16, 16), radius, count)
    assert len(cells) == count
    assert all(manhattan(c, (16, 16)) == radius for c in cells)


def test_ring_radius_zero_is_the_anchor():
    assert ring_locations((3, 4), 0, 4) == [(3, 4)] * 4
