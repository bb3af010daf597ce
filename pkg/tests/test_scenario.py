import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtvec.scenario import (
    DeskScenarioParams,
    EdgeSpec,
    EntityAssociation,
    InfoSpec,
    ScenarioError,
    SensingCapability,
    TrajectoryFormatError,
    VehicleSpec,
    build_desk_scenario,
    distance,
    generate_synthetic_trajectories,
    load_trajectories,
    nested_requirements,
    vehicles_in_range,
    write_trajectories,
)

from conftest import small_scenario, stationary

coords = st.floats(-1e4, 1e4, allow_nan=False)


def write(tmp_path, text, name="traj.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# ---------------------------------------------------------------- loading


def test_load_two_points_gives_speed(tmp_path):
    p = write(tmp_path, "vehicle_id,time_s,x_m,y_m\n1,0,0,0\n1,1,10,0\n")
    traj = load_trajectories(p)[1]
    assert traj.shape == (2, 3)
    speed = math.hypot(*(traj[1, 1:] - traj[0, 1:])) / (traj[1, 0] - traj[0, 0])
    assert speed == 10.0


def test_load_interleaved_vehicles(tmp_path):
    p = write(tmp_path, "vehicle_id,time_s,x_m,y_m\n1,0,0,0\n2,0,5,5\n1,1,1,0\n2,2,6,5\n1,2,2,0\n")
    trajs = load_trajectories(p)
    assert sorted(trajs) == [1, 2]
    assert trajs[1][:, 0].tolist() == [0, 1, 2]
    assert trajs[2][:, 0].tolist() == [0, 2]


def test_load_non_monotone_names_vehicle_and_line(tmp_path):
    p = write(tmp_path, "vehicle_id,time_s,x_m,y_m\n1,5,0,0\n1,3,0,0\n")
    with pytest.raises(TrajectoryFormatError) as err:
        load_trajectories(p)
    assert err.value.line == 3
    assert "vehicle 1" in str(err.value)


@pytest.mark.parametrize(
    "text",
    ["", "vehicle_id,time_s,x_m,y_m\n", "id,t,x,y\n1,0,0,0\n", "vehicle_id,time_s,x_m,y_m\n1,0,abc,0\n"],
)
def test_load_rejects_bad_files(tmp_path, text):
    with pytest.raises(TrajectoryFormatError):
        load_trajectories(write(tmp_path, text))


def test_parse_error_carries_line(tmp_path):
    p = write(tmp_path, "vehicle_id,time_s,x_m,y_m\n1,0,0,0\n1,1,2\n")
    with pytest.raises(TrajectoryFormatError) as err:
        load_trajectories(p)
    assert err.value.line == 3


def test_write_then_load_round_trip(tmp_path):
    trajs = generate_synthetic_trajectories(3, 3, duration=20)
    p = tmp_path / "t.csv"
    write_trajectories(p, trajs)
    back = load_trajectories(p)
    assert sorted(back) == sorted(trajs)
    for k in trajs:
        np.testing.assert_array_equal(back[k], trajs[k])


# -------------------------------------------------------------- synthesis


def test_synthetic_is_deterministic():
    a = generate_synthetic_trajectories(7, 4)
    b = generate_synthetic_trajectories(7, 4)
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_zero_speed_is_stationary():
    trajs = generate_synthetic_trajectories(1, 3, speed_range=(0.0, 0.0), duration=30)
    for traj in trajs.values():
        assert np.all(traj[:, 1:] == traj[0, 1:])


def test_synthetic_within_area():
    trajs = generate_synthetic_trajectories(11, 5, area=(1000.0, 1000.0), duration=300)
    for traj in trajs.values():
        assert traj[:, 1].min() >= 0 and traj[:, 1].max() <= 1000
        assert traj[:, 2].min() >= 0 and traj[:, 2].max() <= 1000
        assert traj[-1, 0] == 300


def test_synthetic_speed_respects_range():
    trajs = generate_synthetic_trajectories(2, 3, speed_range=(5.0, 15.0), duration=100)
    for traj in trajs.values():
        step = np.hypot(*np.diff(traj[:, 1:], axis=0).T)
        assert step.max() <= 15.0 + 1e-9


def test_synthetic_rejects_zero_vehicles():
    with pytest.raises(ValueError):
        generate_synthetic_trajectories(0, 0)


# --------------------------------------------------------------- geometry


def test_distance_hand_value():
    assert distance((0, 0), (3, 4)) == 5.0


@given(coords, coords)
def test_distance_identity(x, y):
    assert distance((x, y), (x, y)) == 0.0


@given(coords, coords, coords, coords)
def test_distance_symmetric_nonnegative(a, b, c, d):
    dab = distance((a, b), (c, d))
    assert dab == distance((c, d), (a, b))
    assert dab >= 0
    assert (dab == 0) == ((a, b) == (c, d))


def test_in_range_boundary_is_inclusive():
    sc = small_scenario(positions=((300.0, 400.0), (400.0, 400.0)))
    assert sc.distances[0, 0] == 500.0
    assert vehicles_in_range(sc, 0) == {0}
    assert math.isclose(sc.distances[0, 1], 565.685424949238, rel_tol=1e-12)


def test_in_range_empty_vehicle_set():
    sc = small_scenario(positions=(), caps=())
    assert vehicles_in_range(sc, 0) == set()


def test_in_range_rejects_bad_slot(tiny_scenario):
    with pytest.raises(IndexError):
        vehicles_in_range(tiny_scenario, tiny_scenario.slot_count)


@given(st.lists(st.tuples(coords, coords), min_size=1, max_size=6), st.floats(1, 5000), st.floats(0, 5000))
def test_in_range_monotone_in_radius(points, r, extra):
    sc = small_scenario(positions=points, caps=[() for _ in points], edge_range=r)
    wider = sc.with_edge(range=r + extra)
    assert vehicles_in_range(sc, 0) <= vehicles_in_range(wider, 0)


def test_interpolation_exact_at_samples_and_clamped():
    traj = np.array([[0.0, 0.0, 0.0], [2.0, 20.0, 0.0], [4.0, 20.0, 40.0]])
    veh = VehicleSpec(0, traj, (), 0.1)
    assert veh.position(2.0) == (20.0, 0.0)
    assert veh.position(1.0) == (10.0, 0.0)
    assert veh.position(3.0) == (20.0, 20.0)
    assert veh.position(-5.0) == (0.0, 0.0)
    assert veh.position(99.0) == (20.0, 40.0)


@given(st.lists(st.floats(0, 100), min_size=2, max_size=8, unique=True), st.data())
def test_interpolation_exact_at_any_sample(times, data):
    times = sorted(times)
    xs = data.draw(st.lists(coords, min_size=len(times), max_size=len(times)))
    traj = np.column_stack([times, xs, xs])
    veh = VehicleSpec(0, traj, (), 0.1)
    for t, x in zip(times, xs):
        assert veh.position(t) == (x, x)


def test_distance_at_beyond_horizon_uses_clamped_end():
    traj = np.array([[0.0, 0.0, 0.0], [3.0, 300.0, 0.0]])
    sc = small_scenario(positions=[(0, 0)], caps=[()], trajectories=[traj], slots=2)
    assert sc.distance_at(0, 1) == 100.0
    assert sc.distance_at(0, 10) == 300.0


# ---------------------------------------------------------------- invariants


def test_invalid_specs_rejected():
    with pytest.raises(ScenarioError):
        InfoSpec(0, 0, 0.0, 1.0)
    with pytest.raises(ScenarioError):
        InfoSpec(0, 0, 1.0, -1.0)
    with pytest.raises(ScenarioError):
        SensingCapability(0, 2.0, 1.0, 0.1)
    with pytest.raises(ScenarioError):
        SensingCapability(0, 0.0, 1.0, 0.1)
    with pytest.raises(ScenarioError):
        SensingCapability(0, 1.0, 1.0, -0.1)
    with pytest.raises(ScenarioError):
        VehicleSpec(0, np.array([[1.0, 0, 0], [1.0, 1, 1]]), (), 0.1)
    with pytest.raises(ScenarioError):
        VehicleSpec(0, stationary(0, 0), (), 0.0)
    cap = SensingCapability(0, 1.0, 1.0, 0.1)
    with pytest.raises(ScenarioError):
        VehicleSpec(0, stationary(0, 0), (cap, cap), 0.1)
    with pytest.raises(ScenarioError):
        EdgeSpec((0, 0), 0.0, 1.0)
    with pytest.raises(ScenarioError):
        EdgeSpec((0, 0), 1.0, 0.0)
    with pytest.raises(ScenarioError):
        EntityAssociation(0, frozenset())


def test_scenario_rejects_unknown_required_info():
    with pytest.raises(ScenarioError):
        small_scenario(entities=((0, (7,)),))


def test_scenario_rejects_duplicate_info_ids_and_bad_slots():
    with pytest.raises(ScenarioError):
        small_scenario(infos=((0, 0, 1.0, 1.0), (0, 1, 1.0, 1.0), (2, 2, 1.0, 1.0)))
    with pytest.raises(ScenarioError):
        small_scenario(slots=0)


def test_trajectory_is_read_only(tiny_scenario):
    with pytest.raises(ValueError):
        tiny_scenario.vehicles[0].trajectory[0, 0] = 5.0


# ------------------------------------------------------------------- desk


def test_desk_scenario_shape_and_determinism():
    a = build_desk_scenario(DeskScenarioParams(seed=4))
    b = build_desk_scenario(DeskScenarioParams(seed=4))
    assert len(a.vehicles) == 5 and len(a.infos) == 10 and len(a.entities) == 6
    assert a.slot_count == 60 and a.slot_duration == 1.0
    assert a.edge.range == 500.0 and a.edge.bandwidth == 2e6
    np.testing.assert_array_equal(a.distances, b.distances)
    assert [e.required_info for e in a.entities] == [e.required_info for e in b.entities]
    assert all(len(e.required_info) == 5 for e in a.entities)


def test_desk_scenario_from_csv(tmp_path):
    trajs = generate_synthetic_trajectories(9, 6, duration=70)
    p = tmp_path / "t.csv"
    write_trajectories(p, trajs)
    sc = build_desk_scenario(DeskScenarioParams(trajectory_csv=str(p)))
    assert [v.id for v in sc.vehicles] == [0, 1, 2, 3, 4]
    with pytest.raises(ScenarioError):
        build_desk_scenario(DeskScenarioParams(trajectory_csv=str(p), n_vehicles=7))


def test_nested_requirements_grow_by_inclusion():
    sets = {k: nested_requirements(10, 6, k, seed=2) for k in range(3, 8)}
    for k in range(3, 7):
        for small, big in zip(sets[k], sets[k + 1]):
            assert small.required_info < big.required_info
    with pytest.raises(ScenarioError):
        nested_requirements(10, 6, 11, seed=0)
