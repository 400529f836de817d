import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cavpair.linear import linearize, simulate_linear
from cavpair.models import HEAD_CAV, HUMAN, TAIL_CAV
from cavpair.simulation import (
    FleetScenario, IntegrationError, LeadProfile, PacketScenario, allocate_cavs,
    canonical_lead, evaluate_lead, pair_cavs, reverse_guard, simulate_fleet, simulate_packet,
)

ACC = dict(cav_tail=replace(TAIL_CAV, beta_cross=0.0), cav_head=replace(HEAD_CAV, beta_cross=0.0))


@pytest.mark.parametrize("segments, t, expected", [
    ((), 5, 20), (((5, -2),), 5, 10), (((5, -2), (5, 2)), 10, 20), (((5, -2),), 50, 10)])
def test_evaluate_lead(segments, t, expected):
    assert evaluate_lead(LeadProfile(segments, 20.0), t) == pytest.approx(expected)


def test_lead_validation():
    with pytest.raises(ValueError):
        LeadProfile(((0, 1),))
    with pytest.raises(ValueError):
        LeadProfile(((20, -2),), 20.0)
    with pytest.raises(ValueError):
        LeadProfile((), 40.0)
    tb, vb = canonical_lead().breakpoints
    assert vb[0] == vb[-1] == 20.0


@pytest.mark.parametrize("roles, pairs, singles", [
    (["CAV", "HV", "HV", "CAV"], ((0, 3, 2),), ()),
    (["CAV", "CAV"], (), (0, 1)),
    (["CAV"] + ["HV"] * 8 + ["CAV"], (), (0, 9)),
    (["CAV", "CAV", "HV", "CAV"], ((1, 3, 1),), (0,)),
    (["HV", "HV"], (), ()),
])
def test_pair_cavs_examples(roles, pairs, singles):
    pa = pair_cavs(roles, 7)
    assert pa.pairs == pairs and pa.singles == singles


def test_pair_cavs_rejects_empty():
    with pytest.raises(ValueError):
        pair_cavs([])


@given(st.lists(st.sampled_from(["CAV", "HV"]), min_size=1, max_size=60), st.integers(1, 9))
def test_pairing_invariants(roles, gap):
    pa = pair_cavs(roles, gap)
    used = [k for p in pa.pairs for k in p[:2]] + list(pa.singles)
    assert sorted(used) == [k for k, r in enumerate(roles) if r == "CAV"]
    for head, tail, n in pa.pairs:
        assert head < tail and n == tail - head - 1 and 1 <= n <= gap
        assert all(r == "HV" for r in roles[head + 1:tail])


@pytest.mark.parametrize("u, v, expected", [(-7, 0, 0), (-7, 1, -7), (-7, 0.5, -5)])
def test_reverse_guard(u, v, expected):
    assert reverse_guard(u, v, 10.0) == expected


def test_allocate_cavs():
    assert allocate_cavs(100, 0.0, 3) == frozenset()
    assert allocate_cavs(100, 1.0, 3) == frozenset(range(100))
    assert allocate_cavs(100, 0.15, 7) == allocate_cavs(100, 0.15, 7)
    assert len(allocate_cavs(100, 0.15, 7)) == 15
    assert allocate_cavs(100, 0.15, 7) != allocate_cavs(100, 0.15, 8)
    with pytest.raises(ValueError):
        allocate_cavs(100, 1.5, 0)


def test_scenario_validation():
    with pytest.raises(ValueError):
        PacketScenario(dt=0.0)
    with pytest.raises(ValueError):
        PacketScenario(horizon=0.5)
    with pytest.raises(ValueError):
        PacketScenario(n_hv=-1)
    with pytest.raises(ValueError):
        FleetScenario(cav_indices={100})
    with pytest.raises(ValueError):
        FleetScenario(pairing_max_gap=0)


def test_equilibrium_is_fixed_point():
    tr = simulate_packet(PacketScenario(n_hv=5, lead=LeadProfile(), horizon=60))
    assert np.abs(tr.v - 20.0).max() <= 1e-9
    assert np.abs(tr.h - tr.h[0]).max() <= 1e-9
    assert not tr.collision


def test_step_size_convergence():
    sc = PacketScenario(n_hv=5, horizon=60)
    a = simulate_packet(sc)
    b = simulate_packet(replace(sc, dt=sc.dt / 2))
    assert np.abs(b.v[::2] - a.v).max() < 1e-3


def test_speeds_stay_non_negative():
    hard = LeadProfile(((4, -5.0), (10, 0.0), (4, 5.0)))
    tr = simulate_packet(PacketScenario(n_hv=5, lead=hard, horizon=60, **ACC))
    assert tr.v.min() >= -1e-9
    assert tr.v.min() < 0.5


def test_delays_are_respected():
    t0 = 1.0
    lead = LeadProfile(((t0, 0.0), (2.0, -1.0)))
    sc = PacketScenario(n_hv=3, lead=lead, horizon=10)
    tr = simulate_packet(sc)
    delays = [sc.cav_tail.sigma] + [sc.hv.tau] * 3 + [sc.cav_head.sigma]
    for i, d in enumerate(delays):
        quiet = tr.times < t0 + d - sc.dt
        assert np.all(tr.v[quiet, i] == 20.0)
        assert np.any(tr.v[:, i] != 20.0)


def test_matches_linear_prediction_to_second_order():
    sc = PacketScenario(n_hv=5, horizon=60)
    lin = linearize(sc)
    devs = []
    for eps in (0.1, 0.05):
        lead = LeadProfile(((2, -eps / 2), (2, 0), (2, eps / 2)))
        tr = simulate_packet(replace(sc, lead=lead))
        _, _, vl = simulate_linear(lin, lambda t: evaluate_lead(lead, t) - 20.0, sc.dt, sc.horizon)
        devs.append(np.abs(tr.v - 20.0 - vl).max())
    assert devs[0] / devs[1] >= 4 * 0.95


def test_paired_packet_smooths_the_dip():
    paired = simulate_packet(PacketScenario(n_hv=5))
    acc = simulate_packet(PacketScenario(n_hv=5, **ACC))
    assert paired.v[:, 0].min() > paired.v_lead.min()
    assert acc.v[:, 0].min() == pytest.approx(acc.v_lead.min(), abs=0.1)


def test_determinism():
    sc = FleetScenario(cav_indices=allocate_cavs(100, 0.2, 4), horizon=120)
    a, b = simulate_fleet(sc), simulate_fleet(sc)
    for x, y in ((a.h, b.h), (a.v, b.v), (a.u, b.u)):
        assert np.array_equal(x, y)


def test_collision_is_reported_not_fatal():
    sleepy = replace(HUMAN, alpha_h=0.02, beta_h=0.02)
    stop = LeadProfile(((3, -20 / 3),))
    tr = simulate_packet(PacketScenario(n_hv=2, hv=sleepy, lead=stop, horizon=40))
    assert tr.collision and tr.collided_vehicles
    assert tr.times[-1] == pytest.approx(40)


def test_non_finite_state_raises():
    with pytest.raises(IntegrationError) as info:
        simulate_packet(PacketScenario(n_hv=1, hv=replace(HUMAN, alpha_h=float("inf"))))
    assert info.value.time >= 0


def test_fleet_roles_and_pairing():
    cavs = {99, 95, 90, 89}
    tr = simulate_fleet(FleetScenario(cav_indices=cavs, horizon=30))
    assert tr.pairing.pairs == ((99, 95, 3),)
    assert tr.pairing.singles == (90, 89)
    assert tr.roles[99] == "CAV-head" and tr.roles[95] == "CAV-tail"
    assert tr.roles[90] == tr.roles[89] == "AV" and tr.roles[-1] == "lead"
    off = simulate_fleet(FleetScenario(cav_indices=cavs, horizon=30, connectivity_enabled=False))
    assert off.pairing.pairs == () and set(off.pairing.singles) == cavs


def _gammas(tr):
    ref = np.abs(tr.v_lead - tr.v_lead[0]).max()
    return np.abs(tr.v - tr.v[0]).max(axis=0) / ref


def test_fleet_trends():
    hv_only = _gammas(simulate_fleet(FleetScenario()))
    assert np.mean(hv_only > 2) > 0.5
    acc_only = _gammas(simulate_fleet(FleetScenario(cav_indices=frozenset(range(100)))))
    assert acc_only[0] < 1 and acc_only[0] < acc_only[50] < acc_only[99]
    cavs = allocate_cavs(100, 0.1, 1)
    on = simulate_fleet(FleetScenario(cav_indices=cavs))
    off = simulate_fleet(FleetScenario(cav_indices=cavs, connectivity_enabled=False))
    assert 20 - on.v[:, 0].min() < 20 - off.v[:, 0].min()


def test_trajectory_export(tmp_path):
    tr = simulate_packet(PacketScenario(n_hv=5, horizon=5))
    path = tmp_path / "traj.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    assert header[0] == "t" and header[-1] == "v_lead"
    assert header[1:4] == ["h_0", "v_0", "u_0"]
    assert len(header) == 2 + 3 * 7
    assert len(lines) == tr.times.size + 1
    tr.write_metadata(tmp_path / "traj.meta.json")
    meta = json.loads((tmp_path / "traj.meta.json").read_text())
    assert meta["roles"][0] == "CAV-tail" and meta["roles"][-1] == "lead"
