import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from confnet.channel import ChannelBlock, ChannelParams, ChannelStream
from confnet.control_infinite import (
    Alg1Params,
    ScheduleDecision,
    backlog_matrix,
    flow_control_1,
    leakage_vector,
    schedule_1,
    step_1,
)
from confnet.queues import NetState1
from confnet.topology import enumerate_active_sets, link_tables, validate_topology
from oracles import brute_schedule, grid_argmax, leakage

PARAMS = Alg1Params(alpha=(0.435, 0.455))


def random_state1(rng, tables, scale=50.0):
    S, N = len(tables.net.comm_src), tables.n_nodes
    st_ = NetState1(rng.uniform(0, scale, S), rng.uniform(0, scale, (S, N)), rng.uniform(0, scale / 5, (S, N)))
    st_.Qr *= tables.net.intermediate
    st_.Z *= tables.net.intermediate
    return st_


def as_dicts(topology, B, Z):
    b = {s: {n: B[c, topology.node_index(n)] for n in topology.nodes} for c, s in enumerate(topology.sources)}
    z = {s: {n: Z[c, topology.node_index(n)] for n in topology.nodes} for c, s in enumerate(topology.sources)}
    return b, z


def test_flow_control_empty_queues_hits_cap():
    assert flow_control_1(0.0, 0.0, PARAMS, 0) == PARAMS.A_max


def test_flow_control_example():
    p = Alg1Params(alpha=(0.5,), H=100.0, A_max=10.0)
    a = flow_control_1(200.0, 0.0, p, 0)
    assert a == pytest.approx(0.5)
    g = grid_argmax(lambda A: 100 * np.log(np.maximum(0.5 * A, 1e-300)) - 200 * A, 0, 10, 1e-4)
    assert abs(g - a) <= 1e-3


def test_default_constants():
    assert PARAMS.H == 100.0 and PARAMS.kappa == 3.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 500), st.floats(0, 500), st.floats(0.05, 0.95))
def test_flow_control_matches_grid(Q, Z, alpha):
    p = Alg1Params(alpha=(alpha,), H=100.0, A_max=10.0)
    a = flow_control_1(Q, Z, p, 0)

    def objective(A):
        return 100 * np.log(np.maximum(alpha * A, 1e-300)) - Q * A + Z * (1 - alpha) * A

    g = grid_argmax(objective, 0, 10, 1e-4)
    assert abs(a - g) <= 1e-3 or objective(np.array([a]))[0] >= objective(np.array([g]))[0] - 1e-9


def test_invalid_alpha():
    with pytest.raises(ValueError):
        Alg1Params(alpha=(1.0,))


def block(rates, t=0):
    rates = np.asarray(rates, dtype=float)
    return ChannelBlock(t, np.full(len(rates), np.nan), rates)


def test_all_queues_zero_is_idle(shared_tables):
    d = schedule_1(NetState1.zeros(2, 7), block(np.ones(8)), shared_tables)
    assert d.idle and d.objective == 0.0 and not d.mu.any() and not d.f.any()


def chain_tables():
    t = validate_topology({
        "nodes": [{"id": "s", "role": "source"}, {"id": "r", "role": "relay"}, {"id": "d", "role": "destination"}],
        "links": [("s", "r"), ("r", "d")],
        "pairing": {"s": "d"},
    })
    return t, link_tables(t, enumerate_active_sets(t))


def test_single_link_objective():
    _, tab = chain_tables()
    s = NetState1.zeros(1, 3)
    s.Q[0] = 10.0
    d = schedule_1(s, block([2.0, 0.0]), tab)
    assert d.links == (0,) and d.objective == pytest.approx(20.0)


def test_schedule_matches_brute_force(shared, shared_tables, rng):
    for _ in range(300):
        s = random_state1(rng, shared_tables)
        R = rng.exponential(2.0, 8)
        d = schedule_1(s, block(R), shared_tables)
        b, z = as_dicts(shared, backlog_matrix(s, shared_tables), s.Z)
        best = brute_schedule(shared, b, z, -1.0, dict(zip(shared.links, R)))
        assert d.objective == pytest.approx(best[0], rel=1e-9, abs=1e-9)
        if best[1] is None:
            assert d.idle
        else:
            assert (d.commodity, frozenset(shared.links[l] for l in d.links)) == (best[1], best[2])


def test_diamond_leakage_example(diamond):
    R = np.array([1.5, 2.0, 3.0, 0.7])  # (s,r1), (s,r2), (r1,d), (r2,d)
    d = ScheduleDecision(0, 0, 0b11, (0, 3), np.zeros(4), np.zeros(4), 0.0)
    f = leakage_vector(d, block(R), diamond)
    assert f[diamond.node_index("r1")] == 1.5 and f[diamond.node_index("r2")] == 0.0


def test_shared_leakage_example(shared):
    R = np.arange(1.0, 9.0)
    d = ScheduleDecision(0, 0, 1, (0,), np.zeros(8), np.zeros(7), 0.0)
    f = leakage_vector(d, block(R), shared)
    assert f[shared.node_index("1")] == 1.0 and f[shared.node_index("2")] == 2.0
    assert f.sum() == 3.0


def test_idle_leaks_nothing(shared):
    d = ScheduleDecision(-1, -1, 0, (), np.zeros(8), np.zeros(7), 0.0)
    assert not leakage_vector(d, block(np.ones(8)), shared).any()


def test_kernel_leakage_matches_rule(shared, shared_tables, rng):
    for _ in range(200):
        s = random_state1(rng, shared_tables)
        R = rng.exponential(2.0, 8)
        d = schedule_1(s, block(R), shared_tables)
        assert np.allclose(d.f, leakage_vector(d, block(R), shared), rtol=0, atol=1e-12)
        ref = leakage(shared, [shared.links[l] for l in d.links], dict(zip(shared.links, R)))
        assert np.allclose(d.f, [ref[n] for n in shared.nodes])


def test_step_is_deterministic(shared, shared_tables):
    p = ChannelParams(kind="constant", rates=tuple(float(x) for x in range(1, 9)))

    def go():
        s = NetState1.zeros(2, 7)
        st_ = ChannelStream(shared, p, 0)
        out = []
        for _ in range(3):
            s, rec = step_1(s, st_.next_block(), shared_tables, PARAMS)
            out.append((rec.commodity, rec.set_id, rec.mu.tobytes(), rec.f.tobytes(), rec.admitted.tobytes()))
        return out, s

    a, sa = go()
    b, sb = go()
    assert a == b and np.array_equal(sa.Q, sb.Q)


def test_idle_step_only_admits(shared, shared_tables):
    s = NetState1.zeros(2, 7)
    new, rec = step_1(s, block(np.zeros(8)), shared_tables, PARAMS)
    assert rec.commodity == -1
    assert np.array_equal(new.Q, rec.admitted) and not new.Qr.any() and not new.Z.any()


def test_step_keeps_queues_nonnegative(shared, shared_channel, shared_tables):
    s = NetState1.zeros(2, 7)
    stream = ChannelStream(shared, shared_channel, 4)
    for _ in range(300):
        s, _ = step_1(s, stream.next_block(), shared_tables, PARAMS)
        assert s.Q.min() >= 0 and s.Qr.min() >= 0 and s.Z.min() >= 0
