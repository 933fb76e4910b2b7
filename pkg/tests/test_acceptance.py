"""Acceptance criteria, one test each.

Every test records a single PASS/FAIL line, printed at the end of the
pytest session (and by ``python tests/test_acceptance.py``).
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from confnet.channel import ChannelBlock, ChannelStream
from confnet.config import bundled_config
from confnet.control_finite import Alg2Params, flow_control_2, schedule_2
from confnet.control_finite import backlog_matrix as backlog_2
from confnet.control_infinite import Alg1Params, flow_control_1, schedule_1
from confnet.control_infinite import backlog_matrix as backlog_1
from confnet.engine import ALG2, find_optimal_alpha, run, sweep
from confnet.queues import NetState1, NetState2
from confnet.secrecy import estimate_confidential_rate, xor_combine, xor_demo, xor_split
from confnet.topology import diamond_single, validate_topology
from oracles import brute_schedule, schedule_trace

RESULTS: dict[int, str] = {}

ALPHA = (0.435, 0.455)
ALPHA_GRID = [round(0.1 + 0.05 * k, 10) for k in range(17)]  # 0.1 .. 0.9
FINITE_HORIZON = 4_000_000


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {detail}"
    print(RESULTS[n])


def alg2_config(gamma=0.01, msg_bits=500.0, horizon=FINITE_HORIZON, **kw):
    p = Alg2Params(gamma=(gamma, gamma), msg_bits=(msg_bits, msg_bits), **kw)
    return replace(bundled_config(), algorithm=ALG2, params=p, horizon=horizon)


@pytest.fixture(scope="module")
def default_run():
    return run(bundled_config())[0]


@pytest.fixture(scope="module")
def reference(default_run):
    """Secrecy-constrained throughput alpha * x of the infinite-block controller."""
    return default_run.confidential


@pytest.fixture(scope="module")
def alpha_search():
    started = time.perf_counter()
    res = find_optimal_alpha(bundled_config(), ALPHA_GRID)
    return res, time.perf_counter() - started


def test_1_scheduler_matches_exhaustive_search(shared, shared_tables, shared_channel):
    rng = np.random.default_rng(2024)
    _, rates = ChannelStream(shared, shared_channel, 7).draw(10_000)
    p2 = Alg2Params(gamma=(0.01, 0.01), msg_bits=(500.0, 500.0))
    relays = shared_tables.net.intermediate
    mismatches = {1: 0, 2: 0}
    spent = 0.0
    for R in rates:
        links = dict(zip(shared.links, R))
        block = ChannelBlock(0, np.full(len(R), np.nan), R)
        s1 = NetState1(rng.uniform(0, 100, 2), rng.uniform(0, 100, (2, 7)) * relays,
                       rng.uniform(0, 20, (2, 7)) * relays)
        s2 = NetState2.zeros(2, 7)
        s2.Qp[:], s2.P[:] = rng.uniform(0, 100, 2), rng.uniform(0, 500, 2)
        s2.rate[:] = rng.uniform(0, 1, 2)
        s2.Qr[:], s2.Zc[:] = rng.uniform(0, 100, (2, 7)) * relays, rng.uniform(0, 20, (2, 7)) * relays
        for alg, state, B, Z, sign in (
            (1, s1, backlog_1(s1, shared_tables), s1.Z, -1.0),
            (2, s2, backlog_2(s2, shared_tables, p2), s2.Zc, 1.0),
        ):
            t0 = time.perf_counter()
            d = schedule_1(state, block, shared_tables) if alg == 1 else schedule_2(state, block, shared_tables, p2)
            spent += time.perf_counter() - t0
            b = {s: dict(zip(shared.nodes, B[c])) for c, s in enumerate(shared.sources)}
            z = {s: dict(zip(shared.nodes, Z[c])) for c, s in enumerate(shared.sources)}
            val, c, act = brute_schedule(shared, b, z, sign, links)
            mine = (None, frozenset()) if d.idle else (d.commodity, frozenset(shared.links[l] for l in d.links))
            if mine != (c, act) or abs(d.objective - val) > 1e-9 * max(1.0, abs(val)):
                mismatches[alg] += 1
    ok = mismatches == {1: 0, 2: 0} and spent < 30
    record(1, ok, f"10^4 snapshots, mismatches alg1={mismatches[1]} alg2={mismatches[2]}, scheduler time {spent:.1f}s")
    assert ok


def test_2_flow_control_closed_forms():
    rng = np.random.default_rng(99)
    A_max = 100.0
    grid = np.arange(0.0, A_max + 5e-5, 1e-4)
    logs = np.log(np.maximum(grid, 1e-300))
    worst = 0.0
    for _ in range(1000):
        alpha, Q, Z, H = rng.uniform(0.05, 0.95), rng.uniform(0, 2000), rng.uniform(0, 500), rng.uniform(10, 1000)
        p1 = Alg1Params(alpha=(alpha,), H=H, A_max=A_max)
        a1 = flow_control_1(Q, Z, p1, 0)
        g1 = grid[np.argmax(H * (np.log(alpha) + logs) - (Q - (1 - alpha) * Z) * grid)]
        p2 = Alg2Params(gamma=(0.01,), msg_bits=(500.0,), H=H, A_max=A_max)
        a2 = flow_control_2(Q, p2)
        g2 = grid[np.argmax(H * logs - Q * grid)]
        worst = max(worst, abs(a1 - g1), abs(a2 - g2))
    record(2, worst <= 1e-3, f"10^3 states per algorithm, worst |closed form - grid| = {worst:.2e}")
    assert worst <= 1e-3


def test_3_secrecy_constraint(default_run):
    x = default_run.admitted
    leak = default_run.secrecy.leakage
    relays = default_run.relays
    slack = (1 - np.array(ALPHA))[:, None] * x[:, None] + 0.05 - leak
    worst = slack[:, relays].min()
    ok = worst >= 0
    parts = ", ".join(f"{s}@{n}={leak[k, j]:.3f}" for k, s in enumerate(default_run.sources)
                      for j, n in enumerate(default_run.nodes) if relays[j])
    record(3, ok, f"leakage {parts}; bounds {(1 - np.array(ALPHA)) * x + 0.05}; min slack {worst:.3f}")
    assert ok


def test_4_published_operating_point(default_run, alpha_search):
    x = default_run.admitted
    (alphas, _, _), elapsed = alpha_search
    ok_x = abs(x[0] - 1.52) <= 0.10 and abs(x[1] - 1.34) <= 0.10
    ok_a = 0.385 <= alphas[0] <= 0.485 and 0.405 <= alphas[1] <= 0.505
    ok_t = elapsed + default_run.wall_clock < 300
    ok = ok_x and ok_a and ok_t
    record(4, ok, f"x = ({x[0]:.3f}, {x[1]:.3f}) vs (1.52, 1.34) +-0.10; alpha* = ({alphas[0]:.2f}, {alphas[1]:.2f}); "
                  f"{elapsed + default_run.wall_clock:.0f}s")
    assert ok


def test_5_alpha_sweep_shape():
    grid = sorted(set(ALPHA_GRID) | {ALPHA[0]})
    res = sweep(bundled_config(), "alpha1", grid)
    a = np.array(res.values)
    thr = res.column("confidential[s1]")
    u = res.column("total_utility")
    low = a <= ALPHA[0] + 1e-12
    monotone = bool(np.all(np.diff(thr[low]) > 0))
    peak = int(np.argmax(u))
    unimodal = bool(np.all(np.diff(u[:peak + 1]) > 0) and np.all(np.diff(u[peak:]) < 0))
    interior = 0 < peak < len(u) - 1
    near = abs(a[peak] - ALPHA[0]) <= 0.05 + 1e-12
    ok = monotone and unimodal and interior and near
    record(5, ok, f"s1 throughput monotone on [0.1, 0.435]: {monotone}; utility unimodal: {unimodal}; "
                  f"peak at alpha1 = {a[peak]:.3f} (target 0.435 +- 0.05)")
    assert ok


def test_6_message_size_shape(reference):
    sizes = (50.0, 500.0, 5000.0)
    xp = np.array([run(alg2_config(msg_bits=n))[0].confidential for n in sizes])
    ratio = xp / reference
    band = bool(np.all((ratio[0] >= 0.35) & (ratio[0] <= 0.65)))
    increasing = bool(np.all(np.diff(xp, axis=0) > 0))
    close = bool(np.all(np.abs(ratio[2] - 1) <= 0.10))
    ok = band and increasing and close
    rows = "; ".join(f"N={int(n)}: {r[0]:.2f}, {r[1]:.2f}" for n, r in zip(sizes, ratio))
    record(6, ok, f"x^p / alpha*x* per source: {rows} (35-65% at 50: {band}, increasing: {increasing}, "
                  f"within 10% at 5000: {close})")
    assert ok


def test_7_gamma_sweep_shape(reference):
    gammas = [0.01, 0.05, 0.1, 0.15, 0.2]
    res = sweep(alg2_config(horizon=2_000_000), "gamma", gammas)
    xp = np.column_stack([res.column("confidential[s1]"), res.column("confidential[s2]")])
    monotone = bool(np.all(np.diff(xp, axis=0) > 0))
    crossing = []
    for s in range(2):
        above = np.flatnonzero(xp[:, s] > reference[s])
        crossing.append(gammas[above[0]] if len(above) else None)
    cross_ok = all(c is not None and abs(c - 0.15) <= 0.05 + 1e-12 for c in crossing)
    ok = monotone and cross_ok
    rows = "; ".join(f"gamma={g}: {a:.3f}, {b:.3f}" for g, (a, b) in zip(gammas, xp))
    record(7, ok, f"{rows}; alpha*x* = ({reference[0]:.3f}, {reference[1]:.3f}); first crossing {crossing}; "
                  f"monotone {monotone}")
    assert ok


def test_8_utility_backlog_tradeoff():
    Hs = (10.0, 100.0, 1000.0)
    res = sweep(bundled_config(), "H", Hs, seeds=5)
    u = res.column("total_utility")
    backlog = np.array([np.mean([m.total_backlog for m in runs]) for runs in res.runs])
    ok_u = bool(np.all(np.diff(u) >= 0))
    growth = backlog[-1] / backlog[0]
    ok = ok_u and growth >= 5
    record(8, ok, f"utility {np.round(u, 4).tolist()} (nondecreasing: {ok_u}); "
                  f"backlog {np.round(backlog, 1).tolist()} (growth x{growth:.1f})")
    assert ok


def test_9_exact_confidential_rates():
    diamond = diamond_single()
    alternating = [[("s", "r1"), ("r2", "d")], [("s", "r2"), ("r1", "d")]] * 5000
    x = estimate_confidential_rate(schedule_trace(diamond, alternating), 0)
    chain = validate_topology({
        "nodes": [{"id": "s", "role": "source"}, {"id": "r", "role": "relay"}, {"id": "d", "role": "destination"}],
        "links": [("s", "r"), ("r", "d")],
        "pairing": {"s": "d"},
    })
    y = estimate_confidential_rate(schedule_trace(chain, [[("s", "r")], [("r", "d")]] * 5000), 0)
    ok = abs(x - 0.5) <= 1e-9 and y == 0.0
    record(9, ok, f"alternating diamond {x!r}, single relay cut {y!r}")
    assert ok


def test_10_outage_fraction():
    m = run(alg2_config(gamma=0.05, horizon=2_000_000))[0]
    frac = m.secrecy.outage_fraction
    n = m.secrecy.n_messages
    ok = bool(np.all(n >= 1000) and np.all(frac <= 0.07))
    record(10, ok, f"outage fraction {np.round(frac, 4).tolist()} over {n.tolist()} messages (<= 0.07)")
    assert ok


def test_11_xor_demo():
    rng = np.random.default_rng(1)
    msgs = rng.integers(0, 2, size=(100_000, 64), dtype=np.uint8)
    key, masked = xor_split(msgs, rng)
    failures = int(np.any(xor_combine(key, masked) != msgs, axis=1).sum())
    res = xor_demo(100_000)
    worst = min(v for k, v in res.items() if k.startswith("p_"))
    ok = failures == 0 and worst > 0.01
    record(11, ok, f"round-trip failures {failures} of 10^5; smallest share p-value {worst:.3f}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
