from __future__ import annotations

import random
from datetime import timedelta

from hypothesis import given, settings, strategies as st

from conftest import SEL, T0, addr, brute_contexts, context_inputs, contract, group, oldest_member, random_context_spec, trace
from oracles import components_bfs
from proxyprobe.context import (
    adoption_series,
    activity_levels,
    cluster_contexts,
    connected_components,
    inbound_counts,
    monthly_context_counts,
    read_contexts,
    utilization_series,
    write_contexts,
)
from proxyprobe.model import Month


def test_same_code_same_deployer_shared_logic():
    (ctx,) = cluster_contexts(*context_inputs({1: (7, 0xE1, [9], 2), 2: (7, 0xE1, [9], 1)}))
    assert ctx.size == 2
    assert ctx.representative == addr(2)  # older
    assert ctx.logics == {addr(9)}


def test_disjoint_logics_split():
    assert len(cluster_contexts(*context_inputs({1: (7, 0xE1, [9], 0), 2: (7, 0xE1, [8], 0)}))) == 2


def test_different_deployers_split_despite_shared_logic():
    assert len(cluster_contexts(*context_inputs({1: (7, 0xE1, [9], 0), 2: (7, 0xE2, [9], 0)}))) == 2


def test_different_code_split():
    assert len(cluster_contexts(*context_inputs({1: (7, 0xE1, [9], 0), 2: (8, 0xE1, [9], 0)}))) == 2


def test_transitive_linking():
    ctxs = cluster_contexts(*context_inputs({1: (7, 0xE1, [9], 0), 2: (7, 0xE1, [9, 8], 0), 3: (7, 0xE1, [8], 0)}))
    assert [c.size for c in ctxs] == [3]


def test_logic_that_is_also_a_proxy_is_a_separate_node():
    # proxy 1 delegates to proxy 2's address; it must not merge 1 and 2 by identity
    ctxs = cluster_contexts(*context_inputs({1: (7, 0xE1, [2], 0), 2: (7, 0xE1, [9], 0)}))
    assert len(ctxs) == 2


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_union_find_matches_bfs(seed):
    rnd = random.Random(seed)
    n = rnd.randint(1, 100)
    nodes = list(range(n))
    edges = [(rnd.randrange(n), rnd.randrange(n)) for _ in range(rnd.randint(0, 2 * n))]
    got = {frozenset(c) for c in connected_components(edges, nodes)}
    assert got == set(components_bfs(nodes, edges))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_clustering_matches_brute_force(seed):
    rnd = random.Random(seed)
    spec = random_context_spec(rnd, proxies=rnd.randint(1, 39), logics=15)
    ctxs = cluster_contexts(*context_inputs(spec))
    assert {c.members for c in ctxs} == brute_contexts(spec)
    for c in ctxs:
        assert c.representative == oldest_member(spec, c.members)


def test_contexts_roundtrip(tmp_path):
    ctxs = cluster_contexts(*context_inputs({1: (7, 0xE1, [9], 2), 2: (7, 0xE1, [9], 1), 3: (1, 0xE2, [], 0)}))
    write_contexts(ctxs, tmp_path / "c.jsonl")
    assert read_contexts(tmp_path / "c.jsonl") == ctxs


def test_monthly_context_counts():
    ctxs = cluster_contexts(*context_inputs({1: (1, 0xE1, [], 0), 2: (2, 0xE1, [], 1), 3: (3, 0xE1, [], 2)}))
    assert monthly_context_counts(ctxs).points == {Month(2020, 3): (3, None)}
    assert monthly_context_counts([]).points == {}


def _create_tx(n, eoa, target, month_offset=0, via=None):
    ts = T0 + timedelta(days=31 * month_offset)
    if via is None:
        return group(trace(n, (), eoa, target, ct="create", ts=ts, block=n))
    return group(trace(n, (), eoa, via, ts=ts, block=n), trace(n, (0,), via, target, ct="create", ts=ts, block=n))


def test_adoption_single_deploy():
    a = adoption_series([_create_tx(1, 0xE1, 0xA1)], {addr(0xA1)})
    (point,) = a.values()
    assert (point.proxy_initiating_eoas, point.any_contract_eoas, point.ratio) == (1, 1, 1.0)


def test_adoption_counts_factory_requests():
    a = adoption_series([_create_tx(1, 0xE1, 0xA1, via=0xF1)], {addr(0xA1)})
    assert list(a.values())[0].proxy_initiating_eoas == 1


def test_adoption_cumulative():
    txs = [_create_tx(i, 0xE0 + i, 0xA0 + i) for i in range(4)] + [_create_tx(9, 0xE9, 0xB9, month_offset=1)]
    a = adoption_series(txs, {addr(0xA0)})
    first, second = (a[m] for m in sorted(a))
    assert first.ratio == 0.25
    assert (second.proxy_initiating_eoas, second.any_contract_eoas) == (1, 5)


def _call(n, to, sub=None):
    traces = [trace(n, (), 0xE1, to, input=SEL, block=n)]
    if sub:
        traces.append(trace(n, (0,), to, sub, input=SEL, block=n))
    return group(*traces)


def test_utilization():
    proxies = {addr(0xA1)}
    contracts = {addr(n): contract(n) for n in (0xA1, 0xC1, 0xC2)}
    txs = [_call(1, 0xA1), _call(2, 0xC1, 0xA1)] + [_call(i, 0xC1) for i in range(3, 11)]
    every, multi = utilization_series(txs, proxies, contracts)
    (m,) = every.points
    assert every.ratio(m) == 0.2
    assert multi.ratio(m) == 1.0


def test_inbound_counts_distinct_transactions():
    tx = group(trace(1, (), 0xE1, 0xC1), trace(1, (0,), 0xC1, 0xC2), trace(1, (1,), 0xC1, 0xC2))
    counts = inbound_counts([tx])
    assert counts[addr(0xC2)] == 1
    assert addr(0xC9) not in counts


def test_activity_levels_include_never_called():
    contracts = {addr(n): contract(n) for n in (0xA1, 0xC1, 0xC9)}
    proxies, others = activity_levels([_call(1, 0xA1), _call(2, 0xA1), _call(3, 0xC1)], {addr(0xA1)}, contracts)
    assert proxies == [2] and others == [1, 0]
