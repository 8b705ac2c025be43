import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isecache.cache import AccessStats, CacheConfig, simulate
from isecache.ci import (
    CiCandidate,
    CiConstraints,
    CiSelection,
    enumerate_candidates,
    format_selection,
    greedy_select,
    live_after,
    parse_selection,
    range_io,
    reduction_stats,
    substitute,
)
from isecache.errors import ParseError, SubstitutionError, ValidationError
from isecache.program import (
    DynamicTrace,
    InstructionRecord,
    StaticProgram,
    parse_program,
    random_program,
    synth_trace,
)

from oracles import basic_block_trace, brute_force_candidates, random_block_trace, window_io

CHAIN = parse_program("0 add r1 r2 r3\n1 add r4 r1 r5\n2 add r6 r4 r7\n")
CHAIN_TRACE = DynamicTrace(((0, 2, 10),))


def as_tuples(cands):
    return [(c.start_index, c.length, c.ext_inputs, c.ext_outputs, c.exec_count) for c in cands]


def test_chain_dataflow_matches_oracle():
    ins, outs = window_io(CHAIN, 0, 2)
    assert ins == {2, 3, 5} and outs == {4}
    ins, outs = window_io(CHAIN, 0, 3)
    assert ins == {2, 3, 5, 7} and outs == set()
    assert range_io(CHAIN, 0, 2) == ([2, 3, 5], [4])


def test_chain_two_input_limit_excludes_everything():
    # every 2+ window of this chain reads at least three outside values
    assert enumerate_candidates(CHAIN, CHAIN_TRACE, CiConstraints(max_len=3)) == []


def test_chain_three_input_limit():
    got = enumerate_candidates(CHAIN, CHAIN_TRACE, CiConstraints(max_len=3, max_inputs=3))
    assert as_tuples(got) == [(0, 2, 3, 1, 10), (1, 2, 3, 0, 10)]
    got = enumerate_candidates(CHAIN, CHAIN_TRACE, CiConstraints(max_len=3, max_inputs=4))
    assert (0, 3, 4, 0, 10) in as_tuples(got)


def test_single_instruction_program():
    prog = parse_program("0 add r1 r2 r3\n")
    assert enumerate_candidates(prog, DynamicTrace(((0, 0, 5),))) == []


def test_straight_loop_windows():
    prog, trace = synth_trace("straight-loop(4,25)")
    got = enumerate_candidates(prog, trace, CiConstraints(max_len=2))
    assert [(c.start_index, c.stop, c.exec_count, c.merit) for c in got] == [
        (0, 2, 25, 25), (1, 3, 25, 25), (2, 4, 25, 25)]
    assert all(c.ext_inputs == 2 and c.ext_outputs <= 1 for c in got)


def test_independent_adds_need_four_inputs():
    prog = parse_program("0 add r1 r10 r11\n1 add r2 r12 r13\n2 add r3 r14 r15\n3 add r4 r16 r17\n")
    trace = DynamicTrace(((0, 3, 25),))
    assert enumerate_candidates(prog, trace, CiConstraints(max_len=2)) == []
    relaxed = enumerate_candidates(prog, trace, CiConstraints(max_len=2, max_inputs=4))
    assert [(c.start_index, c.exec_count, c.merit) for c in relaxed] == [(0, 25, 25), (1, 25, 25), (2, 25, 25)]


def test_forbidden_classes_and_override():
    prog = parse_program("0 add r1 r2 r3\n1 ld r4 r1\n2 add r5 r4 r4\n")
    trace = DynamicTrace(((0, 2, 3),))
    assert enumerate_candidates(prog, trace, CiConstraints(max_len=3)) == []
    got = enumerate_candidates(prog, trace, CiConstraints(max_len=3, forbid_classes=()))
    assert {(c.start_index, c.length) for c in got} == {(0, 2), (0, 3), (1, 2)}


def test_partial_executions_are_not_candidates():
    prog, _ = synth_trace("straight-loop(6,1)")
    # 2 is entered without 1 once, so no window containing both 1 and 2 is complete
    trace = DynamicTrace.from_events([0, 1, 2, 3, 4, 5, 2, 3])
    got = {(c.start_index, c.length) for c in enumerate_candidates(prog, trace, CiConstraints(max_len=6))}
    assert all(not (k <= 1 < k + j and k <= 2 < k + j) for k, j in got)
    assert (2, 2) in got and (4, 2) in got


def test_precondition_errors():
    prog, trace = synth_trace("straight-loop(4,2)")
    with pytest.raises(ValueError):
        CiConstraints(max_len=1)
    with pytest.raises(ValueError):
        enumerate_candidates(prog, DynamicTrace())


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_enumeration_matches_brute_force(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 24)
    prog = random_program(n, rng, n_regs=rng.choice([3, 4, 6]))
    make = rng.choice([random_block_trace, basic_block_trace])
    trace = DynamicTrace.from_events(make(rng, n, rng.randint(1, 30)))
    c = CiConstraints(max_len=rng.randint(2, 6), max_inputs=rng.randint(1, 4), max_outputs=rng.randint(0, 2))
    got = as_tuples(enumerate_candidates(prog, trace, c))
    want = brute_force_candidates(prog, trace, c.max_len, c.max_inputs, c.max_outputs, c.forbid_classes)
    assert got == want


def test_live_after_reverse_scan():
    live = live_after(CHAIN)
    assert live[3] == frozenset()
    assert live[2] == {4, 7}
    assert live[0] == {2, 3, 5, 7}


# -- greedy selection -------------------------------------------------------------


def cand(start, length, merit):
    return CiCandidate(start, length, 2, 1, merit // (length - 1))


def test_greedy_skips_overlap():
    a, b, c = cand(0, 3, 100), cand(2, 2, 90), cand(5, 2, 80)
    assert (a.merit, b.merit, c.merit) == (100, 90, 80)
    assert greedy_select([b, c, a], budget=2).chosen == (a, c)


def test_greedy_empty():
    assert greedy_select([]).chosen == ()


def test_greedy_tie_breaks():
    hi, lo = cand(4, 2, 50), cand(2, 2, 50)
    assert greedy_select([hi, lo], budget=1).chosen == (lo,)
    short, long_ = CiCandidate(0, 2, exec_count=6), CiCandidate(0, 3, exec_count=3)
    assert short.merit == long_.merit == 6
    assert greedy_select([short, long_], budget=1).chosen == (long_,)


def test_greedy_budget_zero_and_unlimited():
    cands = [cand(0, 2, 10), cand(2, 2, 10), cand(4, 2, 10)]
    assert greedy_select(cands, 0).chosen == ()
    assert len(greedy_select(cands)) == 3


@given(st.lists(st.tuples(st.integers(0, 30), st.integers(2, 6), st.integers(0, 20)), max_size=25),
       st.one_of(st.none(), st.integers(0, 6)))
def test_greedy_properties(raw, budget):
    cands = [CiCandidate(s, j, 2, 1, e) for s, j, e in raw]
    sel = greedy_select(cands, budget)
    assert greedy_select(list(reversed(cands)), budget) == sel
    ordered = sorted(sel.chosen, key=lambda c: c.start_index)
    assert all(a.stop <= b.start_index for a, b in zip(ordered, ordered[1:]))
    if budget is not None:
        assert len(sel) <= budget
    # a larger budget only extends the pick sequence
    bigger = greedy_select(cands, None if budget is None else budget + 1)
    assert bigger.chosen[:len(sel)] == sel.chosen


def test_selection_rejects_overlap():
    with pytest.raises(ValidationError):
        CiSelection((CiCandidate(0, 3), CiCandidate(2, 2)))


# -- substitution -----------------------------------------------------------------


def test_substitute_collapses_range():
    prog, trace = synth_trace("straight-loop(8,1)")
    res = substitute(prog, trace, CiSelection((CiCandidate(0, 3, 2, 1, 1),)))
    assert res.code_size_before == 8 and res.code_size_after == 6
    assert res.trace.events == (0, 1, 2, 3, 4, 5)
    assert len(trace) - len(res.trace) == 2
    assert res.index_map == (0, 0, 0, 1, 2, 3, 4, 5)
    ci = res.program[0]
    assert ci.is_custom and ci.opcode == "ci0" and ci.srcs == (8, 30) and ci.dst == 3


def test_substitute_identity():
    prog, trace = synth_trace("hot-cold(4,20,5)")
    res = substitute(prog, trace, CiSelection())
    assert res.program == prog and res.trace.events == trace.events
    assert res.index_map == tuple(range(len(prog)))


def test_back_to_back_executions_stay_separate_fetches():
    prog, trace = synth_trace("straight-loop(3,4)")
    res = substitute(prog, trace, CiSelection((CiCandidate(0, 3),)))
    assert res.trace.events == (0, 0, 0, 0)


def test_partial_execution_is_an_error():
    prog, _ = synth_trace("straight-loop(6,1)")
    trace = DynamicTrace.from_events([0, 1, 2, 3, 4, 5, 1, 2])
    with pytest.raises(SubstitutionError, match=r"ci0 \[0,3\) at trace position 6"):
        substitute(prog, trace, CiSelection((CiCandidate(0, 3),)))
    trace = DynamicTrace.from_events([0, 1, 5])
    with pytest.raises(SubstitutionError, match="position 0"):
        substitute(prog, trace, CiSelection((CiCandidate(0, 3),)))


def test_range_past_end():
    prog, trace = synth_trace("straight-loop(4,1)")
    with pytest.raises(SubstitutionError):
        substitute(prog, trace, CiSelection((CiCandidate(3, 2),)))


@given(st.integers(0, 2**31 - 1), st.one_of(st.none(), st.integers(0, 4)))
@settings(max_examples=40, deadline=None)
def test_rewrite_size_invariants(seed, budget):
    rng = random.Random(seed)
    n = rng.randint(2, 30)
    prog = random_program(n, rng, n_regs=3)
    trace = DynamicTrace.from_events(random_block_trace(rng, n, rng.randint(1, 40)))
    sel = greedy_select(enumerate_candidates(prog, trace, CiConstraints(max_len=5, max_inputs=3)), budget)
    res = substitute(prog, trace, sel)
    assert res.code_size_after + sum(c.length - 1 for c in sel) == res.code_size_before
    assert len(res.trace) == len(trace) - sum((c.length - 1) * c.exec_count for c in sel)
    if sel.chosen:
        assert len(res.trace) < len(trace)
    # the collapsed trace still maps back onto the original, event for event
    mapped = [res.index_map[e] for e in trace.events]
    dedup = []
    i = 0
    starts = {c.start_index: c.length for c in sel}
    ev = trace.events
    while i < len(ev):
        dedup.append(mapped[i])
        i += starts.get(ev[i], 1)
    assert tuple(dedup) == res.trace.events


# -- block-level effect of one CI -------------------------------------------------


@pytest.mark.parametrize("block", [16, 32, 64])
def test_aligned_ci_block_fill(block):
    cfg = CacheConfig(1024, block, 2)
    B = cfg.block_instructions
    prog, trace = synth_trace(f"straight-loop({B},1)")
    base = simulate(prog, trace, cfg)
    assert (base.misses, base.hits) == (1, B - 1)
    for j in range(2, B + 1):
        res = substitute(prog, trace, CiSelection((CiCandidate(0, j),)))
        ext = simulate(res.program, res.trace, cfg)
        assert (ext.misses, ext.hits) == (1, B - j)


@given(st.sampled_from([16, 32, 64]), st.data())
@settings(max_examples=60, deadline=None)
def test_unaligned_ci_hit_reduction_bounded(block, data):
    cfg = CacheConfig(4096, block, 2)
    B = cfg.block_instructions
    n = data.draw(st.integers(2, 4 * B))
    j = data.draw(st.integers(2, min(B, n)))
    k = data.draw(st.integers(0, n - j))
    prog, trace = synth_trace(f"straight-loop({n},1)")
    base = simulate(prog, trace, cfg)
    res = substitute(prog, trace, CiSelection((CiCandidate(k, j),)))
    ext = simulate(res.program, res.trace, cfg)
    assert ext.misses <= base.misses
    assert base.hits - ext.hits <= j - 1
    assert base.total - ext.total == j - 1


# -- reduction statistics ---------------------------------------------------------


def test_reduction_stats_example():
    r = reduction_stats(AccessStats(1000, 100), AccessStats(810, 99))
    assert r.access_red_pct == pytest.approx(100 * 191 / 1100, rel=1e-12)
    assert r.access_red_pct == pytest.approx(17.3636, abs=1e-4)
    assert r.hit_red_pct == pytest.approx(19.0, rel=1e-12)
    assert r.miss_red_pct == pytest.approx(1.0, rel=1e-12)


def test_reduction_stats_zero_cases():
    s = AccessStats(5, 5)
    assert reduction_stats(s, s) == (reduction_stats(s, s).__class__(0.0, 0.0, 0.0))
    z = reduction_stats(AccessStats(0, 0), AccessStats(0, 0))
    assert (z.access_red_pct, z.hit_red_pct, z.miss_red_pct) == (0.0, 0.0, 0.0)


# -- selection file ---------------------------------------------------------------


def test_selection_round_trip():
    sel = CiSelection((CiCandidate(5, 3, 2, 1, 40), CiCandidate(0, 2, 1, 0, 7)))
    text = format_selection(sel)
    assert text.splitlines()[0] == "ci 0 start=5 len=3 inputs=2 outputs=1 execs=40"
    assert parse_selection(text) == sel


@pytest.mark.parametrize("text,err", [
    ("ci 0 start=0 len=1 inputs=0 outputs=0 execs=0\n", ParseError),
    ("ci 0 start=0 len=2\n", ParseError),
    ("ci 1 start=0 len=2 inputs=0 outputs=0 execs=0\n", ValidationError),
    ("ci 0 start=0 len=3 inputs=0 outputs=0 execs=0\nci 1 start=1 len=2 inputs=0 outputs=0 execs=0\n",
     ValidationError),
])
def test_selection_parse_errors(text, err):
    with pytest.raises(err):
        parse_selection(text)


def test_custom_records_feed_back_into_enumeration():
    prog, trace = synth_trace("straight-loop(16,5)")
    res = substitute(prog, trace, CiSelection((CiCandidate(0, 4),)))
    again = enumerate_candidates(res.program, res.trace, CiConstraints(max_len=4))
    assert any(c.start_index == 0 for c in again)
    assert isinstance(res.program[0], InstructionRecord) and isinstance(res.program, StaticProgram)
