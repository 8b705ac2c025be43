import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isecache.errors import IntegrityError, ParseError, SpecError, ValidationError
from isecache.program import (
    ARITHMETIC,
    BRANCH,
    CUSTOM,
    LOAD,
    DynamicTrace,
    GeneratorSpec,
    InstructionRecord,
    StaticProgram,
    format_program,
    format_trace,
    load_program,
    load_trace,
    parse_program,
    parse_trace,
    random_program,
    save_program,
    save_trace,
    synth_trace,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_three_line_program(tmp_path):
    p = write(tmp_path, "p.txt", "0 add r1 r2 r3\n1 ld r4 r1\n2 br - r4\n")
    prog = load_program(p)
    assert len(prog) == 3
    assert [prog.address(i) for i in range(3)] == [0, 4, 8]
    assert [r.opcode_class for r in prog] == [ARITHMETIC, LOAD, BRANCH]
    assert prog[0].srcs == (2, 3) and prog[2].dst is None and prog[2].srcs == (4,)


def test_empty_program_is_valid(tmp_path):
    assert len(load_program(write(tmp_path, "e.txt", ""))) == 0


def test_gap_is_reported():
    with pytest.raises(ValidationError, match="gap at index 1"):
        parse_program("0 add r1 r2 r3\n2 add r1 r2 r3\n")


def test_duplicate_index():
    with pytest.raises(ValidationError, match="duplicate index 0"):
        parse_program("0 add r1 r2 r3\n0 add r1 r2 r3\n")


def test_register_out_of_range():
    with pytest.raises(ValidationError, match="out of range"):
        parse_program("0 add r32 r1 r2\n")


def test_malformed_line_has_line_number():
    with pytest.raises(ParseError, match="line 2"):
        parse_program("format v1\nzero add r1 r2 r3\n")


def test_base_instruction_source_limit():
    with pytest.raises(ValidationError):
        parse_program("0 add r1 r2 r3 r4\n")
    # custom records may read more
    prog = parse_program("0 ci0 r1 r2 r3 r4\n")
    assert prog[0].opcode_class == CUSTOM and prog[0].ci_id == 0 and prog[0].srcs == (2, 3, 4)


def test_format_version_checked():
    with pytest.raises(ParseError, match="unsupported"):
        parse_program("format v2\n")


def test_base_and_width():
    prog = StaticProgram((InstructionRecord(0, "add", 1, (2, 3)), InstructionRecord(1, "add", 1, (2, 3))),
                         instruction_width=2, base=0x100)
    assert prog.address(1) == 0x102
    with pytest.raises(ValidationError):
        StaticProgram((), instruction_width=0)


def test_trace_bare_tokens():
    prog = parse_program("0 add r1 r2 r3\n1 add r1 r2 r3\n2 add r1 r2 r3\n")
    t = parse_trace("trace 6\n0 1 2 0 1 2\n", prog)
    assert t.events == (0, 1, 2, 0, 1, 2)
    assert t.total_accesses == 6


def test_trace_rle_span():
    t = parse_trace("format v1\ntrace 800\n0..7 x100\n")
    assert len(t) == 800
    assert t.events[:10] == (0, 1, 2, 3, 4, 5, 6, 7, 0, 1)
    assert set(t.events) == set(range(8))


def test_trace_out_of_range():
    prog = parse_program("0 add r1 r2 r3\n1 add r1 r2 r3\n2 add r1 r2 r3\n")
    with pytest.raises(ValidationError, match="index 9 out of range"):
        parse_trace("trace 1\n9\n", prog)


def test_trace_count_mismatch():
    with pytest.raises(IntegrityError):
        parse_trace("trace 5\n0..3\n")


@pytest.mark.parametrize("text", ["0 1\n", "trace 1\nx3\n", "trace 2\n3..1 x1\n", "trace 1\nfoo\n"])
def test_trace_parse_errors(text):
    with pytest.raises(ParseError):
        parse_trace(text)


def test_from_events_compresses():
    t = DynamicTrace.from_events([0, 1, 2, 0, 1, 2, 5, 9, 10])
    assert t.runs == ((0, 2, 2), (5, 5, 1), (9, 10, 1))
    assert t.events == (0, 1, 2, 0, 1, 2, 5, 9, 10)


runs_strategy = st.lists(
    st.tuples(st.integers(0, 40), st.integers(0, 6), st.integers(1, 5)).map(lambda t: (t[0], t[0] + t[1], t[2])),
    max_size=30,
)


@given(runs_strategy)
def test_trace_round_trip_keeps_runs(runs):
    t = DynamicTrace(tuple(runs))
    back = parse_trace(format_trace(t))
    assert back == t
    assert back.total_accesses == sum((b - a + 1) * n for a, b, n in runs) == len(back.events)


@given(st.integers(0, 40), st.integers(0, 2**31 - 1))
@settings(max_examples=50)
def test_program_round_trip(n, seed):
    prog = random_program(n, random.Random(seed))
    back = parse_program(format_program(prog))
    assert back == prog
    assert all(back.address(i) == i * back.instruction_width for i in range(n))


def test_file_round_trip(tmp_path):
    prog, trace = synth_trace("hot-cold(4,64,50)")
    save_program(prog, tmp_path / "p.txt")
    save_trace(trace, tmp_path / "t.txt")
    prog2 = load_program(tmp_path / "p.txt")
    assert prog2 == prog
    assert load_trace(tmp_path / "t.txt", prog2) == trace


def test_straight_loop():
    prog, trace = synth_trace("straight-loop(8,10)")
    assert len(prog) == 8
    assert len(trace) == 80
    assert trace.events == tuple(range(8)) * 10


def test_uniform_random_is_deterministic():
    a = synth_trace("uniform-random(16,1000,seed=7)")
    b = synth_trace(GeneratorSpec("uniform-random", {"n_instrs": 16, "n_events": 1000, "seed": 7}))
    assert a == b
    assert len(a[1]) == 1000 and max(a[1].events) < 16
    assert synth_trace("uniform-random(16,1000,seed=8)") != a


def test_uniform_random_takes_external_seed():
    assert synth_trace("uniform-random(16,50)", seed=7) == synth_trace("uniform-random(16,50,7)")


def test_hot_cold():
    prog, trace = synth_trace("hot-cold:4,64,50")
    assert len(prog) == 68
    ev = trace.events
    assert len(ev) == 4 * 50 + 64
    assert all(ev.count(i) == 50 for i in range(4))
    assert all(ev.count(i) == 1 for i in range(4, 68))


@pytest.mark.parametrize("spec", ["straight-loop(0,10)", "hot-cold(4,-1,3)", "nope(1)", "straight-loop(8)",
                                  "straight-loop(1,2,3)", "straight-loop(a,b)"])
def test_bad_generator_specs(spec):
    with pytest.raises(SpecError):
        synth_trace(spec)


def test_spec_str_round_trip():
    spec = GeneratorSpec.parse("uniform-random(16, 1000, seed=7)")
    assert str(spec) == "uniform-random(n_instrs=16,n_events=1000,seed=7)"
    assert GeneratorSpec.parse(str(spec)) == spec
