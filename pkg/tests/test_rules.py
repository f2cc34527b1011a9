import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tilespace.errors import (
    BudgetError,
    PreconditionError,
    SchemaError,
    UndeterminedError,
)
from tilespace.rules import (
    Patch,
    SubstitutionRule,
    allowed_rect_patterns,
    allowed_square_patterns,
    allowed_words,
    bundled_rule,
    canonical_label,
    corona,
    expand_patch,
    parse_rule,
    pe_radius_bound,
    t_equivalent,
    validate_rule,
)

FIB = bundled_rule("fibonacci")
TM = bundled_rule("thue_morse")
PERIODIC_2D = bundled_rule("periodic_2d")
CHAIR = bundled_rule("chair_block")


def sigma_power_word(rule, letter, k):
    """Independent expansion oracle: repeated literal string substitution."""
    word = letter
    table = {a: rule.images[i] for i, a in enumerate(rule.alphabet)}
    for _ in range(k):
        word = "".join(table[c] for c in word)
    return word


# -- parsing


def test_parse_fibonacci_alphabet_order():
    assert FIB.alphabet == ("a", "b")
    assert FIB.image_word("a") == "ab"
    assert FIB.image_word("b") == "a"
    assert FIB.declared_aperiodic is True


def test_parse_unknown_label():
    doc = {"dimension": 1, "tiles": ["a"], "rule": {"a": "ac"}}
    with pytest.raises(SchemaError, match="unknown label"):
        parse_rule(doc)


def test_parse_ragged_block():
    doc = {
        "dimension": 2,
        "tiles": ["a", "b"],
        "expansion": 2,
        "rule": {"a": [["a", "b"], ["b", "a"]], "b": [["a", "b", "a"], ["b", "a", "b"]]},
    }
    with pytest.raises(SchemaError, match="ragged"):
        parse_rule(doc)


def test_parse_rejects_bad_documents():
    with pytest.raises(SchemaError):
        parse_rule("not json {")
    with pytest.raises(SchemaError):
        parse_rule({"dimension": 3, "tiles": ["a"], "rule": {"a": "a"}})
    with pytest.raises(SchemaError, match="single characters"):
        parse_rule({"dimension": 1, "tiles": ["ab"], "rule": {"ab": "abab"}})
    with pytest.raises(SchemaError):
        parse_rule({"dimension": 1, "tiles": ["a", "b"], "rule": {"a": "ab"}})


def test_parse_2d_row_convention():
    # rows are listed top-to-bottom; internally y ascends
    block = CHAIR.image_block("NE")
    assert block[1] == ("SE", "NE")  # top row of the file
    assert block[0] == ("NE", "NW")  # bottom row of the file


# -- validation


def test_validate_fibonacci_primitive():
    report = validate_rule(FIB)
    assert report.abelianization == ((1, 1), (1, 0))
    assert report.primitive and report.primitivity_power == 2
    assert report.declared_aperiodic is True


def test_validate_single_letter_periodic_flag():
    rule = parse_rule({"dimension": 1, "tiles": ["a"], "rule": {"a": "a"}})
    report = validate_rule(rule)
    assert report.primitive
    assert any("periodic hull" in w for w in report.warnings)


def test_validate_non_primitive():
    rule = parse_rule({"dimension": 1, "tiles": ["a", "b"], "rule": {"a": "ab", "b": "b"}})
    report = validate_rule(rule)
    # oracle: powers of [[1,0],[1,1]] keep a zero entry
    m = [[1, 0], [1, 1]]
    b = m
    for _ in range(3):
        b = [[sum(b[i][t] * m[t][j] for t in range(2)) for j in range(2)] for i in range(2)]
        assert any(x == 0 for row in b for x in row)
    assert not report.primitive


def test_validate_warns_when_aperiodic_flag_absent():
    rule = parse_rule({"dimension": 1, "tiles": ["a", "b"], "rule": {"a": "ab", "b": "a"}})
    assert any("not declared" in w for w in validate_rule(rule).warnings)


# -- expansion


def test_expand_word_examples():
    p = Patch.from_word("a")
    assert expand_patch(FIB, p, 2).word() == "aba"
    assert expand_patch(FIB, p, 3).word() == "abaab"
    assert expand_patch(FIB, p, 0) == p


@pytest.mark.parametrize("rule", [FIB, TM, bundled_rule("period_doubling")])
@pytest.mark.parametrize("i,j", [(0, 1), (1, 2), (2, 1), (3, 0), (2, 2)])
def test_expand_composition(rule, i, j):
    p = Patch.from_word("a")
    left = expand_patch(rule, p, i + j)
    right = expand_patch(rule, expand_patch(rule, p, i), j)
    assert left == right


def test_expand_2d_scales_positions():
    p = Patch.single(2, "t")
    q = expand_patch(PERIODIC_2D, p, 2)
    assert len(q) == 16
    assert q.positions() == {(x, y) for x in range(4) for y in range(4)}


def test_expand_2d_composition_chair():
    p = Patch.single(2, "NE")
    assert expand_patch(CHAIR, p, 2) == expand_patch(CHAIR, expand_patch(CHAIR, p, 1), 1)


def test_expand_budget():
    p = Patch.from_word("a")
    with pytest.raises(BudgetError):
        expand_patch(PERIODIC_2D, Patch.single(2, "t"), 12)
    del p


# -- coronas


def test_corona_1d_example():
    host = Patch.from_word("abaab")
    c = corona(FIB, host, (2,), 1)
    assert c.patch.word() == "baa"
    assert c.level == 1 and c.center == (2,)


def test_corona_boundary_error():
    host = Patch.from_word("abaab")
    with pytest.raises(UndeterminedError, match="corona undetermined"):
        corona(FIB, host, (0,), 1)


def test_corona_2d_constant():
    host = Patch(2, tuple((((x, y), "t")) for x in range(5) for y in range(5)))
    c = corona(PERIODIC_2D, host, (2, 2), 1)
    assert c.patch.positions() == {(x, y) for x in range(1, 4) for y in range(1, 4)}


def test_corona_monotone():
    host = Patch.from_word("aabaababaab")
    c1 = corona(FIB, host, (5,), 1).patch.positions()
    c2 = corona(FIB, host, (5,), 2).patch.positions()
    assert c1 <= c2


# -- canonical labels


def test_canonical_label_translation_invariant():
    p = Patch.from_word("ab", mark=0)
    q = p.translate((7,))
    assert canonical_label(p) == canonical_label(q)


def test_canonical_label_mark_position_matters():
    p = Patch.from_word("ab", mark=0)
    q = Patch.from_word("ab", mark=1)
    assert canonical_label(p) != canonical_label(q)


def test_canonical_label_orientation_matters():
    p = Patch.from_word("ab", mark=0)
    q = Patch.from_word("ba", mark=1)
    assert canonical_label(p) != canonical_label(q)


@settings(max_examples=100, deadline=None)
@given(
    word=st.text(alphabet="ab", min_size=1, max_size=6),
    mark=st.integers(min_value=0, max_value=5),
    shift=st.integers(min_value=-20, max_value=20),
)
def test_canonical_label_property(word, mark, shift):
    mark = mark % len(word)
    p = Patch.from_word(word, mark=mark)
    assert canonical_label(p) == canonical_label(p.translate((shift,)))


@settings(max_examples=60, deadline=None)
@given(
    w1=st.text(alphabet="ab", min_size=1, max_size=5),
    w2=st.text(alphabet="ab", min_size=1, max_size=5),
    m1=st.integers(min_value=0, max_value=4),
    m2=st.integers(min_value=0, max_value=4),
)
def test_canonical_label_injective_on_non_translates(w1, w2, m1, m2):
    m1, m2 = m1 % len(w1), m2 % len(w2)
    p = Patch.from_word(w1, mark=m1)
    q = Patch.from_word(w2, mark=m2)
    same = (w1 == w2) and (m1 == m2)
    assert (canonical_label(p) == canonical_label(q)) == same


# -- T-equivalence


def test_t_equivalent_reflexive():
    p = Patch.from_word("abaab", mark=2)
    assert t_equivalent(p, p, 1)
    assert t_equivalent(p, p, 2)


def test_t_equivalent_labels_differ():
    p = Patch.from_word("ab", mark=0)
    q = Patch.from_word("ab", mark=1)
    assert not t_equivalent(p, q, 0)


def test_t_equivalent_fibonacci_repeated_context():
    # scan a long Fibonacci word for two positions sharing the context "baa"
    word = sigma_power_word(FIB, "a", 10)
    hits = [i for i in range(1, len(word) - 1) if word[i - 1 : i + 2] == "baa"]
    assert len(hits) >= 2
    host = Patch.from_word(word)
    p = host.with_mark((hits[0],))
    q = host.with_mark((hits[1],))
    assert t_equivalent(p, q, 1)


def test_t_equivalent_undetermined():
    p = Patch.from_word("ab", mark=0)
    with pytest.raises(UndeterminedError, match="context undetermined"):
        t_equivalent(p, p, 3)


def test_t_equivalent_monotone_and_symmetric():
    word = sigma_power_word(FIB, "a", 9)
    host = Patch.from_word(word)
    marks = [(i,) for i in range(3, 9)]
    for a in marks:
        for b in marks:
            for r in (0, 1):
                e_hi = t_equivalent(host.with_mark(a), host.with_mark(b), r + 1)
                e_lo = t_equivalent(host.with_mark(a), host.with_mark(b), r)
                assert e_hi <= e_lo
                assert e_lo == t_equivalent(host.with_mark(b), host.with_mark(a), r)


# -- radius bound


def test_pe_radius_bound():
    assert str(pe_radius_bound(FIB, 2)) == "3"
    assert str(pe_radius_bound(FIB, 0)) == "1"
    b = pe_radius_bound(PERIODIC_2D, 1)
    assert b.steps == 2 and b.dimension == 2
    assert str(b) == "2*sqrt(2)"


# -- language enumeration


def brute_force_factors(rule, length, power):
    word = sigma_power_word(rule, rule.alphabet[0], power)
    return sorted({word[i : i + length] for i in range(len(word) - length + 1)})


@pytest.mark.parametrize("length", [1, 2, 3, 4, 5, 6, 7])
def test_fibonacci_factor_counts(length):
    words = allowed_words(FIB, length)
    # Sturmian complexity oracle plus brute enumeration of a long prefix
    assert len(words) == length + 1
    assert list(words) == brute_force_factors(FIB, length, 14)


@pytest.mark.parametrize("length,count", [(1, 2), (2, 4), (3, 6), (4, 10), (5, 12)])
def test_thue_morse_factor_counts(length, count):
    words = allowed_words(TM, length)
    assert len(words) == count
    assert list(words) == brute_force_factors(TM, length, 10)


def test_single_letter_language():
    rule = bundled_rule("periodic_1d")
    assert allowed_words(rule, 5) == ("aaaaa",)


def test_allowed_square_patterns_constant():
    pats = allowed_square_patterns(PERIODIC_2D, 3)
    assert pats == ((("t",) * 3,) * 3,)


def test_allowed_square_patterns_chair_consistency():
    # oracle: brute-force windows of a big expansion contain the same set
    pats3 = set(allowed_square_patterns(CHAIR, 3))
    grid = Patch.single(2, "NE")
    big = expand_patch(CHAIR, grid, 6)
    # collect windows of the 64x64 expansion
    lookup = {pos: lab for pos, lab in big.cells}
    brute = set()
    for x0 in range(62):
        for y0 in range(62):
            brute.add(
                tuple(
                    tuple(lookup[(x0 + dx, y0 + dy)] for dx in range(3)) for dy in range(3)
                )
            )
    assert brute <= pats3
    # the window set of one letter's expansion must already be most of it;
    # every enumerated pattern must appear in some bigger expansion
    union = set()
    for letter in CHAIR.alphabet:
        bigl = expand_patch(CHAIR, Patch.single(2, letter), 6)
        lk = {pos: lab for pos, lab in bigl.cells}
        for x0 in range(62):
            for y0 in range(62):
                union.add(
                    tuple(
                        tuple(lk[(x0 + dx, y0 + dy)] for dx in range(3)) for dy in range(3)
                    )
                )
    assert pats3 == union


def test_allowed_rect_patterns_shapes():
    rects = allowed_rect_patterns(CHAIR, 2, 3)
    assert all(len(r) == 3 and all(len(row) == 2 for row in r) for r in rects)
    assert rects


def test_enumeration_requires_primitive():
    rule = parse_rule({"dimension": 1, "tiles": ["a", "b"], "rule": {"a": "ab", "b": "b"}})
    with pytest.raises(PreconditionError, match="primitive"):
        allowed_words(rule, 2)


# -- patches


def test_patch_rejects_disconnected():
    with pytest.raises(SchemaError, match="face-connected"):
        Patch(2, ((((0, 0)), "a"), (((2, 2)), "a")))


def test_patch_canonical_places_min_at_origin():
    p = Patch.from_word("ab").translate((5,))
    assert p.canonical().positions() == {(0,), (1,)}
