import json
import math
import random
from fractions import Fraction

import pytest

from fvlogic import harness_cli as hc
from fvlogic.boolean_ideals import close_ideal, trivial_ideal
from fvlogic.reduced_products import Family, family_to_json, reduced_product
from fvlogic.structures import evaluate, from_json, random_structure, to_json, validate
from fvlogic.syntax import (
    Atomic,
    Const,
    Half,
    Monus,
    One,
    Sup,
    Var,
    format_fraction,
    free_vars,
    is_restricted,
    parse,
    signature_to_json,
    to_text,
)

CAPS = hc.load_caps()


def texts(sentences):
    return [to_text(s) for s in sentences]


# --------------------------------------------------------------------------
# caps


def test_default_caps_frozen():
    assert CAPS.battery_depth == 3
    assert CAPS.max_omega == 4
    assert CAPS.max_structure == 4
    assert CAPS.max_n == 2
    assert CAPS.max_product_points == 4096


def test_caps_from_custom_file(tmp_path):
    doc = {
        "battery_depth": 1,
        "battery_per_depth": 8,
        "battery_keep_first": 4,
        "max_omega": 2,
        "max_structure": 2,
        "max_n": 1,
        "max_product_points": 64,
        "max_psis": 10,
        "max_guard_vars": 2,
    }
    p = tmp_path / "caps.json"
    p.write_text(json.dumps(doc))
    caps = hc.load_caps(str(p))
    assert caps.battery_depth == 1 and caps.max_psis == 10


def test_battery_depth_enforced_before_construction():
    with pytest.raises(ValueError):
        hc.battery(hc.BATTERY_SIG, CAPS.battery_depth + 1, CAPS)
    with pytest.raises(ValueError):
        hc.battery(hc.BATTERY_SIG, 5, CAPS)


def test_suite_fv_precision_cap():
    with pytest.raises(ValueError):
        hc.suite_fv(1, CAPS.max_n + 1, families=4, seed=0, caps=CAPS)


# --------------------------------------------------------------------------
# battery


def test_depth_zero_battery_is_constants_and_closed_atoms():
    assert texts(hc.battery(hc.BATTERY_SIG, 0, CAPS).sentences) == [
        "0",
        "1",
        "P(c)",
        "P(g(c,c))",
        "d(c,g(c,c))",
    ]
    assert texts(hc.battery(hc.UNARY_SIG, 0, CAPS).sentences) == [
        "0",
        "1",
        "P(c)",
        "P(g(c))",
        "d(c,g(c))",
    ]


def test_depth_one_battery_contains_canonical_small_sentences():
    want = [
        Sup("x", Atomic("P", (Var("x"),))),
        Half(Atomic("P", (Const("c"),))),
        Monus(Atomic("P", (Const("c"),)), One()),
    ]
    for sig in (hc.BATTERY_SIG, hc.UNARY_SIG):
        got = set(hc.battery(sig, 1, CAPS).sentences)
        for w in want:
            assert w in got


def test_battery_sentences_closed_restricted_and_unique():
    for depth in range(CAPS.battery_depth + 1):
        bat = hc.battery(hc.BATTERY_SIG, depth, CAPS)
        assert len(set(bat.sentences)) == len(bat.sentences)
        for s in bat.sentences:
            assert not free_vars(s)
            assert is_restricted(s)


def test_battery_deterministic_and_monotone_in_depth():
    b2a = hc.battery(hc.BATTERY_SIG, 2, CAPS)
    b2b = hc.battery(hc.BATTERY_SIG, 2, CAPS)
    assert b2a.sentences == b2b.sentences
    b3 = hc.battery(hc.BATTERY_SIG, 3, CAPS)
    # deeper batteries extend shallower ones
    assert set(b2a.sentences) <= set(b3.sentences)


def test_battery_layer_quota_bounds_growth():
    per_layer = CAPS.battery_per_depth
    for depth in range(CAPS.battery_depth + 1):
        bat = hc.battery(hc.BATTERY_SIG, depth, CAPS)
        assert len(bat.sentences) <= per_layer * (depth + 1)


def test_diagonal_pairs_order():
    assert list(hc._diagonal_pairs(3)) == [
        (0, 0),
        (0, 1),
        (1, 0),
        (1, 1),
        (0, 2),
        (1, 2),
        (2, 0),
        (2, 1),
        (2, 2),
    ]


# --------------------------------------------------------------------------
# random families


def test_random_family_respects_caps():
    rng = random.Random(5)
    for _ in range(30):
        fam = hc.random_family(hc.BATTERY_SIG, rng, CAPS)
        sizes = {g: len(s.universe) for g, s in fam.structures.items()}
        assert all(1 <= v <= CAPS.max_structure for v in sizes.values())
        assert len(fam.ideal.omega) <= CAPS.max_omega
        assert math.prod(sizes[g] for g in fam.ideal.core) <= 16
        assert math.prod(sizes.values()) <= CAPS.max_product_points
        # every coordinate structure is valid, so the product is buildable
        reduced_product(fam)


def test_random_family_deterministic():
    a = hc.random_family(hc.BATTERY_SIG, random.Random(9), CAPS)
    b = hc.random_family(hc.BATTERY_SIG, random.Random(9), CAPS)
    assert a.ideal.omega == b.ideal.omega and a.ideal.sstar == b.ideal.sstar
    assert {g: to_json(s) for g, s in a.structures.items()} == {
        g: to_json(s) for g, s in b.structures.items()
    }


# --------------------------------------------------------------------------
# reports


def test_report_summary_and_json_shape():
    rep = hc.SuiteReport(
        "demo", 3, 2, (hc.Failure("b", "boom"), hc.Failure("a", "pow")), ("f1",), ("s1",), 1.25
    )
    assert rep.summary() == "[FAIL] demo: 2 cases, 2 failures, 1 findings, 1 skipped (seed 3)"
    doc = rep.to_json()
    assert "elapsed" not in doc and "timing" not in doc
    assert doc["failures"][0] == {"case": "b", "message": "boom"}
    assert not rep.ok


def test_suite_reports_reproducible():
    r1 = hc.suite_atomic(3, cases=40, caps=CAPS)
    r2 = hc.suite_atomic(3, cases=40, caps=CAPS)
    assert r1.ok
    assert json.dumps(r1.to_json()) == json.dumps(r2.to_json())
    f1 = hc.suite_fv(1, 0, families=8, seed=3, caps=CAPS)
    f2 = hc.suite_fv(1, 0, families=8, seed=3, caps=CAPS)
    assert f1.ok
    assert json.dumps(f1.to_json()) == json.dumps(f2.to_json())


# --------------------------------------------------------------------------
# suites


def test_suite_atomic_passes():
    rep = hc.suite_atomic(11, cases=60, caps=CAPS)
    assert rep.ok and rep.cases == 60


def test_suite_fv_small_passes_and_collects_sigmas():
    sigmas = set()
    rep = hc.suite_fv(1, 1, families=12, seed=4, caps=CAPS, collect_sigmas=sigmas)
    assert rep.ok
    assert rep.cases == len(hc.battery(hc.BATTERY_SIG, 1, CAPS).sentences)
    assert sigmas


def test_suite_fv_lists_oversize_sentences_as_skipped():
    rep = hc.suite_fv(3, 1, families=8, seed=4, caps=CAPS)
    assert rep.ok
    assert any("inf y . sup x . P(g(x,y))" in s for s in rep.skipped)
    # skipped entries carry the offending sizes
    assert all("subformulas" in s and "guard variables" in s for s in rep.skipped)


def test_suite_preservation_small_passes():
    rep = hc.suite_preservation(6, cases=6, caps=CAPS)
    assert rep.ok
    assert rep.cases == 6 * len(hc.battery(hc.BATTERY_SIG, CAPS.battery_depth, CAPS).sentences)


def test_relabel_produces_valid_isomorphic_copy():
    s = random_structure(hc.BATTERY_SIG, 3, seed=2)
    t = hc._relabel(s, [2, 0, 1], tag="q")
    assert validate(t) is None
    assert set(t.universe) == {"q0", "q1", "q2"}
    phi = parse("sup x . P(g(x,c))", hc.BATTERY_SIG)
    assert evaluate(s, phi) == evaluate(t, phi)


def test_suite_quotient_passes():
    rep = hc.suite_quotient_equiv(1, caps=CAPS)
    assert rep.ok
    # three ideal pairs, whole battery each
    assert rep.cases == 3 * len(hc.battery(hc.BATTERY_SIG, CAPS.battery_depth, CAPS).sentences)


def test_suite_fubini_passes():
    rep = hc.suite_fubini(2, cases=12, caps=CAPS)
    assert rep.ok and rep.cases == 12


def test_suite_ultraproduct_passes():
    rep = hc.suite_ultraproduct(2, cases=8, caps=CAPS)
    assert rep.ok and rep.cases == 8


# --------------------------------------------------------------------------
# matrix divisibility demonstrator


def test_prime_sequence_pair_partial_products():
    pair = hc.prime_sequence_pair((2, 5, 11), (3, 7, 13), horizon=10)
    assert pair.k_xi == (2, 10, 110)
    assert pair.k_eta == (3, 21, 273)


def test_prime_sequence_pair_rejects_bad_input():
    with pytest.raises(ValueError):
        hc.prime_sequence_pair((4, 5), (3,), 5)
    with pytest.raises(ValueError):
        hc.prime_sequence_pair((2, 5), (5, 7), 5)
    with pytest.raises(ValueError):
        hc.prime_sequence_pair((2,), (), 5)
    with pytest.raises(ValueError):
        hc.prime_sequence_pair((2,), (3,), 0)


def test_demo_divisibility_rows():
    rep = hc.demo_matrix_divisibility((2, 5, 11), (3, 7, 13), horizon=10)
    assert rep.ok
    by_prime = {r.prime: r for r in rep.rows}
    # prime at position m divides its own stages from m on and no others
    assert by_prime[2].own_indices == (1, 2, 3) and by_prime[2].other_indices == ()
    assert by_prime[5].own_indices == (2, 3) and by_prime[5].other_indices == ()
    assert by_prime[11].own_indices == (3,)
    assert by_prime[3].own_indices == (1, 2, 3)
    assert by_prime[7].own_indices == (2, 3)
    assert by_prime[13].own_indices == (3,)
    assert "divides" in rep.text and "never evaluated" in rep.text


def test_demo_horizon_truncates():
    rep = hc.demo_matrix_divisibility((2, 5, 11), (3, 7, 13), horizon=2)
    assert rep.pair.k_xi == (2, 10) and rep.pair.k_eta == (3, 21)
    assert {r.prime for r in rep.rows} == {2, 5, 3, 7}


# --------------------------------------------------------------------------
# signature inference


def test_infer_signature_recovers_shape():
    s = random_structure(hc.BATTERY_SIG, 3, seed=11)
    sig = hc._infer_signature([to_json(s)])
    assert [(p.name, p.arity) for p in sig.preds] == [("P", 1)]
    assert [(f.name, f.arity) for f in sig.funcs] == [("g", 2)]
    assert sig.consts == ("c",)
    assert validate(from_json(to_json(s), sig)) is None


def test_infer_signature_tight_enough_for_steep_tables():
    # a predicate steeper than modulus 1 must get a larger inferred bound
    doc = {
        "universe": ["a", "b"],
        "dist": [["0", "1/4"], ["1/4", "0"]],
        "preds": {"P": ["0", "1"]},
        "funcs": {},
        "consts": {},
    }
    sig = hc._infer_signature([doc])
    assert sig.preds[0].lipschitz == Fraction(4)
    assert validate(from_json(doc, sig)) is None


# --------------------------------------------------------------------------
# command line


@pytest.fixture
def files(tmp_path):
    sig = hc.UNARY_SIG
    (tmp_path / "sig.json").write_text(json.dumps(signature_to_json(sig)))
    s = random_structure(sig, 3, seed=5)
    (tmp_path / "s.json").write_text(json.dumps(to_json(s)))
    ideal = close_ideal((1, 2, 3), [{1}])
    fam = Family(ideal, {g: random_structure(sig, 2, seed=g) for g in ideal.omega})
    (tmp_path / "fam.json").write_text(json.dumps(family_to_json(fam)))
    (tmp_path / "ideal.json").write_text(
        json.dumps({"omega": ["1", "2"], "generators": [["1"]]})
    )
    return tmp_path, sig, s, fam


def test_cli_translate_roundtrip(files, capsys):
    tmp, sig, _, _ = files
    assert hc.cli(["translate", "--formula", "sup x . P(x)", "--n", "1", "--sig", str(tmp / "sig.json")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["n"] == 1 and doc["m"] == 3
    assert len(doc["sigmas"]) == 3 and len(doc["psis"]) == 3
    assert doc["psis"][0] == "sup x . P(x)"
    assert doc["slack"]["t"] == [1, 1, 1]


def test_cli_translate_requires_sig(files):
    assert hc.cli(["translate", "--formula", "P(c)", "--n", "0"]) == 2


def test_cli_translate_rejects_over_cap(files):
    tmp = files[0]
    assert hc.cli(["translate", "--formula", "P(c)", "--n", "7", "--sig", str(tmp / "sig.json")]) == 2


def test_cli_translate_rejects_oversize_formula(files):
    tmp = files[0]
    rc = hc.cli(
        ["translate", "--formula", "inf y . sup x . d(g(x),g(y))", "--n", "2", "--sig", str(tmp / "sig.json")]
    )
    assert rc == 2


def test_cli_translate_parse_error(files):
    tmp = files[0]
    assert hc.cli(["translate", "--formula", "sup x .", "--n", "0", "--sig", str(tmp / "sig.json")]) == 2


def test_cli_eval_matches_library(files, capsys):
    tmp, sig, s, _ = files
    assert hc.cli(["eval", "--formula", "P(c)", "--structure", str(tmp / "s.json")]) == 0
    printed = capsys.readouterr().out.strip()
    assert printed == format_fraction(evaluate(s, parse("P(c)", sig)))
    # explicit signature gives the same value
    assert hc.cli(["eval", "--formula", "P(c)", "--structure", str(tmp / "s.json"), "--sig", str(tmp / "sig.json")]) == 0
    assert capsys.readouterr().out.strip() == printed


def test_cli_eval_rejects_free_variables(files):
    tmp = files[0]
    assert hc.cli(["eval", "--formula", "P(x)", "--structure", str(tmp / "s.json")]) == 2


def test_cli_eval_rejects_invalid_structure(files, tmp_path):
    # asymmetric distance table: inference succeeds, validation must not
    doc = {
        "universe": ["a", "b"],
        "dist": [["0", "1/4"], ["1/2", "0"]],
        "preds": {"P": ["0", "1/8"]},
        "funcs": {},
        "consts": {},
    }
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert hc.cli(["eval", "--formula", "0", "--structure", str(bad)]) == 2


def test_cli_rp_family(files, capsys):
    tmp = files[0]
    assert hc.cli(["rp", "--family", str(tmp / "fam.json")]) == 0
    doc = json.loads(capsys.readouterr().out)
    # ideal cl{{1}} on three 2-point coordinates: classes keyed by coordinates 2 and 3
    assert len(doc["universe"]) == 4
    assert len(doc["class_map"]) == 8


def test_cli_rp_power(files, capsys):
    tmp = files[0]
    rc = hc.cli(["rp", "--structure", str(tmp / "s.json"), "--ideal", str(tmp / "ideal.json")])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    # principal max ideal over two coordinates: the power collapses to coordinate 2
    assert len(doc["universe"]) == 3
    assert len(doc["class_map"]) == 9


def test_cli_rp_needs_inputs(files):
    assert hc.cli(["rp"]) == 2


def test_cli_rp_product_cap_env(files, monkeypatch):
    tmp = files[0]
    monkeypatch.setenv("FV_MAX_PRODUCT_POINTS", "2")
    assert hc.cli(["rp", "--family", str(tmp / "fam.json")]) == 2
    monkeypatch.setenv("FV_MAX_PRODUCT_POINTS", "100")
    assert hc.cli(["rp", "--family", str(tmp / "fam.json")]) == 0


def test_cli_check_writes_reproducible_report(files, tmp_path, capsys):
    out1 = tmp_path / "r1.json"
    out2 = tmp_path / "r2.json"
    assert hc.cli(["check", "--suite", "fubini", "--seed", "5", "--out", str(out1)]) == 0
    assert hc.cli(["check", "--suite", "fubini", "--seed", "5", "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    summary = capsys.readouterr().out
    assert "[PASS] fubini" in summary


def test_cli_check_quotient(files, capsys):
    assert hc.cli(["check", "--suite", "quotient", "--seed", "5"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] quotient" in out and "[PASS] ultraproduct" in out


def test_cli_demo(files, capsys):
    assert hc.cli(["demo"]) == 0
    out = capsys.readouterr().out
    assert "prime 5" in out and "ok" in out


def test_cli_usage_errors(files):
    assert hc.cli(["frobnicate"]) == 2
    assert hc.cli([]) == 2
    assert hc.cli(["eval", "--formula", "0", "--structure", "/nonexistent.json"]) == 2


def test_cli_help_exits_zero(files):
    assert hc.cli(["--help"]) == 0
