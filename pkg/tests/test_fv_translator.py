import itertools
from fractions import Fraction

import pytest

from fvlogic import fv_translator as fv
from fvlogic.boolean_ideals import (
    BAnd,
    BCompl,
    BNot,
    BOne,
    BOr,
    BVar,
    GuardedExists,
    NotZero,
    b_false,
    ba_eval,
    close_ideal,
    expand_guarded,
    quotient,
    trivial_ideal,
)
from fvlogic.fv_translator import (
    certify,
    certify_sequence,
    count_atoms,
    fv_bounds,
    level_sets,
    mutate_ds,
    mutate_sigma,
    pad_shift_check,
    translate,
    translation_cost,
    yname,
    zname,
)
from fvlogic.reduced_products import Family
from fvlogic.structures import FiniteStructure, random_structure
from fvlogic.syntax import (
    Atomic,
    Const,
    Dist,
    Half,
    Inf,
    Min,
    Monus,
    One,
    PredSym,
    Signature,
    Sup,
    Var,
    Zero,
    normalize_restricted,
)

PSIG = Signature(preds=(PredSym("P", 1, Fraction(1)),), consts=("c",))
PQSIG = Signature(preds=(PredSym("P", 1, Fraction(1)), PredSym("Q", 1, Fraction(1))))

P_x = Atomic("P", (Var("x"),))
Q_x = Atomic("Q", (Var("x"),))
C = Const("c")
P_c = Atomic("P", (C,))


def nz(j, i):
    return NotZero(BVar(yname(j, i)))


def pt(v):
    """One-point structure interpreting P as the constant v."""
    return FiniteStructure(
        PSIG,
        ("o",),
        {("o", "o"): Fraction(0)},
        {"P": {("o",): v}},
        consts={"c": "o"},
    )


def value_family(ideal):
    vals = {1: Fraction(9, 10), 2: Fraction(1, 5), 3: Fraction(1, 2)}
    return Family(ideal, {g: pt(v) for g, v in vals.items()})


def random_family(sig, ideal, sizes, seed):
    structs = {g: random_structure(sig, size, seed + k) for k, (g, size) in enumerate(zip(ideal.omega, sizes))}
    return Family(ideal, structs)


def first_point(fam):
    return tuple(fam.structures[g].universe[0] for g in fam.ideal.omega)


# --------------------------------------------------------------------------
# base cases


def test_atomic_sequence():
    ds = translate(P_x, 1)
    assert ds.n == 1 and ds.m == 1 and ds.levels == 3
    assert ds.freevars == ("x",)
    assert ds.psis == (P_x,)
    assert ds.sigmas == (nz(0, 0), nz(0, 1), nz(0, 2))
    assert ds.t == ds.s == ds.tm == (0, 0, 0)
    assert ds.sm == (1, 1, 1)
    assert ds.zmax == 0


def test_dist_sequence():
    f = Dist(Var("x"), Var("y"))
    ds = translate(f, 0)
    assert ds.freevars == ("x", "y")
    assert ds.psis == (f,)
    assert ds.sigmas == (nz(0, 0), nz(0, 1))
    assert ds.sm == (1, 1)


def test_zero_sequence():
    ds = translate(Zero(), 1)
    assert ds.sigmas == (b_false(), b_false(), b_false())
    assert ds.psis == (Zero(),)
    assert ds.t == ds.s == ds.tm == ds.sm == (0, 0, 0)


def test_one_sequence():
    ds = translate(One(), 1)
    assert ds.sigmas == (nz(0, 0), nz(0, 1), nz(0, 2))
    assert ds.psis == (One(),)
    assert ds.t == ds.s == ds.tm == ds.sm == (0, 0, 0)


def test_memo_returns_same_object():
    assert translate(P_x, 1) is translate(P_x, 1)


def test_translate_rejects_derived_and_bad_precision():
    with pytest.raises(ValueError):
        translate(Min(P_x, Q_x), 1)
    with pytest.raises(ValueError):
        translate(P_x, -1)


# --------------------------------------------------------------------------
# halving


def test_half_inherits_lows_and_shifts_top():
    ds = translate(Half(P_x), 1)
    assert ds.psis == (Half(P_x),)
    assert ds.sigmas == (nz(0, 0), nz(0, 1), nz(0, 2))
    assert ds.t == (0, 0, 1)
    assert ds.s == (0, 0, 0)
    assert ds.tm == (0, 0, 0)
    assert ds.sm == (1, 1, 0)


def test_half_top_slacks_grow_with_the_shift():
    ds = translate(Half(P_x), 2)
    assert ds.m == 1 and ds.levels == 5
    assert ds.sigmas == tuple(nz(0, i) for i in range(5))
    assert ds.t == (0, 0, 0, 1, 2)
    assert ds.tm == (0, 0, 0, 0, 1)
    assert ds.s == (0, 0, 0, 0, 0)
    assert ds.sm == (1, 1, 1, 0, 0)


def test_half_at_precision_zero():
    ds = translate(Half(P_x), 0)
    assert ds.sigmas == (nz(0, 0), nz(0, 1))
    assert ds.psis == (Half(P_x),)
    assert ds.t == (0, 1)
    assert ds.s == (0, 0)
    assert ds.tm == (0, 0)
    assert ds.sm == (1, 0)


# --------------------------------------------------------------------------
# truncated subtraction


def test_monus_sigmas_and_slacks():
    ds = translate(Monus(P_x, Q_x), 1)
    assert ds.psis == (P_x, Monus(One(), Q_x))

    def flip(i):
        return NotZero(BCompl(BVar(yname(1, i))))
    assert ds.sigmas[2] == BOr((BAnd((nz(0, 2), BNot(flip(2)))),))
    assert ds.sigmas[1] == BOr(
        (
            BAnd((nz(0, 1), BNot(flip(2)))),
            BAnd((nz(0, 2), BNot(flip(1)))),
        )
    )
    assert ds.sigmas[0] == BOr(
        (
            BAnd((nz(0, 0), BNot(flip(2)))),
            BAnd((nz(0, 1), BNot(flip(1)))),
            BAnd((nz(0, 2), BNot(flip(0)))),
        )
    )
    assert ds.t == (0, 0, 0)
    assert ds.tm == (1, 1, 1)
    assert ds.s == (1, 1, 1)
    assert ds.sm == (3, 3, 3)


# --------------------------------------------------------------------------
# suprema


def test_sup_profile_enumeration():
    assert fv._sup_profiles(1, 1) == [(0,), (1,), (2,)]
    assert fv._sup_profiles(2, 0) == [
        (0, -1),
        (-1, 0),
        (-1, 1),
        (0, 0),
        (0, 1),
        (1, -1),
        (1, 0),
        (1, 1),
    ]


def test_sup_sequence_shape():
    ds = translate(Sup("x", P_x), 1)
    assert ds.freevars == ()
    assert ds.psis == (
        Sup("x", P_x),
        Sup("x", Monus(P_x, Half(One()))),
        Sup("x", Monus(P_x, One())),
    )
    assert ds.zmax == 1
    assert ds.t == (1, 1, 1)
    assert ds.s == (0, 0, 0)
    assert ds.tm == (0, 0, 0)
    assert ds.sm == (1, 1, 1)

    zvars = (zname(0, 0), zname(0, 1))
    bounds = (
        ((zname(0, 0),), BVar(yname(0, 1))),
        ((zname(0, 1),), BVar(yname(1, 1))),
    )
    assert ds.sigmas[0] == GuardedExists(zvars, bounds, NotZero(BOne()))
    assert ds.sigmas[1] == GuardedExists(zvars, bounds, NotZero(BVar(zname(0, 0))))
    assert ds.sigmas[2] == GuardedExists(zvars, bounds, NotZero(BVar(zname(0, 1))))


def test_sup_guard_agrees_with_raw_expansion():
    ds = translate(Sup("x", P_x), 1)
    B = quotient(trivial_ideal((1, 2)))
    names = (yname(0, 1), yname(1, 1))
    for sig in ds.sigmas:
        raw = expand_guarded(sig)
        for combo in itertools.product(B.elements, repeat=2):
            env = dict(zip(names, combo))
            assert ba_eval(B, sig, env) == ba_eval(B, raw, env)


def test_nested_sup_allocates_fresh_guard_block():
    f = Sup("x", Sup("y", Dist(Var("x"), Var("y"))))
    ds = translate(f, 0)
    assert ds.m == 8
    assert ds.zmax == 3
    inner = translate(Sup("y", Dist(Var("x"), Var("y"))), 0)
    assert inner.zmax == 1
    assert all(isinstance(s, GuardedExists) for s in ds.sigmas)
    # the outer block must not reuse the inner block's z-indices
    outer_names = {v for s in ds.sigmas for v in s.zvars}
    assert outer_names == {zname(1, 0), zname(2, 0)}


# --------------------------------------------------------------------------
# cost estimation


COST_CASES = [
    (P_x, 1, 1, 0),
    (Zero(), 1, 1, 0),
    (Half(P_x), 1, 1, 0),
    (Monus(P_x, Q_x), 1, 2, 0),
    (Sup("x", P_x), 1, 3, 2),
    (Sup("x", P_x), 0, 2, 1),
    (Inf("x", P_x), 1, 16, 4),
    (Sup("x", Monus(P_x, Q_x)), 1, 15, 4),
    (Sup("x", Sup("y", Dist(Var("x"), Var("y")))), 0, 8, 2),
    (Sup("x", Min(P_x, Dist(Var("x"), Var("x")))), 0, 26, 3),
]


@pytest.mark.parametrize("f,n,m,g", COST_CASES)
def test_translation_cost_matches_emitted(f, n, m, g):
    assert translation_cost(f, n) == (m, g)
    ds = translate(normalize_restricted(f), n)
    assert ds.m == m


# --------------------------------------------------------------------------
# level sets and window extraction


def test_level_sets_oracle():
    fam = value_family(trivial_ideal((1, 2, 3)))
    ds = translate(P_c, 1)
    ls = level_sets(ds, fam, {})
    assert ls.strict[0] == (frozenset({1, 2, 3}), frozenset({1}), frozenset())
    assert ls.weak[0] == (frozenset({1, 2, 3}), frozenset({1, 3}), frozenset())


def test_level_sets_rejects_wrong_assignment():
    fam = value_family(trivial_ideal((1, 2, 3)))
    ds = translate(P_c, 1)
    with pytest.raises(ValueError):
        level_sets(ds, fam, {"x": ("o", "o", "o")})


def test_fv_bounds_oracle():
    fam = value_family(close_ideal((1, 2, 3), [{1}]))
    b = fv_bounds(P_c, 1, fam, {})
    assert b.lower_strict == Fraction(0)
    assert b.ell_tilde == 1
    assert b.upper == Fraction(1)
    assert b.cert_lower == Fraction(0)
    assert b.cert_upper == Fraction(1)


def test_fv_bounds_trivial_ideal_tightens():
    fam = value_family(trivial_ideal((1, 2, 3)))
    b = fv_bounds(P_c, 1, fam, {})
    assert b.lower_strict == Fraction(1, 2)
    assert b.ell_tilde == 1
    assert b.upper == Fraction(1)
    assert b.cert_lower == Fraction(1, 2)


# --------------------------------------------------------------------------
# certification


def test_certify_value_example():
    fam = value_family(close_ideal((1, 2, 3), [{1}]))
    cr = certify(P_c, 1, fam, {})
    assert cr.ok and cr.counterexample is None
    assert cr.direct == Fraction(1, 2)
    assert cr.findings == ()


SENTENCES = [
    P_c,
    Dist(C, C),
    Zero(),
    One(),
    Half(P_c),
    Half(Half(P_c)),
    Monus(P_c, Half(One())),
    Monus(One(), P_c),
    Sup("x", P_x),
    Inf("x", P_x),
    Half(Sup("x", P_x)),
    Monus(Sup("x", P_x), Half(One())),
    Sup("x", Half(Dist(Var("x"), C))),
]


@pytest.mark.parametrize("f", SENTENCES)
@pytest.mark.parametrize("n", [0, 1])
def test_certify_sentences(f, n):
    for seed, gens in ((3, []), (4, [{1}])):
        ideal = close_ideal((1, 2), gens)
        fam = random_family(PSIG, ideal, (2, 2), seed)
        cr = certify(f, n, fam, {})
        assert cr.ok, cr.counterexample
        assert cr.bounds.cert_lower < cr.direct <= cr.bounds.cert_upper


def test_certify_open_formula():
    ideal = close_ideal((1, 2, 3), [{2}])
    fam = random_family(PQSIG, ideal, (2, 3, 2), 11)
    abar = {"x": first_point(fam)}
    for f in (P_x, Monus(P_x, Q_x), Half(Q_x)):
        cr = certify(f, 1, fam, abar)
        assert cr.ok, cr.counterexample


def test_certify_nested_sup():
    fam = random_family(PSIG, trivial_ideal((1, 2)), (2, 2), 7)
    cr = certify(Sup("x", Sup("y", Half(Dist(Var("x"), Var("y"))))), 0, fam, {})
    assert cr.ok, cr.counterexample


@pytest.mark.parametrize("seed", range(8))
def test_certify_random_families(seed):
    import random

    rng = random.Random(seed)
    omega = tuple(range(1, rng.choice((2, 3)) + 1))
    proper = [g for g in omega if rng.random() < 0.5]
    if len(proper) == len(omega):
        proper = proper[:-1]
    ideal = close_ideal(omega, [proper] if proper else [])
    # keep the full product within the induced-universe cap
    size_pool = (1, 2, 3) if len(omega) == 2 else (1, 2)
    fam = random_family(PSIG, ideal, tuple(rng.choice(size_pool) for _ in omega), seed + 100)
    f = rng.choice(SENTENCES)
    n = rng.choice((0, 1))
    cr = certify(f, n, fam, {})
    assert cr.ok, (f, n, cr.counterexample)


# --------------------------------------------------------------------------
# pad-and-shift behaviour


def test_pad_shift_holds_for_atomic_chain():
    B = quotient(trivial_ideal((1, 2)))
    for f, n in ((P_x, 1), (Zero(), 1), (One(), 1), (Half(P_x), 1), (Half(Half(P_x)), 2)):
        assert pad_shift_check(translate(f, n), B)


def test_pad_shift_fails_for_monus_and_sup():
    # a 0/1 assignment separates sigma_0 from the padded sigma_1 in
    # both shapes, so these are genuine non-identities, not tolerances
    B = quotient(trivial_ideal((1, 2)))
    assert not pad_shift_check(translate(Monus(P_x, Q_x), 1), B)
    assert not pad_shift_check(translate(Sup("x", P_x), 1), B)


# --------------------------------------------------------------------------
# mutation detection


def test_count_and_mutate_atoms():
    ds = translate(P_x, 1)
    assert count_atoms(ds.sigmas[0]) == 1
    mutated = mutate_sigma(ds.sigmas[0], 0)
    B = quotient(trivial_ideal((1, 2)))
    full = B.class_of(frozenset({1, 2}))
    env = {yname(0, 0): full}
    assert ba_eval(B, ds.sigmas[0], env)
    assert not ba_eval(B, mutated, env)
    with pytest.raises(ValueError):
        mutate_sigma(ds.sigmas[0], 1)


def test_mutated_sequence_is_rejected():
    fam = value_family(close_ideal((1, 2, 3), [{1}]))
    ds = translate(P_c, 1)
    bad = mutate_ds(ds, 0, 0)
    cr = certify_sequence(bad, P_c, fam, {})
    assert not cr.ok
    assert cr.counterexample is not None


def test_mutation_in_guarded_sigma_detected():
    # direct value sits exactly on a level boundary here, so an
    # inflated top sigma trips the strict check
    fam = value_family(close_ideal((1, 2, 3), [{1}]))
    f = Sup("x", P_c)
    ds = translate(normalize_restricted(f), 1)
    hits = 0
    for ell in range(ds.levels):
        for k in range(count_atoms(ds.sigmas[ell])):
            bad = mutate_ds(ds, ell, k)
            if not certify_sequence(bad, f, fam, {}).ok:
                hits += 1
    assert hits > 0
