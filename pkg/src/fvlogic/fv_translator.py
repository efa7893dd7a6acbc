"""Compile restricted formulas into determining sequences.

A determining sequence for a formula at precision n is a list of
monotone Boolean-algebra formulas sigma_0..sigma_{2^n} over variables
y[j][i], together with subformulas psi_0..psi_{m-1}. Evaluating the
sigmas on the quotient classes of the threshold sets of the psis pins
the reduced-product value of the formula inside a window of width
about 2^{-n}.

Each sequence also carries four integer slack vectors (t, s, tm, sm),
one entry per level, that widen the literal window so that every
implication below is sound for the compiled output; the certify
checks exercise them with exact arithmetic:

  A  sigma_l on strict sets   ->  value > (l - t[l]) / 2^n
  B  value > (l + s[l]) / 2^n ->  sigma_l on weak sets
  C  sigma_l on weak sets     ->  value > (l - 1 - tm[l]) / 2^n
  E  sigma_l on (1, strict sets shifted up one level)
                              ->  value > (l - 1 - tm[l]) / 2^n
  F  value > (l + sm[l]) / 2^n -> sigma_l on (weak sets shifted down
                                  one level, empty top)

All-zero t, s, tm means the literal window holds; sm = 0 additionally
makes the shifted form exact.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import reduce
from typing import Mapping, Optional, Sequence

from .boolean_ideals import (
    BAnd,
    BCompl,
    BNot,
    BOne,
    BOr,
    BVar,
    BZero,
    BooleanFormula,
    GuardedExists,
    NotZero,
    QuotientBA,
    TermEq,
    TermLe,
    b_false,
    ba_eval,
    expand_guarded,
    free_bvars,
    quotient,
    subst_bvars,
)
from .reduced_products import Family, ReducedProduct, project, reduced_product
from .structures import evaluate
from .syntax import (
    Atomic,
    Dist,
    DyadicConst,
    Formula,
    Half,
    Inf,
    Min,
    Monus,
    One,
    Sup,
    Zero,
    free_vars,
    is_restricted,
    normalize_restricted,
)


def yname(j: int, i: int) -> str:
    return f"y[{j}][{i}]"


def zname(k: int, i: int) -> str:
    return f"z[{k}][{i}]"


_YVAR = re.compile(r"^y\[(\d+)\]\[(\d+)\]$")


@dataclass(frozen=True)
class DeterminingSequence:
    n: int
    freevars: tuple[str, ...]
    sigmas: tuple[BooleanFormula, ...]
    psis: tuple[Formula, ...]
    t: tuple[int, ...]
    s: tuple[int, ...]
    tm: tuple[int, ...]
    sm: tuple[int, ...]
    zmax: int

    def __post_init__(self) -> None:
        L = 2**self.n + 1
        for name, vec in (("sigmas", self.sigmas), ("t", self.t), ("s", self.s), ("tm", self.tm), ("sm", self.sm)):
            if len(vec) != L:
                raise ValueError(f"{name} must have {L} entries")
        for psi in self.psis:
            if not is_restricted(psi):
                raise ValueError("every subformula must be restricted")
            if not set(free_vars(psi)) <= set(self.freevars):
                raise ValueError("subformula mentions a variable outside the scope")

    @property
    def m(self) -> int:
        return len(self.psis)

    @property
    def levels(self) -> int:
        return 2**self.n + 1


_MEMO: dict[tuple[Formula, int], DeterminingSequence] = {}


def _zero_vec(L: int) -> tuple[int, ...]:
    return (0,) * L


def _reads_only_level0(sigma: BooleanFormula) -> bool:
    for v in free_bvars(sigma):
        m = _YVAR.match(v)
        if m and int(m.group(2)) != 0:
            return False
    return True


def translate(f: Formula, n: int) -> DeterminingSequence:
    """Structural recursion over the restricted connectives; memoized."""
    if n < 0:
        raise ValueError("precision must be nonnegative")
    key = (f, n)
    hit = _MEMO.get(key)
    if hit is not None:
        return hit
    ds = _translate(f, n)
    _MEMO[key] = ds
    return ds


def _translate(f: Formula, n: int) -> DeterminingSequence:
    L = 2**n + 1
    fv = tuple(free_vars(f))

    if isinstance(f, (Atomic, Dist)):
        sigmas = tuple(NotZero(BVar(yname(0, i))) for i in range(L))
        return DeterminingSequence(n, fv, sigmas, (f,), _zero_vec(L), _zero_vec(L), _zero_vec(L), (1,) * L, 0)

    if isinstance(f, Zero):
        sigmas = tuple(b_false() for _ in range(L))
        return DeterminingSequence(n, fv, sigmas, (Zero(),), _zero_vec(L), _zero_vec(L), _zero_vec(L), _zero_vec(L), 0)

    if isinstance(f, One):
        # the constant 1 exceeds i/2^n exactly for i < 2^n, so the
        # atomic sigma shape reads the right sets here as well
        sigmas = tuple(NotZero(BVar(yname(0, i))) for i in range(L))
        return DeterminingSequence(n, fv, sigmas, (One(),), _zero_vec(L), _zero_vec(L), _zero_vec(L), _zero_vec(L), 0)

    if isinstance(f, Half):
        return _translate_half(f, n, fv)

    if isinstance(f, Monus):
        return _translate_monus(f, n, fv)

    if isinstance(f, Sup):
        return _translate_sup(f, n, fv)

    if isinstance(f, Inf):
        rewritten = Monus(One(), Sup(f.var, Monus(One(), f.body)))
        ds = translate(rewritten, n)
        return replace(ds, freevars=fv)

    raise ValueError(f"cannot translate {type(f).__name__}; normalize derived connectives first")


def _ceil_half(a: int) -> int:
    return (a + 1) // 2


def _translate_half(f: Half, n: int, fv: tuple[str, ...]) -> DeterminingSequence:
    if n == 0:
        child = translate(f.body, 0)
        psis = tuple(Half(p) for p in child.psis)
        s0 = _ceil_half(child.s[0])
        if not _reads_only_level0(child.sigmas[0]):
            # the parent's weak level-1 sets are empty while the child's
            # need not be, so a level-1 read invalidates the inherited
            # weak guarantee; bumping the slack past 1/2^0 makes B vacuous
            s0 = max(1, s0)
        t = (_ceil_half(child.t[0]), _ceil_half(1 + child.t[1]))
        tm = (max(0, _ceil_half(child.tm[0] - 1)), _ceil_half(child.tm[1]))
        return DeterminingSequence(0, fv, child.sigmas, psis, t, (s0, 0), tm, (1, 0), child.zmax)

    child = translate(f.body, n - 1)
    H = 2 ** (n - 1)
    sigmas = list(child.sigmas)
    t = list(child.t)
    s = list(child.s)
    tm = list(child.tm)
    sm = list(child.sm)
    top = child.sigmas[H]
    for r in range(1, H + 1):
        shift = {
            yname(j, i): BVar(yname(j, i + r))
            for j in range(child.m)
            for i in range(H + 1)
        }
        sigmas.append(subst_bvars(top, shift))
        t.append(child.t[H] + r)
        tm.append(child.t[H] + r - 1)
        s.append(0)
        sm.append(0)
    psis = tuple(Half(p) for p in child.psis)
    return DeterminingSequence(n, fv, tuple(sigmas), psis, tuple(t), tuple(s), tuple(tm), tuple(sm), child.zmax)


def _translate_monus(f: Monus, n: int, fv: tuple[str, ...]) -> DeterminingSequence:
    ds1 = translate(f.left, n)
    ds2 = translate(f.right, n)
    N = 2**n
    m1 = ds1.m
    flip = {
        yname(j, i): BCompl(BVar(yname(m1 + j, N - i)))
        for j in range(ds2.m)
        for i in range(N + 1)
    }
    flipped2 = [subst_bvars(sig, flip) for sig in ds2.sigmas]
    sigmas = []
    t = []
    tm = []
    for k in range(N + 1):
        parts = tuple(
            BAnd((ds1.sigmas[i0], BNot(flipped2[i0 - k]))) for i0 in range(k, N + 1)
        )
        sigmas.append(BOr(parts))
        t.append(max(ds1.t[i0] + ds2.s[i0 - k] for i0 in range(k, N + 1)))
        tm.append(max(ds1.tm[i0] + ds2.sm[i0 - k] for i0 in range(k, N + 1)))
    s_scalar = max(ds1.s) + max(ds2.t) + 1
    sm_scalar = max(ds1.sm) + max(ds2.tm) + 2
    psis = ds1.psis + tuple(Monus(One(), p) for p in ds2.psis)
    return DeterminingSequence(
        n, fv, tuple(sigmas), psis,
        tuple(t), (s_scalar,) * (N + 1), tuple(tm), (sm_scalar,) * (N + 1),
        max(ds1.zmax, ds2.zmax),
    )


def _sup_profiles(mc: int, n: int) -> list[tuple[int, ...]]:
    """Demand profiles: tuples over {-1..2^n}, entry -1 meaning no
    demand on that subformula; singletons with demand 0 come first."""
    N = 2**n
    singles = [tuple(0 if j == k else -1 for j in range(mc)) for k in range(mc)]
    seen = set(singles)
    out = list(singles)
    for enc in itertools.product(range(-1, N + 1), repeat=mc):
        if all(x < 0 for x in enc) or enc in seen:
            continue
        out.append(enc)
    return out


def _translate_sup(f: Sup, n: int, fv: tuple[str, ...]) -> DeterminingSequence:
    child = translate(f.body, n)
    mc = child.m
    N = 2**n
    K = child.zmax
    profiles = _sup_profiles(mc, n)
    idx = {enc: p for p, enc in enumerate(profiles)}

    psis = []
    for enc in profiles:
        parts = [
            child.psis[j] if enc[j] == 0 else Monus(child.psis[j], DyadicConst(enc[j], n))
            for j in range(mc)
            if enc[j] >= 0
        ]
        psis.append(normalize_restricted(Sup(f.var, reduce(Min, parts))))

    zvars = tuple(zname(K + j, p) for j in range(mc) for p in range(N))
    bounds = []
    for enc in itertools.product(range(-1, N), repeat=mc):
        if all(x < 0 for x in enc):
            continue
        meet_vars = tuple(zname(K + j, enc[j]) for j in range(mc) if enc[j] >= 0)
        bounds.append((meet_vars, BVar(yname(idx[enc], 1))))
    body_table = {yname(j, 0): BOne() for j in range(mc)}
    for j in range(mc):
        for i in range(1, N + 1):
            body_table[yname(j, i)] = BVar(zname(K + j, i - 1))

    sigmas = tuple(
        GuardedExists(zvars, tuple(bounds), subst_bvars(sig, body_table))
        for sig in child.sigmas
    )
    t = tuple(x + 1 for x in child.tm)
    return DeterminingSequence(n, fv, sigmas, tuple(psis), t, child.s, child.tm, child.sm, K + mc)


# --------------------------------------------------------------------------
# cost estimation (used to gate batteries before translating)


def translation_cost(f: Formula, n: int) -> tuple[int, int]:
    """(number of subformulas, widest guarded block) of translate(f, n)
    without building it; the first component matches len(psis) exactly."""
    return _cost(normalize_restricted(f), n)


def _cost(f: Formula, n: int) -> tuple[int, int]:
    if isinstance(f, (Atomic, Dist, Zero, One)):
        return 1, 0
    if isinstance(f, Half):
        return _cost(f.body, max(0, n - 1))
    if isinstance(f, Monus):
        m1, g1 = _cost(f.left, n)
        m2, g2 = _cost(f.right, n)
        return m1 + m2, max(g1, g2)
    if isinstance(f, Sup):
        mc, gc = _cost(f.body, n)
        return (2**n + 2) ** mc - 1, max(gc, mc * 2**n)
    if isinstance(f, Inf):
        return _cost(Monus(One(), Sup(f.var, Monus(One(), f.body))), n)
    raise ValueError(f"cannot estimate {type(f).__name__}")


# --------------------------------------------------------------------------
# level sets and bound extraction


@dataclass(frozen=True)
class LevelSets:
    strict: tuple[tuple[frozenset, ...], ...]
    weak: tuple[tuple[frozenset, ...], ...]


def level_sets(ds: DeterminingSequence, fam: Family, abar: Mapping[str, tuple]) -> LevelSets:
    """Threshold sets of each subformula along the family, strict (>)
    and weak (>=), from exact coordinatewise evaluation."""
    if set(abar) != set(ds.freevars):
        raise ValueError(f"assignment must cover exactly {ds.freevars}")
    omega = fam.ideal.omega
    N = 2**ds.n
    strict = []
    weak = []
    for psi in ds.psis:
        names = free_vars(psi)
        vals = {}
        for i, g in enumerate(omega):
            env = {v: abar[v][i] for v in names}
            vals[g] = evaluate(fam.structures[g], psi, env)
        strict.append(tuple(frozenset(g for g in omega if vals[g] > Fraction(i, N)) for i in range(N + 1)))
        weak.append(tuple(frozenset(g for g in omega if vals[g] >= Fraction(i, N)) for i in range(N + 1)))
    return LevelSets(tuple(strict), tuple(weak))


@dataclass(frozen=True)
class FVBounds:
    lower_strict: Optional[Fraction]
    ell_tilde: Optional[int]
    upper: Fraction
    cert_lower: Fraction
    cert_upper: Fraction


def _profile_env(B: QuotientBA, sets_by_block: Sequence[Sequence[frozenset]]) -> dict[str, frozenset]:
    env = {}
    for j, row in enumerate(sets_by_block):
        for i, X in enumerate(row):
            env[yname(j, i)] = B.class_of(X)
    return env


def _sigma_verdicts(ds: DeterminingSequence, B: QuotientBA, env: Mapping[str, frozenset]) -> list[bool]:
    return [ba_eval(B, sig, env) for sig in ds.sigmas]


def fv_bounds(
    f: Formula,
    n: int,
    fam: Family,
    abar: Mapping[str, tuple],
    ds: Optional[DeterminingSequence] = None,
) -> FVBounds:
    """Window for the reduced-product value of f read off the sigmas.

    lower_strict, ell_tilde and upper use the literal level fractions;
    cert_lower and cert_upper apply the slack vectors and are the
    guaranteed enclosure."""
    if ds is None:
        ds = translate(normalize_restricted(f), n)
    B = quotient(fam.ideal)
    ls = level_sets(ds, fam, abar)
    N = 2**n
    sat_strict = _sigma_verdicts(ds, B, _profile_env(B, ls.strict))
    sat_weak = _sigma_verdicts(ds, B, _profile_env(B, ls.weak))

    strict_true = [l for l in range(N + 1) if sat_strict[l]]
    weak_true = [l for l in range(N + 1) if sat_weak[l]]
    weak_false = [l for l in range(N + 1) if not sat_weak[l]]

    lower_strict = Fraction(max(strict_true), N) if strict_true else None
    ell_tilde = max(weak_true) if weak_true else None
    upper = min((Fraction(l, N) for l in weak_false), default=Fraction(1))

    cert_lower = Fraction(-1)
    for l in strict_true:
        cert_lower = max(cert_lower, Fraction(l - ds.t[l], N))
    for l in weak_true:
        cert_lower = max(cert_lower, Fraction(l - 1 - ds.tm[l], N))
    cert_upper = min((Fraction(l + ds.s[l], N) for l in weak_false), default=Fraction(1))
    cert_upper = min(cert_upper, Fraction(1))
    return FVBounds(lower_strict, ell_tilde, upper, cert_lower, cert_upper)


# --------------------------------------------------------------------------
# certification


@dataclass(frozen=True)
class Finding:
    kind: str
    ell: Optional[int]
    detail: str


@dataclass(frozen=True)
class Counterexample:
    check: str
    ell: int
    direct: Fraction
    threshold: Fraction
    detail: str


@dataclass(frozen=True)
class CertifyResult:
    ok: bool
    counterexample: Optional[Counterexample]
    findings: tuple[Finding, ...]
    bounds: FVBounds
    direct: Fraction
    ds: DeterminingSequence


def certify(
    f: Formula,
    n: int,
    fam: Family,
    abar: Mapping[str, tuple],
    rp: Optional[ReducedProduct] = None,
) -> CertifyResult:
    """Check every implication the compiled sequence promises against
    brute-force evaluation in the reduced product; exact arithmetic."""
    ds = translate(normalize_restricted(f), n)
    return certify_sequence(ds, f, fam, abar, rp=rp)


def certify_sequence(
    ds: DeterminingSequence,
    f: Formula,
    fam: Family,
    abar: Mapping[str, tuple],
    rp: Optional[ReducedProduct] = None,
) -> CertifyResult:
    """Same checks as certify but on an explicitly supplied sequence,
    so corrupted sequences can be run against the honest value."""
    n = ds.n
    B = quotient(fam.ideal)
    ls = level_sets(ds, fam, abar)
    N = 2**n
    omega_set = frozenset(fam.ideal.omega)
    empty = frozenset()

    if rp is None:
        rp = reduced_product(fam)
    env = {v: project(rp, abar[v]) for v in ds.freevars}
    direct = evaluate(rp.structure, f, env)

    sat_strict = _sigma_verdicts(ds, B, _profile_env(B, ls.strict))
    sat_weak = _sigma_verdicts(ds, B, _profile_env(B, ls.weak))
    augmented = [(omega_set,) + row[:-1] for row in ls.strict]
    shifted = [row[1:] + (empty,) for row in ls.weak]
    sat_aug = _sigma_verdicts(ds, B, _profile_env(B, augmented))
    sat_shift = _sigma_verdicts(ds, B, _profile_env(B, shifted))

    bounds = fv_bounds(f, n, fam, abar, ds=ds)

    cx: Optional[Counterexample] = None

    def fail(check: str, l: int, threshold: Fraction, detail: str) -> Counterexample:
        return Counterexample(check, l, direct, threshold, detail)

    for l in range(N + 1):
        if cx is not None:
            break
        if sat_strict[l] and not direct > Fraction(l - ds.t[l], N):
            cx = fail("A", l, Fraction(l - ds.t[l], N), "sigma on strict sets but value at or below the slack floor")
        elif direct > Fraction(l + ds.s[l], N) and not sat_weak[l]:
            cx = fail("B", l, Fraction(l + ds.s[l], N), "value above the slack ceiling but sigma fails on weak sets")
        elif sat_weak[l] and not direct > Fraction(l - 1 - ds.tm[l], N):
            cx = fail("C", l, Fraction(l - 1 - ds.tm[l], N), "sigma on weak sets but value at or below the weak floor")
        elif sat_aug[l] and not direct > Fraction(l - 1 - ds.tm[l], N):
            cx = fail("E", l, Fraction(l - 1 - ds.tm[l], N), "sigma on padded strict sets but value at or below the weak floor")
        elif direct > Fraction(l + ds.sm[l], N) and not sat_shift[l]:
            cx = fail("F", l, Fraction(l + ds.sm[l], N), "value above the shifted ceiling but sigma fails on shifted weak sets")
    if cx is None and not (bounds.cert_lower < direct <= bounds.cert_upper):
        cx = fail("D", -1, bounds.cert_lower, f"direct value outside ({bounds.cert_lower}, {bounds.cert_upper}]")

    findings: list[Finding] = []
    for l in range(N + 1):
        if sat_strict[l] and not direct > Fraction(l, N):
            findings.append(Finding("exact-miss-strict", l, f"sigma_{l} holds on strict sets but value is {direct}"))
        if direct > Fraction(l, N) and not sat_weak[l]:
            findings.append(Finding("exact-miss-weak", l, f"value {direct} exceeds {l}/{N} but sigma_{l} fails on weak sets"))
    if bounds.ell_tilde is not None:
        width = bounds.upper - Fraction(bounds.ell_tilde - 1, N)
        if width > Fraction(2, N):
            findings.append(Finding("width", None, f"literal window width {width} exceeds 2/2^n"))
    true_weak = [l for l in range(N + 1) if sat_weak[l]]
    if true_weak and true_weak != list(range(len(true_weak))):
        findings.append(Finding("tilde-chain", None, f"weak-set levels {true_weak} are not an initial segment"))

    return CertifyResult(cx is None, cx, tuple(findings), bounds, direct, ds)


# --------------------------------------------------------------------------
# pad-and-shift comparison


def pad_shift_check(
    ds: DeterminingSequence,
    B: QuotientBA,
    seed: int = 0,
    exhaustive_limit: int = 2**16,
    samples: int = 1000,
) -> bool:
    """Whether sigma_{l-1}(grid) and sigma_l(1-padded shifted grid)
    agree on B for every level and every assignment tried."""
    import random as _random

    N = 2**ds.n
    pad = {yname(j, 0): BOne() for j in range(ds.m)}
    for j in range(ds.m):
        for i in range(1, N + 1):
            pad[yname(j, i)] = BVar(yname(j, i - 1))
    for l in range(1, N + 1):
        left = ds.sigmas[l - 1]
        right = subst_bvars(ds.sigmas[l], pad)
        names = tuple(dict.fromkeys(free_bvars(left) + free_bvars(right)))
        if not names:
            if ba_eval(B, left, {}) != ba_eval(B, right, {}):
                return False
            continue
        total = len(B.elements) ** len(names)
        if total <= exhaustive_limit:
            combos = itertools.product(B.elements, repeat=len(names))
        else:
            rng = _random.Random(seed)
            combos = (
                tuple(B.elements[rng.randrange(len(B.elements))] for _ in names)
                for _ in range(samples)
            )
        for combo in combos:
            env = dict(zip(names, combo))
            if ba_eval(B, left, env) != ba_eval(B, right, env):
                return False
    return True


# --------------------------------------------------------------------------
# mutation hooks


def count_atoms(sigma: BooleanFormula) -> int:
    return _count(expand_guarded(sigma))


def _count(g: BooleanFormula) -> int:
    if isinstance(g, (TermEq, TermLe, NotZero)):
        return 1
    if isinstance(g, (BAnd, BOr)):
        return sum(_count(a) for a in g.args)
    if isinstance(g, BNot):
        return _count(g.arg)
    from .boolean_ideals import BExists, BForall, BImp

    if isinstance(g, BImp):
        return _count(g.left) + _count(g.right)
    if isinstance(g, (BExists, BForall)):
        return _count(g.body)
    raise TypeError(f"unknown Boolean node {g!r}")


def mutate_sigma(sigma: BooleanFormula, index: int) -> BooleanFormula:
    """Replace the index-th atom (preorder, guarded blocks expanded)
    by its negation; used to confirm certify catches corruption."""
    from .boolean_ideals import BExists, BForall, BImp

    expanded = expand_guarded(sigma)
    counter = [0]

    def walk(g: BooleanFormula) -> BooleanFormula:
        if isinstance(g, (TermEq, TermLe, NotZero)):
            k = counter[0]
            counter[0] += 1
            if k != index:
                return g
            if isinstance(g, NotZero):
                return TermEq(g.arg, BZero())
            return BNot(g)
        if isinstance(g, BAnd):
            return BAnd(tuple(walk(a) for a in g.args))
        if isinstance(g, BOr):
            return BOr(tuple(walk(a) for a in g.args))
        if isinstance(g, BNot):
            return BNot(walk(g.arg))
        if isinstance(g, BImp):
            return BImp(walk(g.left), walk(g.right))
        if isinstance(g, BExists):
            return BExists(g.var, walk(g.body))
        if isinstance(g, BForall):
            return BForall(g.var, walk(g.body))
        raise TypeError(f"unknown Boolean node {g!r}")

    out = walk(expanded)
    if counter[0] <= index:
        raise ValueError(f"sigma has only {counter[0]} atoms")
    return out


def mutate_ds(ds: DeterminingSequence, ell: int, atom_index: int) -> DeterminingSequence:
    sigmas = list(ds.sigmas)
    sigmas[ell] = mutate_sigma(sigmas[ell], atom_index)
    return replace(ds, sigmas=tuple(sigmas))
