"""Proper ideals on finite index sets, quotient Boolean algebras,
limsup along an ideal, Fubini products, and first-order satisfaction.

On a finite ground set every ideal is the power set of S* (the union of
its members), so quotient classes are canonically represented by their
intersection with the core Omega minus S*. Boolean formulas follow the
y[j][i] / z[k][i] variable convention used by the translator; the
GuardedExists node is the translator's bounded existential block, with
a monotonicity-based search fast path and an equivalent raw expansion.
"""
from __future__ import annotations

import itertools
import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Mapping, Optional, Sequence, Union

Label = Hashable

MAX_OMEGA = 6


def _fset(items: Iterable) -> frozenset:
    return frozenset(items)


@dataclass(frozen=True)
class IdealSpec:
    """A proper ideal on a finite labeled ground set."""

    omega: tuple[Label, ...]
    members: frozenset[frozenset]

    def __post_init__(self) -> None:
        om = set(self.omega)
        if not (1 <= len(self.omega) <= MAX_OMEGA) or len(om) != len(self.omega):
            raise ValueError(f"ground set must have 1..{MAX_OMEGA} distinct labels")
        if frozenset() not in self.members:
            raise ValueError("ideal must contain the empty set")
        for X in self.members:
            if not X <= om:
                raise ValueError(f"member {set(X)} is not a subset of the ground set")
        if om in self.members:
            raise ValueError("improper ideal: contains the whole ground set")
        for X in self.members:
            for Y in self.members:
                if X | Y not in self.members:
                    raise ValueError("ideal not closed under union")
            for Y in _subsets(tuple(X)):
                if Y not in self.members:
                    raise ValueError("ideal not downward closed")

    @property
    def sstar(self) -> frozenset:
        """Union of all members; the ideal equals P(sstar)."""
        out: frozenset = frozenset()
        for X in self.members:
            out |= X
        return out

    @property
    def core(self) -> tuple[Label, ...]:
        s = self.sstar
        return tuple(g for g in self.omega if g not in s)


def _subsets(items: tuple) -> Iterable[frozenset]:
    for r in range(len(items) + 1):
        for combo in itertools.combinations(items, r):
            yield frozenset(combo)


def close_ideal(omega: Sequence[Label], generators: Iterable[Iterable[Label]]) -> IdealSpec:
    """Smallest ideal containing the generators; errors if improper."""
    omega = tuple(omega)
    sstar: set = set()
    for g in generators:
        g = set(g)
        if not g <= set(omega):
            raise ValueError(f"generator {g} is not a subset of the ground set")
        sstar |= g
    if sstar == set(omega):
        raise ValueError("improper ideal: generators cover the ground set")
    members = _fset(_subsets(tuple(g for g in omega if g in sstar)))
    return IdealSpec(omega, members)


def trivial_ideal(omega: Sequence[Label]) -> IdealSpec:
    return close_ideal(omega, [])


def principal_max_ideal(omega: Sequence[Label], gamma0: Label) -> IdealSpec:
    """The maximal ideal of sets avoiding gamma0 (its dual filter is the
    principal ultrafilter at gamma0)."""
    rest = [g for g in omega if g != gamma0]
    if len(rest) == len(omega):
        raise ValueError(f"{gamma0!r} is not in the ground set")
    return close_ideal(omega, [rest] if rest else [])


def limsup_ideal(ideal: IdealSpec, values: Mapping[Label, Fraction]) -> Fraction:
    """min over S in the ideal of max over gamma not in S; exact."""
    best: Optional[Fraction] = None
    for S in ideal.members:
        m = max(values[g] for g in ideal.omega if g not in S)
        if best is None or m < best:
            best = m
    assert best is not None
    return best


def ideal_to_json(ideal: IdealSpec) -> dict:
    gens = [sorted(str(g) for g in ideal.sstar)] if ideal.sstar else []
    return {"omega": [str(g) for g in ideal.omega], "generators": gens}


def ideal_from_json(doc: Mapping) -> IdealSpec:
    omega = [str(g) for g in doc["omega"]]
    gens = [[str(g) for g in gen] for gen in doc.get("generators", [])]
    return close_ideal(omega, gens)


# --------------------------------------------------------------------------
# quotient algebra


@dataclass(frozen=True, eq=False)
class QuotientBA:
    """P(Omega)/I with classes represented by subsets of the core.

    X ~ Y iff their symmetric difference lies in the ideal, which on a
    finite ground set means X and Y agree off S*; so intersection with
    the core is a complete invariant and `elements` lists each class
    exactly once, in a deterministic bitmask order.
    """

    ideal: IdealSpec
    core: tuple[Label, ...] = field(init=False)
    elements: tuple[frozenset, ...] = field(init=False)
    zero: frozenset = field(init=False)
    one: frozenset = field(init=False)

    def __post_init__(self) -> None:
        core = self.ideal.core
        object.__setattr__(self, "core", core)
        elems = []
        for mask in range(1 << len(core)):
            elems.append(_fset(core[i] for i in range(len(core)) if mask >> i & 1))
        object.__setattr__(self, "elements", tuple(elems))
        object.__setattr__(self, "zero", frozenset())
        object.__setattr__(self, "one", _fset(core))

    def class_of(self, X: Iterable[Label]) -> frozenset:
        X = set(X)
        if not X <= set(self.ideal.omega):
            raise ValueError(f"{X} is not a subset of the ground set")
        return _fset(x for x in self.core if x in X)

    def meet(self, a: frozenset, b: frozenset) -> frozenset:
        return a & b

    def join(self, a: frozenset, b: frozenset) -> frozenset:
        return a | b

    def compl(self, a: frozenset) -> frozenset:
        return self.one - a


def quotient(ideal: IdealSpec) -> QuotientBA:
    return QuotientBA(ideal)


def check_ba_laws(B: QuotientBA) -> Optional[str]:
    """Exhaustively verify the Boolean algebra axioms; None if all hold."""
    E = B.elements
    if B.zero == B.one:
        return "0 = 1 (degenerate algebra)"
    for a in E:
        if B.join(a, B.compl(a)) != B.one or B.meet(a, B.compl(a)) != B.zero:
            return f"complement laws fail at {set(a)}"
        if B.join(a, B.zero) != a or B.meet(a, B.one) != a:
            return f"identity laws fail at {set(a)}"
    for a in E:
        for b in E:
            if B.meet(a, b) != B.meet(b, a) or B.join(a, b) != B.join(b, a):
                return "commutativity fails"
            for c in E:
                if B.meet(a, B.join(b, c)) != B.join(B.meet(a, b), B.meet(a, c)):
                    return "distributivity fails"
                if B.meet(a, B.meet(b, c)) != B.meet(B.meet(a, b), c):
                    return "associativity fails"
    return None


# --------------------------------------------------------------------------
# Boolean formulas


@dataclass(frozen=True)
class BVar:
    name: str


@dataclass(frozen=True)
class BZero:
    pass


@dataclass(frozen=True)
class BOne:
    pass


@dataclass(frozen=True)
class BMeet:
    left: "BTerm"
    right: "BTerm"


@dataclass(frozen=True)
class BJoin:
    left: "BTerm"
    right: "BTerm"


@dataclass(frozen=True)
class BCompl:
    arg: "BTerm"


BTerm = Union[BVar, BZero, BOne, BMeet, BJoin, BCompl]


@dataclass(frozen=True)
class TermEq:
    left: BTerm
    right: BTerm


@dataclass(frozen=True)
class TermLe:
    left: BTerm
    right: BTerm


@dataclass(frozen=True)
class NotZero:
    arg: BTerm


@dataclass(frozen=True)
class BAnd:
    args: tuple["BooleanFormula", ...]

    def __post_init__(self) -> None:
        if not self.args:
            raise ValueError("empty conjunction")


@dataclass(frozen=True)
class BOr:
    args: tuple["BooleanFormula", ...]

    def __post_init__(self) -> None:
        if not self.args:
            raise ValueError("empty disjunction")


@dataclass(frozen=True)
class BNot:
    arg: "BooleanFormula"


@dataclass(frozen=True)
class BImp:
    left: "BooleanFormula"
    right: "BooleanFormula"


@dataclass(frozen=True)
class BExists:
    var: str
    body: "BooleanFormula"


@dataclass(frozen=True)
class BForall:
    var: str
    body: "BooleanFormula"


@dataclass(frozen=True)
class GuardedExists:
    """Existential block over generator variables with meet-bounds.

    Each bound ((v1..vk), t) asserts meet(v1..vk) <= t where t is a term
    over free variables. Semantically identical to `expand_raw`; ba_eval
    exploits that the body is monotone in the bound variables to prune
    the search.
    """

    zvars: tuple[str, ...]
    bounds: tuple[tuple[tuple[str, ...], BTerm], ...]
    body: "BooleanFormula"

    def expand_raw(self) -> "BooleanFormula":
        conj: list[BooleanFormula] = []
        for meet_vars, bound in self.bounds:
            t: BTerm = BVar(meet_vars[0])
            for v in meet_vars[1:]:
                t = BMeet(t, BVar(v))
            conj.append(TermLe(t, bound))
        conj.append(self.body)
        out: BooleanFormula = BAnd(tuple(conj))
        for v in reversed(self.zvars):
            out = BExists(v, out)
        return out


BooleanFormula = Union[TermEq, TermLe, NotZero, BAnd, BOr, BNot, BImp, BExists, BForall, GuardedExists]


def b_true() -> BooleanFormula:
    return TermEq(BOne(), BOne())


def b_false() -> BooleanFormula:
    return BNot(TermEq(BOne(), BOne()))


def free_bvars(f: BooleanFormula) -> tuple[str, ...]:
    """Free variables in first-occurrence order."""
    out: list[str] = []

    def term(t: BTerm, bound: frozenset) -> None:
        if isinstance(t, BVar):
            if t.name not in bound and t.name not in out:
                out.append(t.name)
        elif isinstance(t, (BMeet, BJoin)):
            term(t.left, bound)
            term(t.right, bound)
        elif isinstance(t, BCompl):
            term(t.arg, bound)

    def walk(g: BooleanFormula, bound: frozenset) -> None:
        if isinstance(g, (TermEq, TermLe)):
            term(g.left, bound)
            term(g.right, bound)
        elif isinstance(g, NotZero):
            term(g.arg, bound)
        elif isinstance(g, (BAnd, BOr)):
            for a in g.args:
                walk(a, bound)
        elif isinstance(g, BNot):
            walk(g.arg, bound)
        elif isinstance(g, BImp):
            walk(g.left, bound)
            walk(g.right, bound)
        elif isinstance(g, (BExists, BForall)):
            walk(g.body, bound | {g.var})
        elif isinstance(g, GuardedExists):
            inner = bound | set(g.zvars)
            for meet_vars, b in g.bounds:
                for v in meet_vars:
                    if v not in inner and v not in out:
                        out.append(v)
                term(b, inner)
            walk(g.body, inner)

    walk(f, frozenset())
    return tuple(out)


def subst_bvars(f: BooleanFormula, table: Mapping[str, BTerm]) -> BooleanFormula:
    """Replace free variables by terms. The table must not mention any
    bound variable name (the translator's z-numbering guarantees this)."""

    def term(t: BTerm, shadow: frozenset) -> BTerm:
        if isinstance(t, BVar):
            if t.name in table and t.name not in shadow:
                return table[t.name]
            return t
        if isinstance(t, BMeet):
            return BMeet(term(t.left, shadow), term(t.right, shadow))
        if isinstance(t, BJoin):
            return BJoin(term(t.left, shadow), term(t.right, shadow))
        if isinstance(t, BCompl):
            return BCompl(term(t.arg, shadow))
        return t

    def walk(g: BooleanFormula, shadow: frozenset) -> BooleanFormula:
        if isinstance(g, TermEq):
            return TermEq(term(g.left, shadow), term(g.right, shadow))
        if isinstance(g, TermLe):
            return TermLe(term(g.left, shadow), term(g.right, shadow))
        if isinstance(g, NotZero):
            return NotZero(term(g.arg, shadow))
        if isinstance(g, BAnd):
            return BAnd(tuple(walk(a, shadow) for a in g.args))
        if isinstance(g, BOr):
            return BOr(tuple(walk(a, shadow) for a in g.args))
        if isinstance(g, BNot):
            return BNot(walk(g.arg, shadow))
        if isinstance(g, BImp):
            return BImp(walk(g.left, shadow), walk(g.right, shadow))
        if isinstance(g, BExists):
            return BExists(g.var, walk(g.body, shadow | {g.var}))
        if isinstance(g, BForall):
            return BForall(g.var, walk(g.body, shadow | {g.var}))
        if isinstance(g, GuardedExists):
            inner = shadow | set(g.zvars)
            new_bounds = tuple((meet_vars, term(b, inner)) for meet_vars, b in g.bounds)
            return GuardedExists(g.zvars, new_bounds, walk(g.body, inner))
        raise TypeError(f"unknown Boolean node {g!r}")

    return walk(f, frozenset())


def expand_guarded(f: BooleanFormula) -> BooleanFormula:
    """Recursively replace every guarded block by its raw expansion."""
    if isinstance(f, (TermEq, TermLe, NotZero)):
        return f
    if isinstance(f, BAnd):
        return BAnd(tuple(expand_guarded(a) for a in f.args))
    if isinstance(f, BOr):
        return BOr(tuple(expand_guarded(a) for a in f.args))
    if isinstance(f, BNot):
        return BNot(expand_guarded(f.arg))
    if isinstance(f, BImp):
        return BImp(expand_guarded(f.left), expand_guarded(f.right))
    if isinstance(f, BExists):
        return BExists(f.var, expand_guarded(f.body))
    if isinstance(f, BForall):
        return BForall(f.var, expand_guarded(f.body))
    if isinstance(f, GuardedExists):
        return expand_guarded(f.expand_raw())
    raise TypeError(f"unknown Boolean node {f!r}")


def to_prefix(f: Union[BooleanFormula, BTerm]) -> str:
    """Serialize in prefix notation; guarded blocks expand to plain
    existentials so the output uses only the core grammar."""
    if isinstance(f, BVar):
        return f.name
    if isinstance(f, BZero):
        return "0"
    if isinstance(f, BOne):
        return "1"
    if isinstance(f, BMeet):
        return f"(meet {to_prefix(f.left)} {to_prefix(f.right)})"
    if isinstance(f, BJoin):
        return f"(join {to_prefix(f.left)} {to_prefix(f.right)})"
    if isinstance(f, BCompl):
        return f"(compl {to_prefix(f.arg)})"
    if isinstance(f, TermEq):
        return f"(eq {to_prefix(f.left)} {to_prefix(f.right)})"
    if isinstance(f, TermLe):
        return f"(le {to_prefix(f.left)} {to_prefix(f.right)})"
    if isinstance(f, NotZero):
        return f"(ne0 {to_prefix(f.arg)})"
    if isinstance(f, BAnd):
        return f"(and {' '.join(to_prefix(a) for a in f.args)})"
    if isinstance(f, BOr):
        return f"(or {' '.join(to_prefix(a) for a in f.args)})"
    if isinstance(f, BNot):
        return f"(not {to_prefix(f.arg)})"
    if isinstance(f, BImp):
        return f"(imp {to_prefix(f.left)} {to_prefix(f.right)})"
    if isinstance(f, BExists):
        return f"(exists {f.var} {to_prefix(f.body)})"
    if isinstance(f, BForall):
        return f"(forall {f.var} {to_prefix(f.body)})"
    if isinstance(f, GuardedExists):
        return to_prefix(f.expand_raw())
    raise TypeError(f"unknown Boolean node {f!r}")


# --------------------------------------------------------------------------
# satisfaction


def ba_eval(B: QuotientBA, f: BooleanFormula, assignment: Mapping[str, frozenset]) -> bool:
    """Tarskian satisfaction in B; quantifiers enumerate all classes."""
    env = dict(assignment)

    def term(t: BTerm) -> frozenset:
        if isinstance(t, BVar):
            try:
                return env[t.name]
            except KeyError:
                raise ValueError(f"unbound Boolean variable {t.name!r}") from None
        if isinstance(t, BZero):
            return B.zero
        if isinstance(t, BOne):
            return B.one
        if isinstance(t, BMeet):
            return term(t.left) & term(t.right)
        if isinstance(t, BJoin):
            return term(t.left) | term(t.right)
        if isinstance(t, BCompl):
            return B.one - term(t.arg)
        raise TypeError(f"unknown Boolean term {t!r}")

    def sat(g: BooleanFormula) -> bool:
        if isinstance(g, TermEq):
            return term(g.left) == term(g.right)
        if isinstance(g, TermLe):
            return term(g.left) <= term(g.right)
        if isinstance(g, NotZero):
            return bool(term(g.arg))
        if isinstance(g, BAnd):
            return all(sat(a) for a in g.args)
        if isinstance(g, BOr):
            return any(sat(a) for a in g.args)
        if isinstance(g, BNot):
            return not sat(g.arg)
        if isinstance(g, BImp):
            return (not sat(g.left)) or sat(g.right)
        if isinstance(g, (BExists, BForall)):
            saved = env.get(g.var, _MISSING)
            hit = isinstance(g, BForall)
            for e in B.elements:
                env[g.var] = e
                if sat(g.body) != hit:
                    hit = not hit
                    break
            if saved is _MISSING:
                env.pop(g.var, None)
            else:
                env[g.var] = saved
            return hit
        if isinstance(g, GuardedExists):
            return guarded(g)
        raise TypeError(f"unknown Boolean node {g!r}")

    def guarded(g: GuardedExists) -> bool:
        # Search for a witness assignment of g.zvars. The pruning relies
        # on the body being monotone in the z variables, which holds for
        # translator output; equivalence with expand_raw is covered by an
        # exhaustive test at small sizes.
        bound_vals = [term(b) for _, b in g.bounds]
        caps: dict[str, frozenset] = {v: B.one for v in g.zvars}
        for (meet_vars, _), bval in zip(g.bounds, bound_vals):
            if len(meet_vars) == 1 and meet_vars[0] in caps:
                caps[meet_vars[0]] = caps[meet_vars[0]] & bval

        order = list(g.zvars)
        pos = {v: i for i, v in enumerate(order)}
        # a bound becomes checkable at the deepest search level it
        # mentions; bounds over free variables only are constant
        activated: list[list[int]] = [[] for _ in order]
        constant: list[int] = []
        for bi, (meet_vars, _) in enumerate(g.bounds):
            levels = [pos[v] for v in meet_vars if v in pos]
            if levels:
                activated[max(levels)].append(bi)
            else:
                constant.append(bi)

        def bound_holds(bi: int) -> bool:
            meet_vars, _ = g.bounds[bi]
            m = B.one
            for v in meet_vars:
                m = m & env[v]
            return m <= bound_vals[bi]

        saved = {v: env.get(v, _MISSING) for v in g.zvars}

        def restore() -> None:
            for v, old in saved.items():
                if old is _MISSING:
                    env.pop(v, None)
                else:
                    env[v] = old

        env.update(caps)
        if not all(bound_holds(bi) for bi in constant):
            restore()
            return False

        # the body only sees the z variables, so its value repeats a lot
        # during the search; memoize per assignment tuple
        body_memo: dict[tuple, bool] = {}

        def body_now() -> bool:
            key = tuple(env[v] for v in order)
            hit = body_memo.get(key)
            if hit is None:
                hit = body_memo[key] = sat(g.body)
            return hit

        # fast path: try the per-variable caps outright
        body_at_caps = body_now()
        if body_at_caps and all(bound_holds(bi) for lv in activated for bi in lv):
            restore()
            return True
        if not body_at_caps:
            # any admissible assignment is below the caps pointwise, and
            # the body is monotone, so no witness exists
            restore()
            return False

        candidates = {
            v: sorted((e for e in B.elements if e <= caps[v]), key=lambda e: (-len(e), sorted(map(str, e))))
            for v in order
        }

        def dfs(i: int) -> bool:
            if i == len(order):
                return True
            v = order[i]
            # optimistic-body failures propagate down the candidate cone
            body_failed: list[frozenset] = []
            for e in candidates[v]:
                if any(e <= bad for bad in body_failed):
                    continue
                env[v] = e
                if not all(bound_holds(bi) for bi in activated[i]):
                    continue
                for w in order[i + 1 :]:
                    env[w] = caps[w]
                if not body_now():
                    body_failed.append(e)
                    continue
                if dfs(i + 1):
                    return True
            return False

        out = dfs(0)
        restore()
        return out

    return sat(f)


_MISSING = object()


# --------------------------------------------------------------------------
# monotonicity


def _atom_ups(B: QuotientBA, e: frozenset) -> list[frozenset]:
    return [e | {a} for a in B.core if a not in e]


def is_monotone(
    f: BooleanFormula,
    B: QuotientBA,
    seed: int = 0,
    exhaustive_vars: int = 6,
    samples: int = 1000,
) -> bool:
    """True iff satisfaction is preserved under pointwise class increase.

    Exhaustive over all assignments of the occurring variables when
    there are at most `exhaustive_vars` of them (covering relations step
    one atom at a time, which suffices in a finite Boolean algebra);
    otherwise `samples` seeded random comparable pairs.
    """
    names = free_bvars(f)
    if not names:
        return True
    if len(names) <= exhaustive_vars:
        truth: dict[tuple[frozenset, ...], bool] = {}
        for combo in itertools.product(B.elements, repeat=len(names)):
            truth[combo] = ba_eval(B, f, dict(zip(names, combo)))
        for combo, val in truth.items():
            if not val:
                continue
            for i, e in enumerate(combo):
                for up in _atom_ups(B, e):
                    if not truth[combo[:i] + (up,) + combo[i + 1 :]]:
                        return False
        return True
    rng = random.Random(seed)
    elems = B.elements
    core = list(B.core)
    for _ in range(samples):
        lo = {v: elems[rng.randrange(len(elems))] for v in names}
        hi = {v: lo[v] | _fset(a for a in core if rng.random() < 0.5) for v in names}
        if ba_eval(B, f, lo) and not ba_eval(B, f, hi):
            return False
    return True


# --------------------------------------------------------------------------
# Fubini product


def fubini(ideal1: IdealSpec, ideal2: IdealSpec) -> IdealSpec:
    """Ideal on omega1 x omega2: a set is small iff the rows with a
    J-positive section form an I-small set (first ideal governs rows)."""
    grid = tuple(itertools.product(ideal1.omega, ideal2.omega))
    if len(grid) > MAX_OMEGA:
        raise ValueError(f"product ground set exceeds {MAX_OMEGA} points")
    members = []
    for mask in range(1 << len(grid)):
        A = _fset(grid[i] for i in range(len(grid)) if mask >> i & 1)
        bad_rows = _fset(
            i for i in ideal1.omega
            if _fset(j for j in ideal2.omega if (i, j) in A) not in ideal2.members
        )
        if bad_rows in ideal1.members:
            members.append(A)
    return IdealSpec(grid, _fset(members))
