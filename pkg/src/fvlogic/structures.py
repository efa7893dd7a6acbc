"""Finite metric structures and the brute-force formula evaluator.

Structures carry exact rational distance and predicate tables. The
evaluator is the ground-truth oracle for everything else in the package:
sup and inf over a finite universe are max and min, and all arithmetic
is `fractions.Fraction`.
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Hashable, Mapping, Optional

from . import syntax as sx
from .syntax import Formula, Signature, Term, format_fraction, parse_fraction

Point = Hashable

MAX_UNIVERSE = 16


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    witness: tuple = ()

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


@dataclass(frozen=True, eq=False)
class FiniteStructure:
    """A finite metric structure for `sig` with diameter at most 1.

    `universe` is an ordered tuple of distinct hashable labels. `dist`
    maps ordered pairs to rationals; `preds` maps predicate names to
    tuple-indexed tables of rationals; `funcs` maps function names to
    tuple-indexed tables of points; `consts` maps constant names to
    points. Instances compare by identity.
    """

    sig: Signature
    universe: tuple[Point, ...]
    dist: Mapping[tuple[Point, Point], Fraction]
    preds: Mapping[str, Mapping[tuple, Fraction]]
    funcs: Mapping[str, Mapping[tuple, Point]] = field(default_factory=dict)
    consts: Mapping[str, Point] = field(default_factory=dict)

    def d(self, a: Point, b: Point) -> Fraction:
        return self.dist[(a, b)]


def validate(s: FiniteStructure) -> Optional[Violation]:
    """Check every structure invariant exhaustively; return the first
    violation found, or None."""
    n = len(s.universe)
    if not (1 <= n <= MAX_UNIVERSE):
        return Violation("universe", f"universe size {n} outside 1..{MAX_UNIVERSE}")
    if len(set(s.universe)) != n:
        return Violation("universe", "universe labels are not distinct")
    U = s.universe
    for a in U:
        for b in U:
            if (a, b) not in s.dist:
                return Violation("metric", f"missing distance entry", (a, b))
            v = s.dist[(a, b)]
            if not (0 <= v <= 1):
                return Violation("metric", f"d{(a, b)} = {v} outside [0,1]", (a, b))
    for a in U:
        if s.dist[(a, a)] != 0:
            return Violation("metric", f"d({a},{a}) nonzero", (a,))
    for a in U:
        for b in U:
            if s.dist[(a, b)] != s.dist[(b, a)]:
                return Violation("metric", "asymmetric distance", (a, b))
            if a != b and s.dist[(a, b)] == 0:
                return Violation("metric", "distinct points at distance 0", (a, b))
    for a in U:
        for b in U:
            for c in U:
                if s.dist[(a, b)] > s.dist[(a, c)] + s.dist[(c, b)]:
                    return Violation("metric", "triangle inequality fails", (a, b, c))
    for p in s.sig.preds:
        table = s.preds.get(p.name)
        if table is None:
            return Violation("table", f"missing predicate table {p.name!r}")
        for tup in itertools.product(U, repeat=p.arity):
            if tup not in table:
                return Violation("table", f"predicate {p.name!r} missing entry", tup)
            v = table[tup]
            if not (0 <= v <= 1):
                return Violation("table", f"{p.name}{tup} = {v} outside [0,1]", tup)
    for f in s.sig.funcs:
        table = s.funcs.get(f.name)
        if table is None:
            return Violation("table", f"missing function table {f.name!r}")
        for tup in itertools.product(U, repeat=f.arity):
            if tup not in table:
                return Violation("table", f"function {f.name!r} missing entry", tup)
            if table[tup] not in set(U):
                return Violation("table", f"{f.name}{tup} maps outside the universe", tup)
    for name in s.sig.consts:
        if name not in s.consts:
            return Violation("table", f"missing constant {name!r}")
        if s.consts[name] not in set(U):
            return Violation("table", f"constant {name!r} outside the universe")
    # uniform continuity (Lipschitz) over all tuple pairs
    for p in s.sig.preds:
        table = s.preds[p.name]
        for ta in itertools.product(U, repeat=p.arity):
            for tb in itertools.product(U, repeat=p.arity):
                rho = max(s.dist[(x, y)] for x, y in zip(ta, tb))
                if abs(table[ta] - table[tb]) > p.lipschitz * rho:
                    return Violation("lipschitz", f"predicate {p.name!r} breaks its modulus", (ta, tb))
    for f in s.sig.funcs:
        table = s.funcs[f.name]
        for ta in itertools.product(U, repeat=f.arity):
            for tb in itertools.product(U, repeat=f.arity):
                rho = max(s.dist[(x, y)] for x, y in zip(ta, tb))
                if s.dist[(table[ta], table[tb])] > f.lipschitz * rho:
                    return Violation("lipschitz", f"function {f.name!r} breaks its modulus", (ta, tb))
    return None


# --------------------------------------------------------------------------
# evaluation


def eval_term(s: FiniteStructure, t: Term, val: Mapping[str, Point]) -> Point:
    if isinstance(t, sx.Var):
        try:
            return val[t.name]
        except KeyError:
            raise ValueError(f"unbound variable {t.name!r}") from None
    if isinstance(t, sx.Const):
        return s.consts[t.name]
    return s.funcs[t.func][tuple(eval_term(s, a, val) for a in t.args)]


def evaluate(s: FiniteStructure, f: Formula, val: Optional[Mapping[str, Point]] = None) -> Fraction:
    """Evaluate `f` in `s` under `val`. Handles derived connectives
    directly (exactly), so it can serve as the oracle for normalization."""
    val = dict(val or {})
    fv_cache: dict[int, tuple[str, ...]] = {}

    def fv(g: Formula) -> tuple[str, ...]:
        got = fv_cache.get(id(g))
        if got is None:
            got = tuple(sx.free_vars(g))
            fv_cache[id(g)] = got
        return got

    memo: dict[tuple, Fraction] = {}

    def go(g: Formula, env: dict[str, Point]) -> Fraction:
        key = (id(g), tuple((v, env[v]) for v in fv(g)))
        got = memo.get(key)
        if got is not None:
            return got
        if isinstance(g, sx.Zero):
            out = Fraction(0)
        elif isinstance(g, sx.One):
            out = Fraction(1)
        elif isinstance(g, sx.DyadicConst):
            out = Fraction(g.num, 2**g.denom_log2)
        elif isinstance(g, sx.Atomic):
            out = s.preds[g.pred][tuple(eval_term(s, a, env) for a in g.args)]
        elif isinstance(g, sx.Dist):
            out = s.dist[(eval_term(s, g.left, env), eval_term(s, g.right, env))]
        elif isinstance(g, sx.Half):
            out = go(g.body, env) / 2
        elif isinstance(g, sx.Monus):
            x = go(g.left, env)
            y = go(g.right, env)
            out = x - y if x >= y else Fraction(0)
        elif isinstance(g, sx.Min):
            out = min(go(g.left, env), go(g.right, env))
        elif isinstance(g, sx.Max):
            out = max(go(g.left, env), go(g.right, env))
        elif isinstance(g, sx.Neg):
            out = 1 - go(g.body, env)
        elif isinstance(g, (sx.Sup, sx.Inf)):
            agg = max if isinstance(g, sx.Sup) else min
            saved = env.get(g.var)
            vals = []
            for u in s.universe:
                env[g.var] = u
                vals.append(go(g.body, env))
            if saved is None:
                env.pop(g.var, None)
            else:
                env[g.var] = saved
            out = agg(vals)
        else:
            raise TypeError(f"unknown formula node {g!r}")
        memo[key] = out
        return out

    missing = [v for v in fv(f) if v not in val]
    if missing:
        raise ValueError(f"unbound variable {missing[0]!r}")
    return go(f, val)


# --------------------------------------------------------------------------
# random generation


def _shortest_path_closure(U: tuple, dist: dict) -> None:
    for c in U:
        for a in U:
            for b in U:
                via = dist[(a, c)] + dist[(c, b)]
                if via < dist[(a, b)]:
                    dist[(a, b)] = via


def random_structure(sig: Signature, size: int, seed: int, grid: int = 16) -> FiniteStructure:
    """Deterministically generate a valid structure of the given size.

    The metric is sampled on a 1/grid lattice and repaired by the
    shortest-path closure; surviving off-diagonal zeros are bumped to
    1/grid. Predicate tables are blended toward their mean (binary
    search on the blend factor) until the Lipschitz check holds;
    function tables are resampled a bounded number of times, then fall
    back to a projection or a constant map.
    """
    if not (1 <= size <= MAX_UNIVERSE):
        raise ValueError(f"size {size} outside 1..{MAX_UNIVERSE}")
    rng = random.Random(seed)
    U = tuple(f"p{i}" for i in range(size))
    dist: dict[tuple[Point, Point], Fraction] = {}
    for i, a in enumerate(U):
        dist[(a, a)] = Fraction(0)
        for b in U[:i]:
            v = Fraction(rng.randint(0, grid), grid)
            dist[(a, b)] = dist[(b, a)] = v
    _shortest_path_closure(U, dist)
    for a in U:
        for b in U:
            if a != b and dist[(a, b)] == 0:
                dist[(a, b)] = Fraction(1, grid)

    preds: dict[str, dict[tuple, Fraction]] = {}
    for p in sig.preds:
        raw = {
            tup: Fraction(rng.randint(0, grid), grid)
            for tup in itertools.product(U, repeat=p.arity)
        }
        mean = sum(raw.values(), Fraction(0)) / len(raw)

        def blend(lam: Fraction) -> dict[tuple, Fraction]:
            return {tup: mean + lam * (v - mean) for tup, v in raw.items()}

        def passes(lam: Fraction) -> bool:
            t = blend(lam)
            for ta in t:
                for tb in t:
                    rho = max(dist[(x, y)] for x, y in zip(ta, tb))
                    if abs(t[ta] - t[tb]) > p.lipschitz * rho:
                        return False
            return True

        if passes(Fraction(1)):
            preds[p.name] = raw
        else:
            lo, hi = Fraction(0), Fraction(1)
            for _ in range(6):
                mid = (lo + hi) / 2
                if passes(mid):
                    lo = mid
                else:
                    hi = mid
            preds[p.name] = blend(lo)

    funcs: dict[str, dict[tuple, Point]] = {}
    for f in sig.funcs:
        table = None
        for _ in range(64):
            cand = {
                tup: U[rng.randrange(size)]
                for tup in itertools.product(U, repeat=f.arity)
            }
            ok = all(
                dist[(cand[ta], cand[tb])] <= f.lipschitz * max(dist[(x, y)] for x, y in zip(ta, tb))
                for ta in cand
                for tb in cand
            )
            if ok:
                table = cand
                break
        if table is None:
            if f.lipschitz >= 1:
                table = {tup: tup[0] for tup in itertools.product(U, repeat=f.arity)}
            else:
                table = {tup: U[0] for tup in itertools.product(U, repeat=f.arity)}
        funcs[f.name] = table

    consts = {name: U[rng.randrange(size)] for name in sig.consts}
    s = FiniteStructure(sig, U, dist, preds, funcs, consts)
    bad = validate(s)
    if bad is not None:
        raise AssertionError(f"random_structure produced an invalid structure: {bad}")
    return s


# --------------------------------------------------------------------------
# serialization


def to_json(s: FiniteStructure) -> dict:
    idx = {a: i for i, a in enumerate(s.universe)}
    labels = [str(a) for a in s.universe]

    def tensor(table: Mapping[tuple, Any], arity: int, conv) -> Any:
        def build(prefix: tuple) -> Any:
            if len(prefix) == arity:
                return conv(table[prefix])
            return [build(prefix + (a,)) for a in s.universe]

        return build(())

    return {
        "universe": labels,
        "dist": [[format_fraction(s.dist[(a, b)]) for b in s.universe] for a in s.universe],
        "preds": {p.name: tensor(s.preds[p.name], p.arity, format_fraction) for p in s.sig.preds},
        "funcs": {f.name: tensor(s.funcs[f.name], f.arity, lambda x: labels[idx[x]]) for f in s.sig.funcs},
        "consts": {name: labels[idx[s.consts[name]]] for name in s.sig.consts},
    }


def from_json(doc: Mapping, sig: Signature) -> FiniteStructure:
    U = tuple(str(a) for a in doc["universe"])
    dist: dict[tuple[Point, Point], Fraction] = {}
    for i, a in enumerate(U):
        for j, b in enumerate(U):
            dist[(a, b)] = parse_fraction(doc["dist"][i][j])

    def untensor(data: Any, arity: int, conv) -> dict:
        table: dict[tuple, Any] = {}

        def walk(node: Any, prefix: tuple) -> None:
            if len(prefix) == arity:
                table[prefix] = conv(node)
                return
            if len(node) != len(U):
                raise ValueError("tensor shape does not match the universe")
            for a, child in zip(U, node):
                walk(child, prefix + (a,))

        walk(data, ())
        return table

    label_set = set(U)

    def as_point(x: Any) -> Point:
        x = str(x)
        if x not in label_set:
            raise ValueError(f"label {x!r} is not in the universe")
        return x

    preds = {p.name: untensor(doc["preds"][p.name], p.arity, parse_fraction) for p in sig.preds}
    funcs = {f.name: untensor(doc.get("funcs", {})[f.name], f.arity, as_point) for f in sig.funcs}
    consts = {name: as_point(doc.get("consts", {})[name]) for name in sig.consts}
    return FiniteStructure(sig, U, dist, preds, funcs, consts)
