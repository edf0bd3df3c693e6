"""Site groups, layouts, and the difference-uniqueness constraints.

A layout is a finite set of qubit sites ``D`` inside an abelian group,
a subset ``P`` of logical sites, and two reference sites ``r``, ``r'``
whose difference vectors to the logical sites must be combinatorially
unique.  Those uniqueness constraints are what let nested commutators of
global diagonal projectors single out one logical site at a time, so
everything downstream (encoding, compilation, verification) starts here.

Two group flavours are supported:

* ``cyclic(n)``  -- sites are residues ``0..n-1``, differences wrap mod n.
* ``grid(l, m)`` -- sites are integer l-tuples in the box ``{0..m-1}^l``;
  differences are taken in the ambient group ``Z^l`` and do NOT wrap.

Site ordering is fixed once and for all (ascending residue for circles,
row-major for grids) and determines the bit position of every site in
the simulator's basis indices.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable

Site = int | tuple[int, ...]
Pair = tuple[Site, Site]

FAMILIES = ("circle_sixth", "grid_sixth", "grid_slab")


class LayoutError(ValueError):
    """Malformed group/site data or illegal builtin-family parameters."""


@dataclass(frozen=True)
class GroupSpec:
    """Abelian group the sites live in: ``cyclic`` residues or an integer grid."""

    kind: str
    n: int | None = None          # cyclic order
    l: int | None = None          # grid dimension count
    m: int | None = None          # grid side length

    def __post_init__(self):
        if self.kind == "cyclic":
            if not isinstance(self.n, int) or self.n < 1:
                raise LayoutError(f"cyclic group needs integer n >= 1, got {self.n!r}")
        elif self.kind == "grid":
            if not isinstance(self.l, int) or self.l < 1:
                raise LayoutError(f"grid group needs integer l >= 1, got {self.l!r}")
            if not isinstance(self.m, int) or self.m < 1:
                raise LayoutError(f"grid group needs integer m >= 1, got {self.m!r}")
        else:
            raise LayoutError(f"unknown group kind {self.kind!r}")

    def full_sites(self) -> tuple[Site, ...]:
        """All sites in canonical order: ascending residue / row-major box."""
        if self.kind == "cyclic":
            return tuple(range(self.n))
        return tuple(itertools.product(range(self.m), repeat=self.l))

    def diff(self, p: Site, q: Site) -> Site:
        """p - q.  Wraps mod n for cyclic groups, exact in Z^l for grids."""
        if self.kind == "cyclic":
            return (p - q) % self.n
        return tuple(a - b for a, b in zip(p, q))

    def add(self, p: Site, d: Site) -> Site:
        if self.kind == "cyclic":
            return (p + d) % self.n
        return tuple(a + b for a, b in zip(p, d))

    def is_zero(self, d: Site) -> bool:
        if self.kind == "cyclic":
            return d % self.n == 0
        return all(x == 0 for x in d)

    def check_site(self, s: Site) -> Site:
        if self.kind == "cyclic":
            if not isinstance(s, int) or not (0 <= s < self.n):
                raise LayoutError(f"site {s!r} is not a residue mod {self.n}")
            return s
        if not (isinstance(s, tuple) and len(s) == self.l
                and all(isinstance(x, int) for x in s)):
            raise LayoutError(f"site {s!r} is not an integer {self.l}-tuple")
        return s


@dataclass
class Layout:
    """Sites, logical subset, reference pair, and the pair-weight table.

    Immutable by convention after construction; ``weights`` maps ordered
    site pairs to real coupling strengths, with every unlisted pair of
    distinct sites in D weighing 1 and anything outside D weighing 0.
    """

    group: GroupSpec
    D: tuple[Site, ...]
    P: tuple[Site, ...]
    r: Site
    r_prime: Site
    weights: dict[Pair, float] | None = None

    site_index: dict[Site, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.D = tuple(self.group.check_site(s) for s in self.D)
        if len(set(self.D)) != len(self.D):
            raise LayoutError("duplicate sites in D")
        self.P = tuple(self.group.check_site(s) for s in self.P)
        if len(set(self.P)) != len(self.P):
            raise LayoutError("duplicate sites in P")
        self.group.check_site(self.r)
        self.group.check_site(self.r_prime)
        if self.weights is not None:
            dset = set(self.D)
            for (p, q) in self.weights:
                if p not in dset or q not in dset:
                    raise LayoutError(f"weight entry ({p!r}, {q!r}) is outside D")
                if p == q:
                    raise LayoutError(f"weight entry ({p!r}, {p!r}) pairs a site with itself")
        self.site_index = {s: i for i, s in enumerate(self.D)}
        self._pair_cache: dict[Site, tuple[Pair, ...]] = {}

    @property
    def n(self) -> int:
        return len(self.D)

    @property
    def k(self) -> int:
        return len(self.P)

    @property
    def code_sites(self) -> tuple[Site, ...]:
        """P together with the two reference sites, in D order."""
        members = set(self.P) | {self.r, self.r_prime}
        return tuple(s for s in self.D if s in members)

    def weight(self, p: Site, q: Site) -> float:
        if p not in self.site_index or q not in self.site_index or p == q:
            return 0.0
        if self.weights is None:
            return 1.0
        return self.weights.get((p, q), 1.0)

    def pairs_at(self, d: Site) -> tuple[Pair, ...]:
        """Ordered site pairs (p, q) in D with p - q = d, ascending in p's bit index."""
        if self.group.is_zero(d):
            raise LayoutError("displacement d must be nonzero")
        if self.group.kind == "cyclic":
            d = d % self.group.n
        if d not in self._pair_cache:
            dset = set(self.D)
            pairs = []
            for p in self.D:
                q = self.group.diff(p, d) if self.group.kind == "cyclic" \
                    else tuple(a - b for a, b in zip(p, d))
                if q in dset and q != p:
                    pairs.append((p, q))
            self._pair_cache[d] = tuple(pairs)
        return self._pair_cache[d]


@dataclass
class ConstraintReport:
    """Outcome of layout validation; ``violations`` carries witness site tuples."""

    valid: bool
    violations: list[tuple[str, tuple]]

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "violations": [
                {"constraint": c, "witness": [site_to_json(s) for s in w]}
                for c, w in self.violations
            ],
        }


def validate_layout(layout: Layout) -> ConstraintReport:
    """Check the basic invariants and the three difference-uniqueness constraints.

    Constraint 1: for every logical p and reference s, the difference p - s is
    realized by exactly one ordered pair from P u {r, r'}.
    Constraint 2: likewise for r - r'.
    Constraint 3: (p - r) + (p - r') is not a difference of any such pair.

    Exhaustive enumeration over the k+2 code sites; reports rather than throws.
    """
    g = layout.group
    violations: list[tuple[str, tuple]] = []

    dset = set(layout.D)
    if layout.r == layout.r_prime:
        violations.append(("basic", (layout.r, layout.r_prime)))
    for s in (layout.r, layout.r_prime):
        if s in layout.P:
            violations.append(("basic", (s,)))
        if s not in dset:
            violations.append(("basic", (s,)))
    for p in layout.P:
        if p not in dset:
            violations.append(("basic", (p,)))

    code = list(layout.P) + [layout.r, layout.r_prime]
    for q, q2 in itertools.permutations(code, 2):
        if layout.weight(q, q2) == 0.0:
            violations.append(("basic", (q, q2)))

    if violations:
        # Geometry checks below assume a structurally sane configuration.
        return ConstraintReport(False, violations)

    diffs: dict[Site, list[Pair]] = {}
    for q, q2 in itertools.permutations(code, 2):
        diffs.setdefault(g.diff(q, q2), []).append((q, q2))

    for p in layout.P:
        for s in (layout.r, layout.r_prime):
            for (q, q2) in diffs.get(g.diff(p, s), []):
                if (q, q2) != (p, s):
                    violations.append(("1", (p, s, q, q2)))

    for (q, q2) in diffs.get(g.diff(layout.r, layout.r_prime), []):
        if (q, q2) != (layout.r, layout.r_prime):
            violations.append(("2", (q, q2)))

    for p in layout.P:
        total = g.add(g.diff(p, layout.r), g.diff(p, layout.r_prime))
        for (q, q2) in diffs.get(total, []):
            violations.append(("3", (p, q, q2)))

    return ConstraintReport(not violations, violations)


def circle_sixth(n: int) -> Layout:
    """Circle of size n = 6k: logical sites at the nonzero multiples of 6."""
    if n % 6 != 0 or n < 6:
        raise LayoutError(f"circle_sixth needs n divisible by 6 and >= 6, got {n}")
    group = GroupSpec("cyclic", n=n)
    P = tuple(p for p in range(6, n, 6))
    return Layout(group, group.full_sites(), P, 1, 2)


def grid_sixth(l: int, m: int) -> Layout:
    """l-dimensional box of side m: logical sites where the coordinate sum is 0 mod 6."""
    if m < 3:
        raise LayoutError(f"grid_sixth needs m >= 3 so both references fit, got m={m}")
    group = GroupSpec("grid", l=l, m=m)
    D = group.full_sites()
    P = tuple(p for p in D if sum(p) % 6 == 0 and any(p))
    r = (1,) + (0,) * (l - 1)
    r_prime = (2,) + (0,) * (l - 1)
    return Layout(group, D, P, r, r_prime)


def grid_slab(l: int, m: int) -> Layout:
    """l-dimensional box of side m = 3j+1: logical slab 2j+1 <= first coordinate <= 3j."""
    if m % 3 != 1 or m < 4:
        raise LayoutError(f"grid_slab needs m = 3j+1 with j >= 1, got m={m}")
    j = (m - 1) // 3
    group = GroupSpec("grid", l=l, m=m)
    D = group.full_sites()
    P = tuple(p for p in D if 2 * j + 1 <= p[0] <= 3 * j)
    r = (0,) * l
    r_prime = (j,) + (0,) * (l - 1)
    return Layout(group, D, P, r, r_prime)


def builtin_layout(family: str, **params) -> Layout:
    """Instantiate one of the three stock constructions by name."""
    if family == "circle_sixth":
        return circle_sixth(**params)
    if family == "grid_sixth":
        return grid_sixth(**params)
    if family == "grid_slab":
        return grid_slab(**params)
    raise LayoutError(f"unknown layout family {family!r}; options: {', '.join(FAMILIES)}")


def weight_ratio(layout: Layout) -> float:
    """max |W| over all D pairs divided by min |W| over code-site pairs."""
    code = layout.code_sites
    worst = 0.0
    for p, q in itertools.permutations(layout.D, 2):
        worst = max(worst, abs(layout.weight(p, q)))
    best = None
    for p, q in itertools.permutations(code, 2):
        w = abs(layout.weight(p, q))
        if w == 0.0:
            raise LayoutError(f"zero weight on code pair ({p!r}, {q!r})")
        best = w if best is None else min(best, w)
    if best is None:
        raise LayoutError("layout has no code-site pairs")
    return worst / best


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------

def site_to_json(s: Site):
    return list(s) if isinstance(s, tuple) else s


def site_from_json(raw, group: GroupSpec) -> Site:
    if group.kind == "cyclic":
        if not isinstance(raw, int):
            raise LayoutError(f"cyclic site must be an integer, got {raw!r}")
        return raw
    if isinstance(raw, int) and group.l == 1:
        return (raw,)
    if isinstance(raw, list) and all(isinstance(x, int) for x in raw):
        return tuple(raw)
    raise LayoutError(f"grid site must be an integer list, got {raw!r}")


def layout_to_dict(layout: Layout) -> dict:
    g = layout.group
    group = {"kind": g.kind, "n": g.n} if g.kind == "cyclic" \
        else {"kind": g.kind, "l": g.l, "m": g.m}
    if layout.weights is None:
        w = "uniform"
    else:
        w = [[site_to_json(p), site_to_json(q), v]
             for (p, q), v in sorted(layout.weights.items(), key=repr)]
    return {
        "group": group,
        "D": [site_to_json(s) for s in layout.D],
        "P": [site_to_json(s) for s in layout.P],
        "r": site_to_json(layout.r),
        "r'": site_to_json(layout.r_prime),
        "W": w,
    }


def parse_layout(data: dict) -> Layout:
    """Parse the layout file schema; unknown fields are rejected."""
    if not isinstance(data, dict):
        raise LayoutError("layout file must contain a JSON object")
    known = {"group", "D", "P", "r", "r'", "W"}
    extra = set(data) - known
    if extra:
        raise LayoutError(f"unknown layout fields: {sorted(extra)}")
    if "group" not in data:
        raise LayoutError("layout file is missing the 'group' field")

    graw = data["group"]
    if not isinstance(graw, dict) or "kind" not in graw:
        raise LayoutError("'group' must be an object with a 'kind'")
    gextra = set(graw) - {"kind", "n", "l", "m"}
    if gextra:
        raise LayoutError(f"unknown group fields: {sorted(gextra)}")
    group = GroupSpec(graw["kind"],
                      n=graw.get("n"), l=graw.get("l"), m=graw.get("m"))

    D = tuple(site_from_json(s, group) for s in data["D"]) if "D" in data \
        else group.full_sites()

    praw = data.get("P", [])
    if isinstance(praw, dict):
        family = praw.get("family")
        if set(praw) - {"family"} or family not in FAMILIES:
            raise LayoutError(f"P preset must be one of {FAMILIES}, got {praw!r}")
        params = {"n": group.n} if group.kind == "cyclic" else {"l": group.l, "m": group.m}
        stock = builtin_layout(family, **params)
        if stock.group != group:
            raise LayoutError("P preset family does not match the group")
        P = stock.P
        r = data.get("r", site_to_json(stock.r))
        r_prime = data.get("r'", site_to_json(stock.r_prime))
    else:
        P = tuple(site_from_json(s, group) for s in praw)
        if "r" not in data or "r'" not in data:
            raise LayoutError("layout file needs 'r' and \"r'\" when P is explicit")
        r, r_prime = data["r"], data["r'"]
    r = site_from_json(r, group) if not isinstance(r, tuple) else r
    r_prime = site_from_json(r_prime, group) if not isinstance(r_prime, tuple) else r_prime

    weights = None
    wraw = data.get("W", "uniform")
    if wraw != "uniform":
        if not isinstance(wraw, list):
            raise LayoutError("W must be \"uniform\" or a list of [p, q, value]")
        weights = {}
        for entry in wraw:
            if not (isinstance(entry, list) and len(entry) == 3):
                raise LayoutError(f"bad weight entry {entry!r}; expected [p, q, value]")
            p = site_from_json(entry[0], group)
            q = site_from_json(entry[1], group)
            weights[(p, q)] = float(entry[2])

    return Layout(group, D, P, r, r_prime, weights)


def load_layout(path) -> Layout:
    with open(path) as fh:
        return parse_layout(json.load(fh))


def save_layout(layout: Layout, path) -> None:
    with open(path, "w") as fh:
        json.dump(layout_to_dict(layout), fh, indent=2)
        fh.write("\n")
