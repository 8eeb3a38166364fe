"""Free products of Z^d and free-group factors: normal forms and geometry.

Elements are stored in syllable normal form: a tuple of syllables, each
syllable a pair ``(factor_index, payload)`` where consecutive syllables have
distinct factor indices and no payload is trivial.  Payloads are

* ``Z^d`` factor: a length-d tuple of ints, not all zero (word length = l1 norm),
* ``F_k`` factor: a freely reduced tuple of nonzero signed ints in ``+-1..+-k``
  (word length = number of letters).

The identity is the empty tuple.  Equality of normal forms solves the word
problem, so all higher layers treat elements as opaque hashable values.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

ALPHABET = "abcdefgh"


class ConfigError(ValueError):
    """Invalid specification or parameters (CLI exit code 2)."""


class ResourceError(RuntimeError):
    """A computation exceeded its declared budget (CLI exit code 3)."""


class NumericalError(RuntimeError):
    """A solver failed to certify its result (CLI exit code 4)."""


@dataclass(frozen=True)
class Factor:
    """One free factor: ``kind`` is ``"Z"`` (abelian, rank d) or ``"F"`` (free,
    rank k)."""

    kind: str
    rank: int

    def __post_init__(self):
        if self.kind not in ("Z", "F"):
            raise ConfigError(f"unknown factor kind {self.kind!r}")
        if self.rank < 1:
            raise ConfigError(f"factor rank must be >= 1, got {self.rank}")

    @property
    def n_letters(self):
        # standard generators and inverses
        return 2 * self.rank

    def label(self):
        return f"{self.kind}^{self.rank}" if self.kind == "Z" else f"F_{self.rank}"


def _parse_factor(text):
    t = text.strip()
    if t in ("Z", "Z^1"):
        return Factor("Z", 1)
    if t.startswith("Z^"):
        return Factor("Z", int(t[2:]))
    if t.startswith("F_"):
        return Factor("F", int(t[2:]))
    if t.startswith("F^"):
        return Factor("F", int(t[2:]))
    raise ConfigError(f"cannot parse factor {text!r} (expected like 'Z^2' or 'F_2')")


@dataclass(frozen=True)
class GroupSpec:
    """A free product of ``Z^d`` and ``F_k`` factors with standard generators."""

    factors: tuple

    def __post_init__(self):
        if not self.factors:
            raise ConfigError("need at least one factor")
        if len(self.factors) > len(ALPHABET):
            raise ConfigError(f"at most {len(ALPHABET)} factors supported")

    @staticmethod
    def parse(items):
        """Accepts 'Z^2 * F_2' or an iterable of factor strings."""
        if isinstance(items, str):
            items = items.split("*")
        return GroupSpec(tuple(_parse_factor(s) for s in items))

    @property
    def is_tree(self):
        """True when the Cayley graph with standard generators is a tree
        (every factor is Z or F_k; a Z^d factor with d >= 2 has lattice cells)."""
        return all(f.kind == "F" or f.rank == 1 for f in self.factors)

    @property
    def n_letters(self):
        return sum(f.n_letters for f in self.factors)

    def label(self):
        return " * ".join(f.label() for f in self.factors)

    def factor_letter(self, i):
        return ALPHABET[i]


IDENTITY = ()


def _syllable_length(factor, payload):
    if factor.kind == "Z":
        return sum(abs(c) for c in payload)
    return len(payload)


def length(spec, x):
    """Word length of ``x`` with respect to the standard generators."""
    return sum(_syllable_length(spec.factors[f], p) for f, p in x)


def _merge_payload(factor, p, q):
    """Combine payloads of one factor; returns None when the product is
    trivial."""
    if factor.kind == "Z":
        out = tuple(a + b for a, b in zip(p, q))
        return None if all(c == 0 for c in out) else out
    # free reduction at the junction
    letters = list(p)
    for l in q:
        if letters and letters[-1] == -l:
            letters.pop()
        else:
            letters.append(l)
    return None if not letters else tuple(letters)


def multiply(spec, x, y):
    """Product of two normal forms, reduced to normal form."""
    syls = list(x)
    for f, p in y:
        if syls and syls[-1][0] == f:
            merged = _merge_payload(spec.factors[f], syls[-1][1], p)
            syls.pop()
            if merged is not None:
                syls.append((f, merged))
        else:
            syls.append((f, p))
    return tuple(syls)


def inverse(spec, x):
    """Inverse of a normal form."""
    out = []
    for f, p in reversed(x):
        if spec.factors[f].kind == "Z":
            out.append((f, tuple(-c for c in p)))
        else:
            out.append((f, tuple(-l for l in reversed(p))))
    return tuple(out)


def distance(spec, x, y):
    return length(spec, multiply(spec, inverse(spec, x), y))


def validate_element(spec, x):
    """Check that ``x`` is a well-formed normal form for ``spec``.

    Raises ConfigError otherwise; used at API boundaries (parsing, CLI),
    not inside hot loops.
    """
    if not isinstance(x, tuple):
        raise ConfigError(f"element must be a tuple of syllables, got {type(x).__name__}")
    prev = None
    for syl in x:
        if not (isinstance(syl, tuple) and len(syl) == 2):
            raise ConfigError(f"malformed syllable {syl!r}")
        f, p = syl
        if not (isinstance(f, int) and 0 <= f < len(spec.factors)):
            raise ConfigError(f"syllable names unknown factor {f!r}")
        if f == prev:
            raise ConfigError("adjacent syllables share a factor (not a normal form)")
        fac = spec.factors[f]
        if fac.kind == "Z":
            if len(p) != fac.rank or not all(isinstance(c, int) for c in p):
                raise ConfigError(f"Z^{fac.rank} syllable needs {fac.rank} integers, got {p!r}")
            if all(c == 0 for c in p):
                raise ConfigError("trivial syllable in normal form")
        else:
            if not p or not all(isinstance(l, int) and l != 0 and abs(l) <= fac.rank for l in p):
                raise ConfigError(f"free-factor syllable out of range: {p!r}")
            if any(p[i] == -p[i + 1] for i in range(len(p) - 1)):
                raise ConfigError("unreduced free-factor syllable")
        prev = f
    return x


def sort_key(x):
    """Deterministic total order key: length-free, relies on syllable tuples.

    Combined with the word length it orders ball enumerations; tuples compare
    lexicographically so the order is reproducible across runs."""
    return tuple((f,) + tuple(p) for f, p in x)


# ---------------------------------------------------------------------------
# letters (standard generators) and words


def letters(spec):
    """All standard generators and inverses as one-letter elements, in the
    canonical letter order used by every enumeration in the package."""
    out = []
    for fi, f in enumerate(spec.factors):
        for j in range(f.rank):
            if f.kind == "Z":
                plus = tuple(1 if t == j else 0 for t in range(f.rank))
                minus = tuple(-1 if t == j else 0 for t in range(f.rank))
                out.append(((fi, plus),))
                out.append(((fi, minus),))
            else:
                out.append(((fi, (j + 1,)),))
                out.append(((fi, (-(j + 1),)),))
    return out


def letter_names(spec):
    names = []
    for fi, f in enumerate(spec.factors):
        base = spec.factor_letter(fi)
        for j in range(f.rank):
            stem = base if f.rank == 1 else f"{base}{j + 1}"
            names.append(stem)
            names.append(stem + "^-1")
    return names


def word_to_str(spec, x):
    if not x:
        return "e"
    parts = []
    for f, p in x:
        base = spec.factor_letter(f)
        fac = spec.factors[f]
        if fac.kind == "Z":
            for j, c in enumerate(p):
                if c == 0:
                    continue
                stem = base if fac.rank == 1 else f"{base}{j + 1}"
                parts.append(stem if c == 1 else f"{stem}^{c}")
        else:
            # group consecutive equal letters into powers
            run_letter, run_len = p[0], 1
            runs = []
            for l in p[1:]:
                if l == run_letter:
                    run_len += 1
                else:
                    runs.append((run_letter, run_len))
                    run_letter, run_len = l, 1
            runs.append((run_letter, run_len))
            for l, n in runs:
                stem = base if fac.rank == 1 else f"{base}{abs(l)}"
                e = n if l > 0 else -n
                parts.append(stem if e == 1 else f"{stem}^{e}")
    return "*".join(parts)


def str_to_word(spec, text):
    """Parse words like ``"a^2*b^-1"`` or ``"a1^3*a2^-2*b"``; ``"e"`` is the
    identity."""
    text = text.strip()
    if text in ("", "e", "1"):
        return IDENTITY
    stem_map = {}
    for fi, f in enumerate(spec.factors):
        base = spec.factor_letter(fi)
        for j in range(f.rank):
            stem = base if f.rank == 1 else f"{base}{j + 1}"
            stem_map[stem] = (fi, j)
    out = IDENTITY
    for token in text.split("*"):
        token = token.strip()
        if not token:
            raise ConfigError(f"empty token in word {text!r}")
        if "^" in token:
            stem, _, etext = token.partition("^")
            try:
                exp = int(etext)
            except ValueError:
                raise ConfigError(f"bad exponent in token {token!r}") from None
        else:
            stem, exp = token, 1
        if stem not in stem_map:
            raise ConfigError(f"unknown generator {stem!r} for group {spec.label()}")
        fi, j = stem_map[stem]
        f = spec.factors[fi]
        if exp == 0:
            continue
        if f.kind == "Z":
            payload = tuple(exp if t == j else 0 for t in range(f.rank))
            step = ((fi, payload),)
        else:
            l = (j + 1) if exp > 0 else -(j + 1)
            step = ((fi, tuple([l] * abs(exp))),)
        out = multiply(spec, out, step)
    return out


# ---------------------------------------------------------------------------
# geodesics and coset projection


def neighbors(spec, x):
    return [multiply(spec, x, g) for g in letters(spec)]


def geodesic(spec, x, y):
    """One geodesic from ``x`` to ``y`` as a list of elements, both endpoints
    included.

    Tie-break: at each step, among the neighbors strictly closer to ``y``,
    take the one whose normal form is smallest in the package's canonical
    order (:func:`sort_key`); the choice is deterministic and documented.
    """
    path = [x]
    cur = x
    d = distance(spec, x, y)
    while d > 0:
        best = None
        for n in neighbors(spec, cur):
            dn = distance(spec, n, y)
            if dn == d - 1 and (best is None or sort_key(n) < sort_key(best)):
                best = n
        cur = best
        path.append(cur)
        d -= 1
    return path


@dataclass(frozen=True)
class Coset:
    """Left coset ``rep * P_factor`` of one free factor, with ``rep`` the
    canonical representative (no trailing syllable in that factor)."""

    rep: tuple
    factor: int


def coset_of(spec, g, factor):
    """The left coset ``g P_factor`` in canonical form."""
    syls = list(g)
    if syls and syls[-1][0] == factor:
        syls.pop()
    return Coset(tuple(syls), factor)


def coset_member(spec, c, h_payload):
    return multiply(spec, c.rep, ((c.factor, h_payload),) if h_payload else IDENTITY)


def project_to_coset(spec, g, c):
    """Nearest point of the coset ``c`` to ``g`` and the distance.

    For these free products the projection is read off the normal form: write
    ``c.rep^-1 g`` in normal form; the leading syllable in ``c.factor`` (if
    any) is the projection parameter, the rest of the word is the offset.

    Returns ``(point, dist)``.  The nearest point is unique except when the
    leading abelian syllable admits l1 ties, which cannot happen here because
    any strict prefix of the syllable is strictly closer.
    """
    w = multiply(spec, inverse(spec, c.rep), g)
    if w and w[0][0] == c.factor:
        h = (w[0],)
        rest = w[1:]
    else:
        h = IDENTITY
        rest = w
    point = multiply(spec, c.rep, h)
    return point, length(spec, rest)


def coset_distance(spec, g, c):
    return project_to_coset(spec, g, c)[1]


# ---------------------------------------------------------------------------
# ball enumeration
#
# Three window engines share one interface:
#   size, radius, lengths(), sphere_sizes, index_of(element), element_of(i),
#   move_tables()  (int32 arrays, one per letter, -1 for "outside")
# TreeBall uses level-order arithmetic (no per-element Python objects) and is
# the only engine that scales to millions of states; GenericBall is a plain
# BFS for mixed specs; LatticeBall is the box window of a single Z^d factor.


DEFAULT_BALL_BUDGET = 40_000_000


def _tree_offsets(s, radius):
    sizes = [1]
    if radius >= 1:
        sizes.append(s)
    for _ in range(2, radius + 1):
        sizes.append(sizes[-1] * (s - 1))
    off = np.zeros(len(sizes) + 1, dtype=np.int64)
    np.cumsum(sizes, out=off[1:])
    return off


class TreeBall:
    """Ball of radius ``radius`` in a tree Cayley graph, indexed level order.

    Children of a node are ordered by letter id; a node's children use the
    letters other than the inverse of its last letter, ascending.  This matches
    the canonical letter order, so sphere enumerations are deterministic.
    """

    def __init__(self, spec, radius, budget=DEFAULT_BALL_BUDGET):
        if not spec.is_tree:
            raise ConfigError("TreeBall needs a tree Cayley graph")
        s = spec.n_letters
        off = _tree_offsets(s, radius)
        if off[-1] > budget:
            raise ResourceError(
                f"ball radius {radius} needs {off[-1]} elements, budget {budget}"
            )
        self.spec = spec
        self.radius = radius
        self.s = s
        self.offsets = off
        self.size = int(off[-1])
        self._letters = letters(spec)
        self._inv = np.array(
            [self._letters.index(inverse(spec, l)) for l in self._letters],
            dtype=np.int32,
        )
        self._last = None
        self._parent = None
        self._moves = None

    @property
    def sphere_sizes(self):
        return np.diff(self.offsets)

    def lengths(self):
        out = np.empty(self.size, dtype=np.int32)
        for k in range(self.radius + 1):
            out[self.offsets[k] : self.offsets[k + 1]] = k
        return out

    def _structure(self):
        if self._last is None:
            from .kernels import tree_structure

            self._last, self._parent = tree_structure(
                self.offsets, self.s, np.asarray(self._inv)
            )
        return self._last, self._parent

    def move_tables(self):
        """List of int32 arrays, one per letter: index -> index of x*letter,
        -1 outside the ball."""
        if self._moves is None:
            from .kernels import tree_moves

            last, parent = self._structure()
            self._moves = tree_moves(self.offsets, self.s, self._inv, last, parent)
        return self._moves

    def index_of(self, x):
        word = _tree_letters_of(self.spec, x)
        if len(word) > self.radius:
            return -1
        i = 0
        depth = 0
        last = -1
        for l in word:
            if depth == 0:
                i = 1 + l
            else:
                allowed = [t for t in range(self.s) if t != self._inv[last]]
                j = allowed.index(l)
                pos = i - self.offsets[depth]
                i = int(self.offsets[depth + 1]) + pos * (self.s - 1) + j
            last = l
            depth += 1
        return i

    def element_of(self, i):
        last, parent = self._structure()
        word = []
        while i != 0:
            word.append(int(last[i]))
            i = int(parent[i])
        word.reverse()
        out = IDENTITY
        for l in word:
            out = multiply(self.spec, out, self._letters[l])
        return out


def _tree_letters_of(spec, x):
    """Letter id sequence of a normal form in a tree spec."""
    lets = letters(spec)
    ids = {l: i for i, l in enumerate(lets)}
    word = []
    for f, p in x:
        fac = spec.factors[f]
        if fac.kind == "Z":
            n = p[0]
            lid = ids[((f, (1,)),)] if n > 0 else ids[((f, (-1,)),)]
            word.extend([lid] * abs(n))
        else:
            for l in p:
                word.append(ids[((f, (l,)),)])
    return word


class GenericBall:
    """Ball by breadth-first search, ordered by (length, canonical key)."""

    def __init__(self, spec, radius, budget=DEFAULT_BALL_BUDGET):
        self.spec = spec
        self.radius = radius
        lets = letters(spec)
        elems = [IDENTITY]
        seen = {IDENTITY: 0}
        sphere_sizes = [1]
        frontier = [IDENTITY]
        for k in range(1, radius + 1):
            nxt = set()
            for x in frontier:
                for g in lets:
                    y = multiply(spec, x, g)
                    if y not in seen and length(spec, y) == k:
                        nxt.add(y)
            ordered = sorted(nxt, key=sort_key)
            if len(elems) + len(ordered) > budget:
                raise ResourceError(
                    f"ball radius {k} exceeds element budget {budget}"
                )
            for y in ordered:
                seen[y] = len(elems)
                elems.append(y)
            sphere_sizes.append(len(ordered))
            frontier = ordered
        self.elements = elems
        self.index = seen
        self.size = len(elems)
        self.offsets = np.zeros(radius + 2, dtype=np.int64)
        np.cumsum(sphere_sizes, out=self.offsets[1:])
        self._letters = lets
        self._moves = None

    @property
    def sphere_sizes(self):
        return np.diff(self.offsets)

    def lengths(self):
        out = np.empty(self.size, dtype=np.int32)
        for k in range(self.radius + 1):
            out[self.offsets[k] : self.offsets[k + 1]] = k
        return out

    def move_tables(self):
        if self._moves is None:
            moves = []
            for g in self._letters:
                t = np.empty(self.size, dtype=np.int32)
                for i, x in enumerate(self.elements):
                    t[i] = self.index.get(multiply(self.spec, x, g), -1)
                moves.append(t)
            self._moves = moves
        return self._moves

    def index_of(self, x):
        return self.index.get(x, -1)

    def element_of(self, i):
        return self.elements[i]


class LatticeBall:
    """Box window ``{-W..W}^d`` of a single Z^d factor, row-major indexing.

    This is a box, not an l1 ball: downstream lattice kernels want the product
    structure.  ``index_of``/``element_of`` translate to group elements of the
    ambient (single factor) spec.
    """

    def __init__(self, spec, half_width, budget=DEFAULT_BALL_BUDGET):
        if len(spec.factors) != 1 or spec.factors[0].kind != "Z":
            raise ConfigError("LatticeBall needs a single Z^d factor")
        d = spec.factors[0].rank
        side = 2 * half_width + 1
        if side**d > budget:
            raise ResourceError(
                f"lattice window half-width {half_width} in dim {d} exceeds budget"
            )
        self.spec = spec
        self.d = d
        self.half_width = half_width
        self.side = side
        self.size = side**d
        self.shape = (side,) * d

    def coord_of(self, x):
        if not x:
            return (0,) * self.d
        return x[0][1]

    def index_of(self, x):
        c = self.coord_of(x)
        if any(abs(v) > self.half_width for v in c):
            return -1
        idx = 0
        for v in c:
            idx = idx * self.side + (v + self.half_width)
        return idx

    def element_of(self, i):
        c = []
        for _ in range(self.d):
            c.append(i % self.side - self.half_width)
            i //= self.side
        c.reverse()
        payload = tuple(c)
        if all(v == 0 for v in payload):
            return IDENTITY
        return ((0, payload),)


@lru_cache(maxsize=32)
def _cached_ball(spec, radius, budget, kind):
    if kind == "tree":
        return TreeBall(spec, radius, budget)
    return GenericBall(spec, radius, budget)


def ball(spec, radius, budget=DEFAULT_BALL_BUDGET):
    """Ball of the given radius with deterministic enumeration.

    Uses arithmetic level-order indexing on tree Cayley graphs (scales to
    millions of elements) and breadth-first search otherwise.  Raises
    :class:`ResourceError` naming the offending radius when the element count
    exceeds ``budget``.
    """
    kind = "tree" if spec.is_tree else "bfs"
    return _cached_ball(spec, radius, budget, kind)


def ball_elements(spec, radius, budget=DEFAULT_BALL_BUDGET):
    """Explicit sorted element list of a ball (small radii only)."""
    b = GenericBall(spec, radius, budget)
    return b.elements
