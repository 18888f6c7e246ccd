"""Abstract semigroup layer: the pivot engine runs identically on matrices
and on the free-group toy model through this interface.

Elements are opaque; ``None`` is the structural identity (empty block) and is
aligned with everything.  Free-group words are reduced tuples of signed ints
(1=a, 2=b, 3=c, negative = inverse).
"""

import json
from dataclasses import dataclass

import numpy as np

from . import linalg
from .rng import substream

_LETTERS = {"a": 1, "b": 2, "c": 3}
_NAMES = {1: "a", 2: "b", 3: "c"}


class ModelInconsistencyError(RuntimeError):
    """The supplied Schottky part fails its guaranteed mass bound."""


# ---------------------------------------------------------------------------
# free group F_3 = <a, b, c>
# ---------------------------------------------------------------------------


def fg_parse(text):
    """Compact word syntax: lowercase = generator, uppercase = inverse,
    trailing digits = power.  'a9bab' -> a^9 b a b, 'B5' -> b^-5."""
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        low = ch.lower()
        if low not in _LETTERS:
            raise ValueError(f"bad generator {ch!r}")
        val = _LETTERS[low] * (-1 if ch.isupper() else 1)
        i += 1
        num = ""
        while i < len(text) and text[i].isdigit():
            num += text[i]
            i += 1
        out.extend([val] * (int(num) if num else 1))
    return fg_reduce(tuple(out))


def fg_str(word):
    if not word:
        return "e"
    parts = []
    for l in word:
        name = _NAMES[abs(l)]
        parts.append(name.upper() if l < 0 else name)
    return "".join(parts)


def fg_reduce(letters):
    out = []
    for l in letters:
        if out and out[-1] == -l:
            out.pop()
        else:
            out.append(l)
    return tuple(out)


def fg_concat(u, v):
    """Reduced product of two reduced words."""
    u = list(u)
    v = list(v)
    i = len(u) - 1
    j = 0
    while i >= 0 and j < len(v) and u[i] == -v[j]:
        i -= 1
        j += 1
    return tuple(u[:i + 1]) + tuple(v[j:])


def fg_aligned(u, v):
    """No cancellation at the junction: l(uv) = l(u) + l(v)."""
    if len(u) == 0 or len(v) == 0:
        raise linalg.DomainError("alignment undefined for the empty word")
    return u[-1] != -v[0]


FG_GENERATORS = tuple((g,) for g in (1, 2, 3, -1, -2, -3))


# ---------------------------------------------------------------------------
# semigroup instances
# ---------------------------------------------------------------------------


@dataclass
class SemigroupInstance:
    """Product + alignment relation (+ optional contraction score).

    ``product``/``aligned`` never see None: the engine short-circuits the
    structural identity, which is aligned with everything.
    """

    name: str
    product: callable
    aligned: callable
    sigma: "callable | None" = None

    def prod(self, a, b):
        if a is None:
            return b
        if b is None:
            return a
        return self.product(a, b)

    def ali(self, a, b):
        if a is None or b is None:
            return True
        return self.aligned(a, b)


def free_group_instance():
    return SemigroupInstance(
        name="free_group",
        product=fg_concat,
        aligned=lambda u, v: True if (not u or not v) else fg_aligned(u, v),
        sigma=None,
    )


def _normalized_matmul(a, b):
    p = a @ b
    n = float(np.linalg.norm(p))
    if n == 0.0:
        raise linalg.DomainError("zero product in the matrix semigroup")
    return p / n


def matrix_instance(eps):
    """Matrices up to scale (elements kept at unit Frobenius norm); the
    relation is the eps-alignment of the projective classes."""
    return SemigroupInstance(
        name=f"matrix_eps={eps:g}",
        product=_normalized_matmul,
        aligned=lambda a, b: linalg.alignment_ratio(a, b) >= eps,
        sigma=linalg.sigma,
    )


def check_associative(instance, triples):
    """Sampled associativity check; matrix elements compare projectively."""
    for a, b, c in triples:
        left = instance.prod(instance.prod(a, b), c)
        right = instance.prod(a, instance.prod(b, c))
        if isinstance(left, tuple):
            if left != right:
                return False
        else:
            if np.linalg.norm(left - right * np.sign(np.vdot(left, right))) > 1e-9:
                return False
    return True


# ---------------------------------------------------------------------------
# Schottky input and conditional masses
# ---------------------------------------------------------------------------


@dataclass
class SchottkyInput:
    """Data the pivot pipeline needs about the decomposition
    nu^(x)m = alpha nu_s + (1-alpha) kappa."""

    instance: SemigroupInstance
    rho: float
    alpha: float
    m: int
    sample_schottky_word: callable        # rng -> tuple of m letters
    sample_unknown_word: callable         # rng -> tuple of m letters
    support: "list | None" = None         # [(product_elem, weight)] if finite
    batch_schottky_products: "callable | None" = None  # rng, size -> (size,d,d)
    product_bank: "object | None" = None  # pre-sampled products for masses
    seed: int = 0
    mass_budget: int = 4096
    eps: "float | None" = None            # alignment level (matrix models)

    def __post_init__(self):
        if not 0.0 < self.rho < 0.2:
            raise ValueError("rho must lie in (0, 1/5)")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")


@dataclass
class MassResult:
    value: float
    stderr: float
    exact: bool


def _matrix_aligned_left_mask(eps, left, prods):
    """Batched test left A^eps s over a stack of unit-norm products."""
    left = np.asarray(left, dtype=float)
    s1 = _batch_opnorm(prods)
    if left.ndim == 1:
        img = np.einsum("i,nij->nj", left, prods)
        return np.linalg.norm(img, axis=1) >= eps * np.linalg.norm(left) * s1
    ls = linalg.op_norm(left)
    pr = np.einsum("ij,njk->nik", left, prods)
    return _batch_opnorm(pr) >= eps * ls * s1


def _matrix_aligned_right_mask(eps, prods, right):
    right = np.asarray(right, dtype=float)
    s1 = _batch_opnorm(prods)
    if right.ndim == 1:
        img = np.einsum("nij,j->ni", prods, right)
        return np.linalg.norm(img, axis=1) >= eps * np.linalg.norm(right) * s1
    rs = linalg.op_norm(right)
    pr = np.einsum("nij,jk->nik", prods, right)
    return _batch_opnorm(pr) >= eps * s1 * rs


def _batch_opnorm(stack):
    from ._dispatch import svd_values_batch
    return svd_values_batch(stack)[:, 0]


class MassEvaluator:
    """Conditional nu_s masses with the Schottky lower-bound guardrails.

    Exact enumeration over a finite support; otherwise a fixed-budget Monte
    Carlo estimate whose stream is keyed by (model seed, query index), so a
    rerun issuing the same queries sees the same estimates.
    """

    def __init__(self, inp, budget=None):
        self.inp = inp
        self.budget = budget or inp.mass_budget
        self.n_queries = 0

    def query(self, lefts, rights):
        """nu_s{s : all l A s, all s A r}, constraints with None dropped."""
        lefts = [l for l in lefts if l is not None]
        rights = [r for r in rights if r is not None]
        k = len(lefts) + len(rights)
        bound = max(0.0, 1.0 - k * self.inp.rho)
        idx = self.n_queries
        self.n_queries += 1
        if self.inp.support is not None:
            inst = self.inp.instance
            val = 0.0
            for elem, w in self.inp.support:
                if all(inst.ali(l, elem) for l in lefts) and \
                        all(inst.ali(elem, r) for r in rights):
                    val += w
            if val < bound - 1e-12:
                raise ModelInconsistencyError(
                    f"exact mass {val:.6f} below bound {bound:.6f}")
            return MassResult(value=val, stderr=0.0, exact=True)
        # Monte Carlo: stratified subsample of the pre-sampled product bank
        # keyed by the query index (fresh sampling when no bank is attached)
        rng = substream(self.inp.seed, "mass", idx)
        if self.inp.product_bank is not None:
            bank = self.inp.product_bank
            prods = bank[rng.integers(0, len(bank), self.budget)]
        else:
            prods = self.inp.batch_schottky_products(rng, self.budget)
        eps = _instance_eps(self.inp.instance)
        mask = np.ones(len(prods), dtype=bool)
        for l in lefts:
            mask &= _matrix_aligned_left_mask(eps, l, prods)
        for r in rights:
            mask &= _matrix_aligned_right_mask(eps, prods, r)
        val = float(mask.mean())
        se = float(np.sqrt(max(val * (1 - val), 1.0 / self.budget) / self.budget))
        if val < bound - 3.0 * se:
            raise ModelInconsistencyError(
                f"estimated mass {val:.4f} below bound {bound:.4f} - 3se")
        return MassResult(value=val, stderr=se, exact=False)

    def query_pair(self, cond, restrict_a, restrict_b):
        """Joint mass over two independent nu_s draws restricted to the
        given (lefts, rights) constraint sets; cond(s, s') -> bool."""
        idx = self.n_queries
        self.n_queries += 1
        if self.inp.support is not None:
            inst = self.inp.instance
            num = 0.0
            den = 0.0
            for ea, wa in self.inp.support:
                if not _elem_ok(inst, ea, restrict_a):
                    continue
                for eb, wb in self.inp.support:
                    if not _elem_ok(inst, eb, restrict_b):
                        continue
                    den += wa * wb
                    if cond(ea, eb):
                        num += wa * wb
            if den == 0.0:
                raise ModelInconsistencyError("empty pair restriction")
            return MassResult(value=num / den, stderr=0.0, exact=True)
        rng = substream(self.inp.seed, "mass2", idx)
        budget = max(256, self.budget // 8)
        sa = _sample_restricted(self.inp, rng, budget, restrict_a)
        sb = _sample_restricted(self.inp, rng, budget, restrict_b)
        hits = sum(1 for a, b in zip(sa, sb) if cond(a, b))
        val = hits / budget
        se = float(np.sqrt(max(val * (1 - val), 1.0 / budget) / budget))
        return MassResult(value=val, stderr=se, exact=False)


def _elem_ok(inst, elem, restrict):
    lefts, rights = restrict
    return all(inst.ali(l, elem) for l in lefts if l is not None) and \
        all(inst.ali(elem, r) for r in rights if r is not None)


def _sample_restricted(inp, rng, size, restrict):
    inst = inp.instance
    out = []
    guard = 0
    while len(out) < size:
        guard += 1
        if guard > 200 * size:
            raise ModelInconsistencyError("pair restriction too thin")
        prods = inp.batch_schottky_products(rng, size)
        for p in prods:
            if _elem_ok(inst, p, restrict):
                out.append(p)
                if len(out) == size:
                    break
    return out


def _instance_eps(instance):
    name = instance.name
    if not name.startswith("matrix_eps="):
        raise ValueError("Monte Carlo masses need a matrix instance")
    return float(name.split("=", 1)[1])


def schottky_mass(inp, left, right, mode, tail=None, budget=None,
                  query_index=None):
    """Conditional nu_s masses used by the pivot penalties.

    Modes: 'both', 'left_only', 'right_only', 'both_plus_tail' (the extra
    right constraint against the backtrack tail product).  Estimates below
    their guaranteed Schottky bound raise ModelInconsistencyError.
    """
    ev = MassEvaluator(inp, budget=budget)
    if query_index is not None:
        ev.n_queries = query_index
    if mode == "both":
        return ev.query([left], [right])
    if mode == "left_only":
        return ev.query([left], [])
    if mode == "right_only":
        return ev.query([], [right])
    if mode == "both_plus_tail":
        if tail is None:
            raise ValueError("both_plus_tail needs the tail product")
        return ev.query([left], [right, tail])
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# free-group fixtures
# ---------------------------------------------------------------------------


def uniform_generator_support():
    return [(g, 1.0 / 6.0) for g in FG_GENERATORS]


def free_group_input(alpha=0.5, rho=1.0 / 6.0, kappa="uniform", seed=0):
    """The F_3 toy model: nu_s uniform on the six generators (m = 1), the
    unknown part configurable to exhibit the independence claims."""
    inst = free_group_instance()
    gens = list(FG_GENERATORS)

    def sample_s(rng):
        return (gens[int(rng.integers(6))],)

    if kappa == "uniform":
        def sample_u(rng):
            return (gens[int(rng.integers(6))],)
    elif kappa == "ab_words":
        atoms = [fg_parse(w) for w in ("ab", "ba", "aab", "bba")]

        def sample_u(rng):
            return (atoms[int(rng.integers(len(atoms)))],)
    elif isinstance(kappa, (list, tuple)):
        atoms = [fg_parse(w) if isinstance(w, str) else w for w in kappa]

        def sample_u(rng):
            return (atoms[int(rng.integers(len(atoms)))],)
    else:
        raise ValueError(f"unknown kappa fixture {kappa!r}")

    return SchottkyInput(
        instance=inst, rho=rho, alpha=alpha, m=1,
        sample_schottky_word=lambda rng: (gens[int(rng.integers(6))],),
        sample_unknown_word=sample_u,
        support=uniform_generator_support(),
        seed=seed,
    )


def load_finite_support(path):
    """JSON finite-support measure: [{'element': ..., 'weight': w}], words
    as strings, matrices as row-major nested lists."""
    with open(path) as fh:
        entries = json.load(fh)
    out = []
    for e in entries:
        el = e["element"]
        if isinstance(el, str):
            out.append((fg_parse(el), float(e["weight"])))
        else:
            m = np.asarray(el, dtype=float)
            out.append((m / np.linalg.norm(m), float(e["weight"])))
    total = sum(w for _, w in out)
    if total <= 0:
        raise ValueError("weights must be positive")
    return [(e, w / total) for e, w in out]
