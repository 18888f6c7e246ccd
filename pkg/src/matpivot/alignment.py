"""Executable oracles for the local-to-global alignment calculus.

Each ``check_*`` function tests one contraction/alignment statement on a
concrete instance and returns a Verdict with the two sides of the asserted
inequality.  The ``suite_*`` functions run the same checks vectorized over
large batches of randomly generated hypothesis-satisfying instances; a
violation beyond the uniform 1e-9 slack is a failure.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from ._dispatch import svd_full_batch, svd_values_batch
from .linalg import (DomainError, alignment_ratio, is_aligned, proj_dist,
                     proj_dist_batch, proj_point, sigma, spectral,
                     top_image_direction)

SLACK = 1e-9

# thresholds gating the lemma hypotheses, as functions of the alignment level
THRESHOLDS = {
    "eps2_over_4": lambda e: e * e / 4.0,
    "eps2_over_8": lambda e: e * e / 8.0,
    "eps2_over_12": lambda e: e * e / 12.0,
    "eps4_over_4": lambda e: e ** 4 / 4.0,
    "eps4_over_12": lambda e: e ** 4 / 12.0,
    "eps6_over_48": lambda e: e ** 6 / 48.0,
}

# amplification factors appearing on the conclusion side
AMPLIFIERS = {
    "half": lambda e: e / 2.0,
    "inv_eps2": lambda e: e ** -2,
    "four_inv_eps4": lambda e: 4.0 * e ** -4,
    "chain": lambda e, n: (2.0 / e) ** (2 * n),
}


@dataclass
class Verdict:
    lemma: str
    applicable: bool
    passed: "bool | None" = None
    lhs: "float | None" = None
    rhs: "float | None" = None
    details: dict = field(default_factory=dict)

    def to_record(self, seed=None):
        rec = {"lemma": self.lemma, "applicable": self.applicable,
               "pass": self.passed, "lhs": self.lhs, "rhs": self.rhs}
        if seed is not None:
            rec["seed"] = int(seed)
        return rec


@dataclass
class AlignedChain:
    """A finite chain g_0, ..., g_n with its recorded hypothesis flags."""

    eps: float
    links: list
    aligned: list          # consecutive alignment flags at level eps
    thresholds: list       # per element: which sigma caps hold

    @classmethod
    def build(cls, links, eps):
        links = [linalg.as_mat(g) for g in links]
        if not links:
            raise ValueError("chain needs at least one link")
        if not 0.0 < eps <= 0.5:
            raise ValueError("eps must lie in (0, 1/2]")
        aligned = [is_aligned(links[k], links[k + 1], eps)
                   for k in range(len(links) - 1)]
        caps = []
        for g in links:
            s = sigma(g)
            caps.append({name: s <= fn(eps)
                         for name, fn in THRESHOLDS.items()})
        return cls(eps=eps, links=links, aligned=aligned, thresholds=caps)

    def __len__(self):
        return len(self.links)


def _bound_holds(lhs, rhs):
    return bool(lhs <= rhs + SLACK)


def check_c_prod(g, h, eps):
    """sigma(gh) <= eps^-2 sigma(g) sigma(h) plus the U^1 drift bound,
    whenever g is aligned with h at level eps."""
    g = linalg.as_mat(g)
    h = linalg.as_mat(h)
    if not is_aligned(g, h, eps):
        return Verdict("c_prod", applicable=False)
    gh = g @ h
    if linalg.op_norm(gh) == 0.0:
        raise AssertionError("aligned factors cannot have a zero product")
    lhs = sigma(gh)
    rhs = sigma(g) * sigma(h) / eps**2
    drift = proj_dist(top_image_direction(g), top_image_direction(gh))
    drift_ok = _bound_holds(drift, sigma(g) / eps)
    return Verdict("c_prod", applicable=True,
                   passed=_bound_holds(lhs, rhs) and drift_ok,
                   lhs=lhs, rhs=rhs,
                   details={"drift": drift, "drift_bound": sigma(g) / eps})


def check_transmission(f, g, h, eps):
    """sigma(g) <= eps^2/4 and f A^eps g A^{eps/2} h  =>  f A^{eps/2} gh."""
    f, g, h = (linalg.as_mat(m) for m in (f, g, h))
    applicable = (sigma(g) <= THRESHOLDS["eps2_over_4"](eps)
                  and is_aligned(f, g, eps) and is_aligned(g, h, eps / 2))
    if not applicable:
        return Verdict("transmission", applicable=False)
    lhs = alignment_ratio(f, g @ h)
    return Verdict("transmission", applicable=True,
                   passed=bool(lhs >= eps / 2 - SLACK),
                   lhs=lhs, rhs=eps / 2)


def check_triple(f, g, h, eps):
    """f A^eps g A^eps h and sigma(g) <= eps^4/4
    =>  sigma(fgh) <= 4 eps^-4 sigma(f) sigma(g) sigma(h)."""
    f, g, h = (linalg.as_mat(m) for m in (f, g, h))
    applicable = (sigma(g) <= THRESHOLDS["eps4_over_4"](eps)
                  and is_aligned(f, g, eps) and is_aligned(g, h, eps))
    if not applicable:
        return Verdict("triple", applicable=False)
    lhs = sigma(f @ g @ h)
    rhs = AMPLIFIERS["four_inv_eps4"](eps) * sigma(f) * sigma(g) * sigma(h)
    return Verdict("triple", applicable=True, passed=_bound_holds(lhs, rhs),
                   lhs=lhs, rhs=rhs)


def check_chain(chain):
    """Contraction and local-to-global alignment along an aligned chain."""
    eps = chain.eps
    n = len(chain) - 1
    if n == 0:
        ok = linalg.op_norm(chain.links[0]) > 0
        return Verdict("chain", applicable=ok, passed=ok, lhs=None, rhs=None,
                       details={"degenerate": True})
    if not all(chain.aligned):
        return Verdict("chain", applicable=False)
    cchain_ok = all(chain.thresholds[k]["eps2_over_8"] for k in range(n))
    alipart_ok = all(chain.thresholds[k]["eps2_over_12"]
                     for k in range(1, n))
    if not cchain_ok:
        return Verdict("chain", applicable=False)

    norms = [linalg.op_norm(g) for g in chain.links]
    prod = chain.links[0].copy()
    scale = 0.0
    for g in chain.links[1:]:
        prod = prod @ g
        nn = np.linalg.norm(prod)
        prod /= nn
        scale += np.log(nn)
    log_prod_norm = scale + np.log(linalg.op_norm(prod))
    norm_lhs = np.exp(log_prod_norm - np.sum(np.log(norms)))
    norm_rhs = (eps / 2.0) ** n
    norm_bound = bool(norm_lhs >= norm_rhs - SLACK)

    sig_lhs = sigma(prod)
    sig_rhs = AMPLIFIERS["chain"](eps, n) * float(np.prod([sigma(g) for g in chain.links]))
    sigma_bound = _bound_holds(sig_lhs, sig_rhs)

    head = alignment_ratio(chain.links[0], _partial_product(chain.links, 1, n + 1))
    head_alignment = bool(head >= eps / 2 - SLACK)

    split_alignment = None
    if alipart_ok:
        split_alignment = True
        for k in range(1, n + 1):
            left = _partial_product(chain.links, 0, k)
            right = _partial_product(chain.links, k, n + 1)
            if alignment_ratio(left, right) < eps / 2 - SLACK:
                split_alignment = False
    passed = norm_bound and sigma_bound and head_alignment and \
        (split_alignment is not False)
    return Verdict("chain", applicable=True, passed=passed,
                   lhs=sig_lhs, rhs=sig_rhs,
                   details={"norm_bound": norm_bound,
                            "sigma_bound": sigma_bound,
                            "head_alignment": head_alignment,
                            "split_alignment": split_alignment})


def _partial_product(links, i, j):
    """Product links[i] ... links[j-1], rescaled to unit Frobenius norm."""
    prod = links[i].copy()
    for k in range(i + 1, j):
        prod = prod @ links[k]
        prod = prod / np.linalg.norm(prod)
    return prod


def limit_line(chain, tol=1e-12):
    """Cauchy limit of the U^1 directions of the prefix products, with the
    certified per-prefix error bounds (2/eps) sigma(prefix).

    Stops once the a-priori bound drops below tol; a chain too short to get
    there returns the best iterate with its bound.
    """
    eps = chain.eps
    if not all(chain.aligned):
        raise DomainError("limit_line needs a fully aligned chain")
    if not all(t["eps2_over_8"] for t in chain.thresholds[1:]):
        raise DomainError("limit_line needs sigma(g_{n+1}) <= eps^2/8")
    bounds = []
    prod = None
    last_dir = None
    for g in chain.links:
        prod = g.copy() if prod is None else prod @ g
        prod /= np.linalg.norm(prod)
        last_dir = top_image_direction(prod)
        bound = 2.0 / eps * sigma(prod)
        bounds.append(bound)
        if bound < tol:
            break
    return proj_point(last_dir), bounds


def check_eigen_align(g, eps):
    """Self-aligned strongly contracting matrices are proximal, with
    eigenvalue and eigenvector location controlled by sigma."""
    g = linalg.as_mat(g)
    applicable = (sigma(g) <= THRESHOLDS["eps2_over_8"](eps)
                  and is_aligned(g, g, eps))
    if not applicable:
        return Verdict("eigen_align", applicable=False)
    sp = spectral(g)
    if not sp.converged:
        raise AssertionError(
            "spectral failed to converge on an eigen_align instance")
    nrm = linalg.op_norm(g)
    s = sigma(g)
    ev_ok = bool(sp.rho1 >= eps / 2 * nrm - SLACK * nrm)
    ratio = sp.rho2 / sp.rho1
    ratio_ok = _bound_holds(ratio, 4.0 * s / eps**2)
    dist = proj_dist(top_image_direction(g), sp.top_eigen)
    dist_ok = _bound_holds(dist, 2.0 * s / eps)
    return Verdict("eigen_align", applicable=True,
                   passed=ev_ok and ratio_ok and dist_ok,
                   lhs=ratio, rhs=4.0 * s / eps**2,
                   details={"rho1": sp.rho1, "norm": nrm,
                            "eigen_dist": dist, "eigen_bound": 2.0 * s / eps})


def check_rigidity(f, g1, g2, h, eps):
    """sigma(g_i) <= eps^2/12 and f A^{eps/2} g1 A^eps g2 A^{eps/2} h
    =>  f g1 A^{eps/2} g2 h."""
    f, g1, g2, h = (linalg.as_mat(m) for m in (f, g1, g2, h))
    cap = THRESHOLDS["eps2_over_12"](eps)
    applicable = (sigma(g1) <= cap and sigma(g2) <= cap
                  and is_aligned(f, g1, eps / 2) and is_aligned(g1, g2, eps)
                  and is_aligned(g2, h, eps / 2))
    if not applicable:
        return Verdict("rigidity", applicable=False)
    lhs = alignment_ratio(f @ g1, g2 @ h)
    return Verdict("rigidity", applicable=True,
                   passed=bool(lhs >= eps / 2 - SLACK), lhs=lhs, rhs=eps / 2)


def check_atilde(g_minus1, gs, f, h, eps):
    """Half-local half-global alignment: a head factor stays aligned with an
    alternating product whose odd factors are strongly contracting."""
    g_minus1 = linalg.as_mat(g_minus1)
    gs = [linalg.as_mat(g) for g in gs]
    if len(gs) % 2 == 0:
        raise ValueError("gs must have odd length 2n+1")
    n = (len(gs) - 1) // 2
    cap48 = THRESHOLDS["eps6_over_48"](eps)
    applicable = (is_aligned(g_minus1, gs[0], eps)
                  and sigma(gs[0]) <= THRESHOLDS["eps2_over_12"](eps)
                  and all(sigma(gs[2 * i - 1]) <= cap48
                          for i in range(1, n + 1)))
    if applicable:
        for i in range(n):
            prefix = _partial_product(gs, 0, 2 * i + 1)
            if not (is_aligned(prefix, gs[2 * i + 1], eps)
                    and is_aligned(gs[2 * i + 1], gs[2 * i + 2], eps)):
                applicable = False
                break
    if applicable and (f is not None or h is not None):
        applicable = (sigma(g_minus1) <= cap48
                      and is_aligned(f, g_minus1, eps / 2)
                      and is_aligned(_partial_product(gs, 0, len(gs)), h, eps / 2))
    if not applicable:
        return Verdict("atilde", applicable=False)
    full = _partial_product(gs, 0, len(gs))
    head = alignment_ratio(g_minus1, full)
    head_ok = bool(head >= eps / 2 - SLACK)
    sig_ok = _bound_holds(sigma(full), sigma(gs[0]))
    both_ok = True
    lhs2 = None
    if f is not None and h is not None:
        f = linalg.as_mat(f)
        h = linalg.as_mat(h)
        lhs2 = alignment_ratio(f @ g_minus1, full @ h)
        both_ok = bool(lhs2 >= eps / 2 - SLACK)
    return Verdict("atilde", applicable=True,
                   passed=head_ok and sig_ok and both_ok,
                   lhs=head, rhs=eps / 2,
                   details={"sigma_product": sigma(full),
                            "sigma_head": sigma(gs[0]),
                            "two_sided": lhs2})


# ---------------------------------------------------------------------------
# randomized suites
# ---------------------------------------------------------------------------


@dataclass
class SuiteResult:
    lemma: str
    n_instances: int
    n_applicable: int
    n_violations: int
    max_excess: float
    seed: int

    @property
    def passed(self):
        return self.n_violations == 0

    def to_record(self):
        return {"lemma": self.lemma, "instances": self.n_instances,
                "applicable": self.n_applicable,
                "violations": self.n_violations,
                "max_excess": self.max_excess, "seed": self.seed,
                "pass": self.passed}


def _haar(rng, n, d):
    """Haar-distributed orthogonal matrices via sign-fixed QR."""
    q, r = np.linalg.qr(rng.standard_normal((n, d, d)))
    signs = np.sign(np.einsum("nii->ni", r))
    signs[signs == 0] = 1.0
    return q * signs[:, None, :]


def _contracting(rng, n, d, sig_lo, sig_hi):
    """K1 diag(1, q r_2, ..., q r_d) K2 with sigma targeted in [lo, hi]."""
    k1 = _haar(rng, n, d)
    k2 = _haar(rng, n, d)
    r = rng.uniform(0.1, 1.0, size=(n, d - 1))
    r = -np.sort(-r, axis=1)
    target = np.exp(rng.uniform(np.log(sig_lo), np.log(sig_hi), size=n))
    q = target / r[:, 0]
    diag = np.concatenate([np.ones((n, 1)), q[:, None] * r], axis=1)
    return np.einsum("nij,nj,njk->nik", k1, diag, k2)


def _ratios(gs, hs):
    """Batched ||gh|| / (||g|| ||h||)."""
    prod = np.einsum("nij,njk->nik", gs, hs)
    s_prod = svd_values_batch(prod)[:, 0]
    s_g = svd_values_batch(gs)[:, 0]
    s_h = svd_values_batch(hs)[:, 0]
    return s_prod / (s_g * s_h)


def _resample_aligned(rng, gs, make, eps, left=True, max_rounds=200):
    """Resample hs until aligned with gs at per-instance level eps."""
    n = gs.shape[0]
    hs = make(rng, n)
    for _ in range(max_rounds):
        ratios = _ratios(gs, hs) if left else _ratios(hs, gs)
        bad = ratios < eps
        if not bad.any():
            return hs
        hs[bad] = make(rng, int(bad.sum()))
    raise RuntimeError("alignment rejection did not terminate")


def _sigma_b(stack):
    s = svd_values_batch(stack)
    return s[:, 1] / s[:, 0]


def _top_dirs(stack):
    """Batched U^1 directions (image of the top right-singular vector)."""
    u, s, vt = svd_full_batch(stack)
    imgs = np.einsum("nij,nj->ni", stack, vt[:, 0, :])
    nrm = np.linalg.norm(imgs, axis=1, keepdims=True)
    return imgs / nrm


def _normalize(stack):
    return stack / np.linalg.norm(stack, axis=(1, 2), keepdims=True)


def _count_violations(excess):
    excess = np.asarray(excess)
    bad = excess > SLACK
    return int(bad.sum()), float(excess.max(initial=0.0))


def suite_lipschitz(n, seed, d=3):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    f = rng.standard_normal((n, d, d))
    x = rng.standard_normal((n, d))
    y = rng.standard_normal((n, d))
    s1 = svd_values_batch(f)[:, 0]
    fx = np.einsum("nij,nj->ni", f, x)
    fy = np.einsum("nij,nj->ni", f, y)
    lhs = np.abs(np.linalg.norm(fx, axis=1) / (s1 * np.linalg.norm(x, axis=1))
                 - np.linalg.norm(fy, axis=1) / (s1 * np.linalg.norm(y, axis=1)))
    rhs = proj_dist_batch(x, y)
    nv, mx = _count_violations(lhs - rhs)
    return SuiteResult("norm_cocycle_lipschitz", n, n, nv, mx, seed)


def suite_cone_diameter(n, seed, d=3):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    eps = rng.uniform(0.15, 0.5, size=n)
    h = _contracting(rng, n, d, 1e-4, 0.2)
    u, s, vt = svd_full_batch(h)
    v1 = vt[:, 0, :]
    # v' built inside V^eps directly: |cos t| kept above the eps level
    w = rng.standard_normal((n, d))
    w -= np.einsum("ni,ni->n", w, v1)[:, None] * v1
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    cos_t = rng.uniform(np.minimum(1.2 * eps, 0.999), 1.0)
    vp = cos_t[:, None] * v1 + np.sqrt(1 - cos_t**2)[:, None] * w
    hv = np.einsum("nij,nj->ni", h, vp)
    in_cone = np.linalg.norm(hv, axis=1) >= eps * s[:, 0] * np.linalg.norm(vp, axis=1)
    u_top = _top_dirs(h)
    lhs = proj_dist_batch(u_top, hv)
    rhs = (s[:, 1] / s[:, 0]) / eps
    nv, mx = _count_violations(np.where(in_cone, lhs - rhs, -np.inf))
    return SuiteResult("cone_diameter", n, int(in_cone.sum()), nv, mx, seed)


def suite_alignment_witnesses(n, seed, d=3):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    eps = rng.uniform(0.15, 0.4, size=n)
    g = _contracting(rng, n, d, 1e-3, 0.5)
    h = _resample_aligned(rng, g, lambda r, m: _contracting(r, m, d, 1e-3, 0.5),
                          eps)
    gh = np.einsum("nij,njk->nik", g, h)
    u_p, s_p, vt_p = svd_full_batch(gh)
    f = u_p[:, :, 0]
    v = vt_p[:, 0, :]
    u = np.einsum("nij,nj->ni", h, v)
    w = np.einsum("ni,nij->nj", f, g)
    nu = np.linalg.norm(u, axis=1)
    nw = np.linalg.norm(w, axis=1)
    s_g = svd_values_batch(g)[:, 0]
    s_h = svd_values_batch(h)[:, 0]
    wu = np.abs(np.einsum("ni,ni->n", w, u)) / (nw * nu)
    gu = np.linalg.norm(np.einsum("nij,nj->ni", g, u), axis=1) / (s_g * nu)
    wh = np.linalg.norm(np.einsum("ni,nij->nj", w, h), axis=1) / (nw * s_h)
    # cone memberships of the witnesses
    hv_ratio = np.linalg.norm(u, axis=1) / s_h  # ||hv||/(||h|| ||v||), ||v||=1
    fg_ratio = nw / s_g
    excess = np.maximum.reduce([eps - wu, eps - gu, eps - wh,
                                eps - hv_ratio, eps - fg_ratio])
    nv, mx = _count_violations(excess)
    return SuiteResult("alignment_witnesses", n, n, nv, mx, seed)


def suite_c_prod(n, seed, d=3):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    eps = rng.uniform(0.15, 0.5, size=n)
    g = _contracting(rng, n, d, 1e-3, 0.3)
    h = _resample_aligned(rng, g, lambda r, m: _contracting(r, m, d, 1e-3, 0.3),
                          eps)
    gh = np.einsum("nij,njk->nik", g, h)
    lhs = _sigma_b(gh)
    rhs = _sigma_b(g) * _sigma_b(h) / eps**2
    drift = proj_dist_batch(_top_dirs(g), _top_dirs(gh))
    drift_rhs = _sigma_b(g) / eps
    excess = np.maximum(lhs - rhs, drift - drift_rhs)
    nv, mx = _count_violations(excess)
    return SuiteResult("product_contraction", n, n, nv, mx, seed)


def suite_transmission(n, seed, d=3):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    eps = rng.uniform(0.15, 0.5, size=n)
    g = _contracting_capped(rng, n, d, eps**2 / 4 * 0.999)
    f = _resample_aligned(rng, g, lambda r, m: _contracting(r, m, d, 1e-3, 0.5),
                          eps, left=False)
    h = _resample_aligned(rng, g, lambda r, m: _contracting(r, m, d, 1e-3, 0.5),
                          eps / 2)
    gh = np.einsum("nij,njk->nik", g, h)
    lhs = _ratios(f, gh)
    nv, mx = _count_violations(eps / 2 - lhs)
    return SuiteResult("transmission", n, n, nv, mx, seed)


def suite_triple(n, seed, d=3):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    eps = rng.uniform(0.2, 0.5, size=n)
    cap = eps**4 / 4
    g = _contracting_capped(rng, n, d, cap)
    f = _resample_aligned(rng, g, lambda r, m: _contracting(r, m, d, 1e-3, 0.5),
                          eps, left=False)
    h = _resample_aligned(rng, g, lambda r, m: _contracting(r, m, d, 1e-3, 0.5),
                          eps)
    fgh = np.einsum("nij,njk,nkl->nil", f, g, h)
    lhs = _sigma_b(_normalize(fgh))
    rhs = 4.0 / eps**4 * _sigma_b(f) * _sigma_b(g) * _sigma_b(h)
    nv, mx = _count_violations(lhs - rhs)
    return SuiteResult("triple_product", n, n, nv, mx, seed)


def _contracting_capped(rng, n, d, caps, frac_lo=0.05):
    """Contracting matrices with per-instance sigma <= caps (with margin)."""
    caps = np.broadcast_to(np.asarray(caps, dtype=float), (n,))
    lo = caps * frac_lo
    out = np.empty((n, d, d))
    k1 = _haar(rng, n, d)
    k2 = _haar(rng, n, d)
    r = -np.sort(-rng.uniform(0.1, 1.0, size=(n, d - 1)), axis=1)
    target = np.exp(rng.uniform(np.log(lo), np.log(caps * 0.999)))
    q = target / r[:, 0]
    diag = np.concatenate([np.ones((n, 1)), q[:, None] * r], axis=1)
    out[:] = np.einsum("nij,nj,njk->nik", k1, diag, k2)
    return out


def _build_chain_batch(rng, n, d, length, eps, cap_fn):
    """Chains of `length+1` links, pairwise aligned, sigma-capped."""
    caps = cap_fn(eps)
    links = [_contracting_capped(rng, n, d, caps)]
    for _ in range(length):
        prev = links[-1]
        nxt = _contracting_capped(rng, n, d, caps)
        for _ in range(200):
            bad = _ratios(prev, nxt) < eps
            if not bad.any():
                break
            nxt[bad] = _contracting_capped(rng, int(bad.sum()), d,
                                           caps[bad] if np.ndim(caps) else caps)
        links.append(nxt)
    return links


def suite_chain_contraction(n, seed, d=3, max_len=12):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    per = n // max_len + 1
    total = 0
    viol = 0
    mx = 0.0
    for length in range(1, max_len + 1):
        m = min(per, n - total)
        if m <= 0:
            break
        eps = rng.uniform(0.25, 0.5, size=m)
        links = _build_chain_batch(rng, m, d, length, eps,
                                   lambda e: e**2 / 8 * 0.999)
        prods = links[0].copy()
        corr = np.zeros(m)                      # log of Frobenius rescales
        log_norm_sum = np.log(svd_values_batch(links[0])[:, 0])
        sig_bound = _sigma_b(links[0])
        for k in range(1, length + 1):
            prods = np.einsum("nij,njk->nik", prods, links[k])
            f = np.linalg.norm(prods, axis=(1, 2))
            prods /= f[:, None, None]
            corr += np.log(f)
            sig_bound = sig_bound * _sigma_b(links[k]) * 4 / eps**2
            log_norm_sum += np.log(svd_values_batch(links[k])[:, 0])
        # ||g_0...g_n|| / prod ||g_j|| >= (eps/2)^n, both sides in [0, 1]
        norm_lhs = np.exp(corr + np.log(svd_values_batch(prods)[:, 0])
                          - log_norm_sum)
        norm_excess = (eps / 2) ** length - norm_lhs
        sig_excess = _sigma_b(prods) - sig_bound
        head = _ratios(links[0], _chain_suffix(links, 1, eps))
        head_excess = eps / 2 - head
        excess = np.maximum.reduce([norm_excess, sig_excess, head_excess])
        v, m_ = _count_violations(excess)
        viol += v
        mx = max(mx, m_)
        total += m
    return SuiteResult("chain_contraction", total, total, viol, mx, seed)


def _chain_suffix(links, start, eps):
    out = links[start].copy()
    for k in range(start + 1, len(links)):
        out = np.einsum("nij,njk->nik", out, links[k])
        out /= np.linalg.norm(out, axis=(1, 2), keepdims=True)
    return out


def suite_chain_split(n, seed, d=3, max_len=8):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    per = n // (max_len - 1) + 1
    total = 0
    viol = 0
    mx = 0.0
    for length in range(2, max_len + 1):
        m = min(per, n - total)
        if m <= 0:
            break
        eps = rng.uniform(0.25, 0.5, size=m)
        links = _build_chain_batch(rng, m, d, length, eps,
                                   lambda e: e**2 / 12 * 0.999)
        for k in range(1, length + 1):
            left = _chain_prefix(links, k)
            right = _chain_suffix(links, k, eps)
            ratio = _ratios(left, right)
            v, m_ = _count_violations(eps / 2 - ratio)
            viol += v
            mx = max(mx, m_)
        total += m
    return SuiteResult("chain_split", total, total, viol, mx, seed)


def _chain_prefix(links, k):
    out = links[0].copy()
    for i in range(1, k):
        out = np.einsum("nij,njk->nik", out, links[i])
        out /= np.linalg.norm(out, axis=(1, 2), keepdims=True)
    return out


def suite_limit_line(n, seed, d=3, length=8):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    eps = rng.uniform(0.3, 0.5, size=n)
    links = _build_chain_batch(rng, n, d, length, eps,
                               lambda e: e**2 / 8 * 0.999)
    dirs = []
    sig_prefix = []
    prod = None
    for k in range(length + 1):
        prod = links[k].copy() if prod is None else np.einsum(
            "nij,njk->nik", prod, links[k])
        prod /= np.linalg.norm(prod, axis=(1, 2), keepdims=True)
        dirs.append(_top_dirs(prod))
        sig_prefix.append(_sigma_b(prod))
    viol = 0
    mx = 0.0
    for k in range(1, length + 1):
        dist = proj_dist_batch(dirs[k - 1], dirs[length])
        bound = 2.0 / eps * sig_prefix[k - 1]
        v, m_ = _count_violations(dist - bound)
        viol += v
        mx = max(mx, m_)
    return SuiteResult("limit_line", n, n, viol, mx, seed)


def suite_rigidity(n, seed, d=3):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    eps = rng.uniform(0.2, 0.5, size=n)
    cap = eps**2 / 12 * 0.999
    g1 = _contracting_capped(rng, n, d, cap)
    g2 = _resample_aligned(rng, g1, lambda r, m: _contracting(r, m, d, 1e-4, 1.0),
                           eps)
    for _ in range(200):
        bad = _sigma_b(g2) > cap
        bad |= _ratios(g1, g2) < eps
        if not bad.any():
            break
        g2[bad] = _contracting_capped(rng, int(bad.sum()), d, cap[bad])
    f = _resample_aligned(rng, g1, lambda r, m: _contracting(r, m, d, 1e-3, 0.5),
                          eps / 2, left=False)
    h = _resample_aligned(rng, g2, lambda r, m: _contracting(r, m, d, 1e-3, 0.5),
                          eps / 2)
    left = np.einsum("nij,njk->nik", f, g1)
    right = np.einsum("nij,njk->nik", g2, h)
    ratio = _ratios(left, right)
    nv, mx = _count_violations(eps / 2 - ratio)
    return SuiteResult("rigidity", n, n, nv, mx, seed)


def suite_half_global(n, seed, d=3, max_n=3):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    per = n // (max_n + 1) + 1
    total = 0
    viol = 0
    mx = 0.0
    for depth in range(0, max_n + 1):
        m = min(per, n - total)
        if m <= 0:
            break
        eps = rng.uniform(0.3, 0.5, size=m)
        cap48 = eps**6 / 48 * 0.999
        g0 = _contracting_capped(rng, m, d, eps**2 / 12 * 0.999)
        gm1 = _contracting_capped(rng, m, d, cap48)
        for _ in range(200):
            bad = _ratios(gm1, g0) < eps
            if not bad.any():
                break
            gm1[bad] = _contracting_capped(rng, int(bad.sum()), d, cap48[bad])
        gs = [g0]
        prefix = g0.copy()
        for i in range(depth):
            odd = _contracting_capped(rng, m, d, cap48)
            for _ in range(200):
                bad = _ratios(prefix, odd) < eps
                if not bad.any():
                    break
                odd[bad] = _contracting_capped(rng, int(bad.sum()), d,
                                               cap48[bad])
            even = _contracting(rng, m, d, 1e-3, 1.0)
            for _ in range(200):
                bad = _ratios(odd, even) < eps
                if not bad.any():
                    break
                even[bad] = _contracting(rng, int(bad.sum()), d, 1e-3, 1.0)
            gs.extend([odd, even])
            prefix = np.einsum("nij,njk->nik", prefix, odd)
            prefix = np.einsum("nij,njk->nik", prefix, even)
            prefix /= np.linalg.norm(prefix, axis=(1, 2), keepdims=True)
        full = _chain_prefix(gs, len(gs))
        f = _resample_aligned(rng, gm1, lambda r, mm: _contracting(r, mm, d, 1e-3, 0.5),
                              eps / 2, left=False)
        h = _resample_aligned(rng, full, lambda r, mm: _contracting(r, mm, d, 1e-3, 0.5),
                              eps / 2)
        head = _ratios(gm1, full)
        sig_excess = _sigma_b(full) - _sigma_b(g0)
        left = np.einsum("nij,njk->nik", f, gm1)
        right = np.einsum("nij,njk->nik", full, h)
        two = _ratios(left, right)
        excess = np.maximum.reduce([eps / 2 - head, sig_excess,
                                    eps / 2 - two])
        v, m_ = _count_violations(excess)
        viol += v
        mx = max(mx, m_)
        total += m
    return SuiteResult("half_global_alignment", total, total, viol, mx, seed)


def _batch_power(stack, iters=256):
    """Fixed-iteration batched power method: growth and limit direction."""
    m, d, _ = stack.shape
    x = np.full((m, d), 1.0 / np.sqrt(d))
    for _ in range(iters):
        y = np.einsum("nij,nj->ni", stack, x)
        nrm = np.linalg.norm(y, axis=1, keepdims=True)
        nrm[nrm == 0] = 1.0
        x = y / nrm
    growth = np.linalg.norm(np.einsum("nij,nj->ni", stack, x), axis=1)
    return growth, x


def suite_eigen_align(n, seed, d=3):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    eps = rng.uniform(0.2, 0.5, size=n)
    cap = eps**2 / 8 * 0.999
    g = _contracting_capped(rng, n, d, cap)
    for _ in range(400):
        bad = _ratios(g, g) < eps
        if not bad.any():
            break
        g[bad] = _contracting_capped(rng, int(bad.sum()), d, cap[bad])
    s = svd_values_batch(g)
    g_unit = g / s[:, 0][:, None, None]
    rho1, x = _batch_power(g_unit)
    w = linalg.wedge_square_batch(g_unit)
    sw = svd_values_batch(w)[:, 0]
    safe = np.where(sw > 0, sw, 1.0)
    rho12, _ = _batch_power(w / safe[:, None, None])
    rho12 *= np.where(sw > 0, safe, 0.0)
    rho2 = np.where(rho1 > 0, rho12 / rho1, 0.0)
    sig = s[:, 1] / s[:, 0]
    ev_excess = eps / 2 - rho1          # rho1 >= eps/2 (unit norm)
    ratio_excess = rho2 / rho1 - 4 * sig / eps**2
    dist = proj_dist_batch(_top_dirs(g), x)
    dist_excess = dist - 2 * sig / eps
    excess = np.maximum.reduce([ev_excess, ratio_excess, dist_excess])
    nv, mx = _count_violations(excess)
    return SuiteResult("eigen_align", n, n, nv, mx, seed)


SUITES = {
    "norm_cocycle_lipschitz": suite_lipschitz,
    "cone_diameter": suite_cone_diameter,
    "alignment_witnesses": suite_alignment_witnesses,
    "product_contraction": suite_c_prod,
    "transmission": suite_transmission,
    "triple_product": suite_triple,
    "chain_contraction": suite_chain_contraction,
    "limit_line": suite_limit_line,
    "rigidity": suite_rigidity,
    "chain_split": suite_chain_split,
    "half_global_alignment": suite_half_global,
    "eigen_align": suite_eigen_align,
}


def run_suite(lemma, n, seed, **kw):
    return SUITES[lemma](n, seed, **kw)


def run_all_suites(n, seed):
    return {name: fn(n, seed + i) for i, (name, fn) in enumerate(SUITES.items())}


def export_suite_json(results, path):
    with open(path, "w") as fh:
        json.dump([r.to_record() for r in results.values()], fh, indent=2,
                  sort_keys=True)


def export_verdicts(verdicts, path, seed=None):
    """Write a list of scalar check_* verdicts as JSON rows
    (lemma, seed, applicable, pass, lhs, rhs)."""
    with open(path, "w") as fh:
        json.dump([v.to_record(seed) for v in verdicts], fh, indent=2,
                  sort_keys=True)
