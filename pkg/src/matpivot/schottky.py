"""Numerical construction of a Schottky decomposition for a strongly
irreducible, proximal matrix distribution.

The base measure's m-fold word products are clustered around rank-one
boundary directions; the restricted-and-reweighted part of the law on those
clusters is the Schottky part, the complement the unknown part.  The
construction is certified empirically (adversarial misalignment masses), not
provably.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from ._dispatch import svd_full_batch, svd_values_batch
from .rng import substream
from .semigroup import SchottkyInput, matrix_instance


class ConstructionError(RuntimeError):
    """The search could not certify a decomposition within its budget."""


@dataclass
class BoundaryAtlas:
    us: np.ndarray          # (N, d) image-side directions
    ws: np.ndarray          # (N, d) row-side directions
    horizon: int
    quality: np.ndarray     # sigma of the generating products
    separation: float

    @property
    def n_dirs(self):
        return len(self.us)

    def centers(self):
        """Rank-one center matrices pi_k = u_k w_k^T (unit operator norm)."""
        return np.einsum("ni,nj->nij", self.us, self.ws)


def _long_products(sampler, rng, count, horizon, d):
    """Frobenius-rescaled products of `horizon` sampled letters."""
    prods = np.broadcast_to(np.eye(d), (count, d, d)).copy()
    for _ in range(horizon):
        letters = sampler(rng, count)
        prods = np.einsum("nij,njk->nik", prods, letters)
        prods /= np.linalg.norm(prods, axis=(1, 2), keepdims=True)
    return prods


def _unit_dirs(vectors):
    out = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    # canonical sign: first coordinate of largest modulus made positive
    lead = np.take_along_axis(out, np.argmax(np.abs(out), axis=1)[:, None],
                              axis=1)[:, 0]
    return out * np.sign(lead)[:, None]


def estimate_boundary(sampler, d, n_dirs, horizon, seed, n_candidates=None,
                      separation_floor=0.02, max_rounds=4,
                      quality_cap=1e-6):
    """Extract separated rank-one boundary directions from long products.

    u = top left-singular direction, w = top right-singular direction of
    independent horizon-length products; candidates above the quality cap
    (sigma of the generating product) are dropped, and greedy farthest-point
    selection enforces pairwise separation on both sides.
    """
    rng = substream(seed, "boundary")
    count = n_candidates or max(64, 16 * n_dirs)
    best = None
    for _ in range(max_rounds):
        prods = _long_products(sampler, rng, count, horizon, d)
        u_full, s, vt = svd_full_batch(prods)
        keep = (s[:, 1] / s[:, 0]) <= quality_cap
        if keep.sum() < n_dirs:
            count *= 2
            continue
        u_full, s, vt = u_full[keep], s[keep], vt[keep]
        us = _unit_dirs(u_full[:, :, 0])
        ws = _unit_dirs(vt[:, 0, :])
        quality = s[:, 1] / s[:, 0]
        chosen = [0]
        for _ in range(n_dirs - 1):
            du = _pd_matrix(us[chosen], us)
            dw = _pd_matrix(ws[chosen], ws)
            score = np.minimum(du.min(axis=0), dw.min(axis=0))
            nxt = int(np.argmax(score))
            if score[nxt] <= 0:
                break
            chosen.append(nxt)
        if len(chosen) == n_dirs:
            sep = _separation(us[chosen], ws[chosen])
            if best is None or sep > best.separation:
                best = BoundaryAtlas(us=us[chosen], ws=ws[chosen],
                                     horizon=horizon,
                                     quality=quality[chosen],
                                     separation=sep)
            if best.separation >= separation_floor:
                return best
        count *= 2
    achieved = best.separation if best is not None else 0.0
    raise ConstructionError(
        "insufficient proximality/irreducibility at this horizon: "
        f"separation {achieved:.4f} < floor {separation_floor:.4f}")


def _pd_matrix(a, b):
    """Pairwise projective distances between two direction stacks."""
    g = np.abs(np.einsum("mi,ni->mn", a, b))
    return np.sqrt(np.clip(1.0 - g**2, 0.0, None))


def _separation(us, ws):
    n = len(us)
    if n < 2:
        return 1.0
    du = _pd_matrix(us, us)
    dw = _pd_matrix(ws, ws)
    mask = ~np.eye(n, dtype=bool)
    return float(min(du[mask].min(), dw[mask].min()))


@dataclass
class SchottkyModel:
    """Certified decomposition data: the m-fold word law splits as
    alpha * (schottky part) + (1 - alpha) * (unknown part)."""

    d: int
    m: int
    eps: float
    rho: float
    alpha: float
    delta: float
    centers: np.ndarray       # (N, d, d) rank-one cluster centers
    masses: np.ndarray        # empirical cluster masses under the m-fold law
    seed: int
    verify_report: dict = field(default_factory=dict)
    sampler: "callable | None" = None    # base-measure letter sampler

    @property
    def n_clusters(self):
        return len(self.centers)

    # -- membership and density ------------------------------------------

    def membership(self, prods):
        """(count, N) bool: unit-scaled products inside each cluster."""
        prods = np.asarray(prods, dtype=float)
        s = svd_values_batch(prods)
        unit = prods / s[:, 0][:, None, None]
        sig_ok = (s[:, 1] / s[:, 0]) <= self.delta
        out = np.empty((len(prods), self.n_clusters), dtype=bool)
        for k, pi in enumerate(self.centers):
            c = np.einsum("nij,ij->n", unit, pi)   # <s, pi>_F, ||pi||_F = 1
            c = np.where(np.abs(c) >= 1.0, c, np.sign(c) + (c == 0))
            resid = unit - c[:, None, None] * pi
            dist = svd_values_batch(resid)[:, 0]
            out[:, k] = (dist <= self.eps) & sig_ok
        return out

    def density(self, prods):
        """Schottky-part density against the m-fold word law, bounded by
        N / alpha by construction."""
        hits = self.membership(prods)
        return (hits / self.masses[None, :]).sum(axis=1) / self.n_clusters

    # -- samplers -----------------------------------------------------------

    def _word_products(self, rng, count):
        words = np.empty((count, self.m, self.d, self.d))
        prods = np.broadcast_to(np.eye(self.d), (count, self.d, self.d)).copy()
        for t in range(self.m):
            letters = self.sampler(rng, count)
            words[:, t] = letters
            prods = np.einsum("nij,njk->nik", prods, letters)
            prods /= np.linalg.norm(prods, axis=(1, 2), keepdims=True)
        return words, prods

    def sample_schottky_words(self, rng, count):
        """Words conditioned into the clusters, weighted by 1/mass_k
        (rejection on the density)."""
        out_w = []
        out_p = []
        fmax = 1.0 / (self.n_clusters * self.masses.min())
        guard = 0
        while sum(len(w) for w in out_w) < count:
            guard += 1
            if guard > 4000:
                raise ConstructionError("schottky sampler starved")
            words, prods = self._word_products(rng, max(count, 2048))
            dens = self.density(prods)
            accept = rng.random(len(prods)) < dens / fmax
            out_w.append(words[accept])
            out_p.append(prods[accept])
        words = np.concatenate(out_w)[:count]
        prods = np.concatenate(out_p)[:count]
        sig = svd_values_batch(prods)
        if np.any(sig[:, 1] / sig[:, 0] > self.delta + 1e-12):
            raise AssertionError("schottky sample escaped the sigma cap")
        return words, prods

    def sample_unknown_words(self, rng, count):
        """Complement part: acceptance (1 - alpha * density) stays in [0,1]
        pointwise because density <= N/alpha."""
        out = []
        got = 0
        guard = 0
        while got < count:
            guard += 1
            if guard > 4000:
                raise ConstructionError("unknown sampler starved")
            words, prods = self._word_products(rng, max(count, 256))
            acc_fn = 1.0 - self.alpha * self.density(prods)
            if np.any(acc_fn < -1e-12) or np.any(acc_fn > 1.0 + 1e-12):
                raise AssertionError("kappa acceptance left [0, 1]")
            accept = rng.random(len(prods)) < np.clip(acc_fn, 0.0, 1.0)
            out.append(words[accept])
            got += int(accept.sum())
        return np.concatenate(out)[:count]

    def batch_schottky_products(self, rng, count):
        _, prods = self.sample_schottky_words(rng, count)
        return prods

    # -- wiring into the pivot pipeline ------------------------------------

    def to_input(self, mass_budget=4096, seed=None, bank_size=2**15):
        inst = matrix_instance(self.eps)
        model = self
        bank = None
        if bank_size:
            bank = self.batch_schottky_products(
                substream(self.seed, "bank"), bank_size)

        class _OneAtATime:
            """Buffers batched rejection sampling behind the one-word API."""

            def __init__(self, batch_fn, chunk=64):
                self.batch_fn = batch_fn
                self.chunk = chunk
                self.buf = []

            def __call__(self, rng):
                if not self.buf:
                    self.buf = list(self.batch_fn(rng, self.chunk))
                word = self.buf.pop()
                return tuple(np.asarray(l) for l in word)

        return SchottkyInput(
            instance=inst, rho=self.rho, alpha=self.alpha, m=self.m,
            sample_schottky_word=_OneAtATime(
                lambda rng, c: model.sample_schottky_words(rng, c)[0]),
            sample_unknown_word=_OneAtATime(model.sample_unknown_words),
            support=None,
            batch_schottky_products=model.batch_schottky_products,
            product_bank=bank,
            seed=self.seed if seed is None else seed,
            mass_budget=mass_budget,
            eps=self.eps,
        )

    # -- serialization -------------------------------------------------------

    def to_json(self, path):
        doc = {"d": self.d, "m": self.m, "eps": self.eps, "rho": self.rho,
               "alpha": self.alpha, "delta": self.delta, "seed": self.seed,
               "centers": self.centers.tolist(),
               "masses": self.masses.tolist(),
               "verify_report": self.verify_report}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path, sampler=None):
        with open(path) as fh:
            doc = json.load(fh)
        return cls(d=doc["d"], m=doc["m"], eps=doc["eps"], rho=doc["rho"],
                   alpha=doc["alpha"], delta=doc["delta"], seed=doc["seed"],
                   centers=np.asarray(doc["centers"]),
                   masses=np.asarray(doc["masses"]),
                   verify_report=doc.get("verify_report", {}),
                   sampler=sampler)


def verify_schottky(model, adversaries, rho, budget=2**14, seed=0):
    """Empirical misalignment masses against a list of adversaries (matrices
    or vectors/covectors); passes iff the worst mass stays <= rho."""
    rng = substream(seed, "verify")
    prods = model.batch_schottky_products(rng, budget)
    s1 = svd_values_batch(prods)[:, 0]
    eps = model.eps
    rows = []
    for h in adversaries:
        h = np.asarray(h, dtype=float)
        if h.ndim == 1:
            hn = np.linalg.norm(h)
            left = np.linalg.norm(np.einsum("i,nij->nj", h, prods), axis=1)
            bad_left = float((left < eps * hn * s1).mean())
            right = np.linalg.norm(np.einsum("nij,j->ni", prods, h), axis=1)
            bad_right = float((right < eps * s1 * hn).mean())
        else:
            hn = svd_values_batch(h[None])[0, 0]
            lp = np.einsum("ij,njk->nik", h, prods)
            bad_left = float((svd_values_batch(lp)[:, 0] < eps * hn * s1).mean())
            rp = np.einsum("nij,jk->nik", prods, h)
            bad_right = float((svd_values_batch(rp)[:, 0] < eps * s1 * hn).mean())
        rows.append(max(bad_left, bad_right))
    worst = max(rows) if rows else 0.0
    failing = [i for i, r in enumerate(rows) if r > rho]
    return {"worst_mass": worst, "per_adversary": rows, "failing": failing,
            "passes": worst <= rho, "budget": budget}


def _default_adversaries(rng, d, model, count=64):
    out = [rng.standard_normal((d, d)) for _ in range(count)]
    out += [rng.standard_normal(d) for _ in range(count // 2)]
    out += [c for c in model.centers]
    return out


def build_schottky(sampler, d, rho=1.0 / 6.0, delta_rule=None,
                   eps_grid=None, m_max=24, samples=2**13, alpha_min=None,
                   seed=0, horizon=60, n_dirs=None, separation_floor=0.02,
                   search_adversaries=48, search_budget=2**12):
    """Search word lengths m (ascending) and alignment levels eps for the
    first pair whose clusters carry mass and pass the empirical Schottky
    check; alpha is half the smallest cluster mass."""
    delta_rule = delta_rule or (lambda e: e**6 / 48.0)
    eps_grid = eps_grid if eps_grid is not None else [2.0**-k for k in range(1, 9)]
    if not 0.0 < rho < 0.2:
        raise ConstructionError("rho must lie in (0, 1/5)")
    # two clusters beyond the ceil((d-1)/rho) floor so the worst-case
    # misalignment mass sits strictly below rho, not at it
    n_dirs = n_dirs or int(np.ceil((d - 1) / rho)) + 2
    alpha_min = alpha_min or 8.0 / samples

    atlas = estimate_boundary(sampler, d, n_dirs, horizon, seed,
                              separation_floor=separation_floor)
    centers = atlas.centers()
    rng = substream(seed, "search")
    best = {"rho": None, "m": None}

    for m in range(1, m_max + 1):
        prods = np.broadcast_to(np.eye(d), (samples, d, d)).copy()
        rng_m = substream(seed, "words", m)
        for _ in range(m):
            prods = np.einsum("nij,njk->nik", prods, sampler(rng_m, samples))
            prods /= np.linalg.norm(prods, axis=(1, 2), keepdims=True)
        s = svd_values_batch(prods)
        sig = s[:, 1] / s[:, 0]
        for eps in eps_grid:
            delta = delta_rule(eps)
            if float((sig <= delta).mean()) * 1.05 < n_dirs * alpha_min:
                continue
            model = SchottkyModel(
                d=d, m=m, eps=eps, rho=rho, alpha=0.0, delta=delta,
                centers=centers, masses=np.ones(n_dirs), seed=seed,
                sampler=sampler)
            hits = model.membership(prods)
            masses = hits.mean(axis=0)
            if masses.min() < alpha_min:
                continue
            model.masses = masses
            model.alpha = float(masses.min() / 2.0)
            adv = _default_adversaries(rng, d, model,
                                       count=search_adversaries)
            rep = verify_schottky(model, adv, rho, budget=search_budget,
                                  seed=seed)
            if best["rho"] is None or rep["worst_mass"] < best["rho"]:
                best = {"rho": rep["worst_mass"], "m": m, "eps": eps}
            if rep["passes"]:
                model.verify_report = rep
                return model
    raise ConstructionError(
        f"search budget exhausted: best worst-mass {best['rho']} at "
        f"m={best['m']}, target rho={rho}")


def sample_interleaved(model, seed):
    """Infinite stream of tagged m-letter blocks; tags are i.i.d.
    Bernoulli(alpha), so the untagged letter stream keeps the base law."""
    rng = substream(seed, "interleave")

    def gen():
        s_buf = []
        u_buf = []
        while True:
            if rng.random() < model.alpha:
                if not s_buf:
                    s_buf = list(model.sample_schottky_words(rng, 64)[0])
                yield "schottky", s_buf.pop()
            else:
                if not u_buf:
                    u_buf = list(model.sample_unknown_words(rng, 64))
                yield "unknown", u_buf.pop()

    return gen()
