"""The pivotal extraction pipeline, generic over a semigroup instance.

Layers, bottom to top:

* a w-level stream alternating (unknown run, schottky word) blocks;
* the first extraction v: penalized search for aligned triples, giving
  quadruples (aligned block, schottky, unknown, fresh schottky);
* the hat-v regrouping (3, 1): alternating (aligned triple, schottky atom);
* the pivot algorithm with penalties on the hat-v stream, an online state
  machine with forward / backtrack / reset branches.

Penalties come from a counter-based generator keyed by (seed, layer, index);
a backtrack reuses the penalty consumed when the pivot it removes was placed.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .rng import keyed_uniform, substream
from .semigroup import MassEvaluator, fg_concat


@dataclass
class WBlock:
    elem: object            # product of the block's words; None if empty
    tag: str                # 'unknown' or 'schottky'
    n_words: int
    letters: int            # base-letter count (= m * n_words)
    words: "list | None" = None


@dataclass
class HVBlock:
    elem: object
    tag: str                # 'even' (aligned triple) or 'odd' (schottky atom)
    letters: int
    words: "list | None" = None


@dataclass
class Extraction:
    """Weight sequence over an underlying stream, with prefix sums."""

    weights: list

    def bar(self, k):
        return int(np.sum(self.weights[:k], dtype=np.int64)) if k > 0 else 0

    def block(self, stream, k):
        return stream[self.bar(k):self.bar(k + 1)]

    def block_product(self, instance, stream, k):
        out = None
        for e in self.block(stream, k):
            out = instance.prod(out, e)
        return out


@dataclass
class PivotState:
    """Engine induction state after step j."""

    j: int
    m_j: int
    p_sparse: list          # [p_0, p_2, ..., p_{2 m_j}]; other entries are 1
    penalties_consumed: int


def build_w_stream(inp, seed, n_pairs, keep_words=True):
    """Materialize n_pairs of (unknown run, schottky) w-blocks.

    Each m-word is schottky with probability alpha independently, which
    preserves the base law of the concatenated letter stream.
    """
    rng = substream(seed, "stream")
    inst = inp.instance
    blocks = []
    for _ in range(n_pairs):
        words = []
        while rng.random() >= inp.alpha:
            words.append(inp.sample_unknown_word(rng))
        elem = None
        for w in words:
            for letter in w:
                elem = inst.prod(elem, letter)
        blocks.append(WBlock(elem=elem, tag="unknown", n_words=len(words),
                             letters=inp.m * len(words),
                             words=words if keep_words else None))
        sw = inp.sample_schottky_word(rng)
        selem = None
        for letter in sw:
            selem = inst.prod(selem, letter)
        blocks.append(WBlock(elem=selem, tag="schottky", n_words=1,
                             letters=inp.m,
                             words=[sw] if keep_words else None))
    return blocks


@dataclass
class VExtraction:
    v: list                     # weights in w-block units
    blocks: list
    quads: list
    n_pairs_consumed: int


def extract_v(inp, blocks, seed, max_quads=None, mass_evaluator=None):
    """Penalized first extraction: walk candidate pairs until the aligned
    triple event, flattened to probability exactly 1-2rho by the penalty."""
    inst = inp.instance
    rho = inp.rho
    mass = mass_evaluator or MassEvaluator(inp)
    v = []
    quads = []
    prefix = None
    seg_start = 0
    j = 0
    while 2 * j + 3 < len(blocks):
        if max_quads is not None and len(quads) >= max_quads:
            break
        if j == seg_start:
            prefix = blocks[2 * j].elem
        s_blk = blocks[2 * j + 1]
        u_blk = blocks[2 * j + 2]
        ali = inst.ali(prefix, s_blk.elem) and inst.ali(s_blk.elem, u_blk.elem)
        p_j = mass.query([prefix], [u_blk.elem])
        tau = keyed_uniform(seed, "v", j)
        if ali and tau < (1.0 - 2.0 * rho) / p_j.value:
            s2_blk = blocks[2 * j + 3]
            if s2_blk.tag != "schottky":
                raise AssertionError("w-stream structure broken")
            v.extend([2 * (j - seg_start) + 1, 1, 1, 1])
            quads.append({
                "pair_start": seg_start, "pair_success": j,
                "prefix": prefix, "s": s_blk.elem, "u": u_blk.elem,
                "s_next": s2_blk.elem, "mass": p_j.value, "tau": tau,
                "failures": j - seg_start,
            })
            seg_start = j + 2
            prefix = None
            j += 2
        else:
            prefix = inst.prod(inst.prod(prefix, s_blk.elem), u_blk.elem)
            j += 1
    return VExtraction(v=v, blocks=blocks[:2 * seg_start], quads=quads,
                       n_pairs_consumed=seg_start)


def regroup_hat_v(inp, vext):
    """(3,1) regrouping: even blocks are the aligned triples, odd blocks the
    fresh schottky words."""
    inst = inp.instance
    out = []
    for q in vext.quads:
        lo = 2 * q["pair_start"]
        hi = 2 * q["pair_success"] + 3          # through the u block
        lets = sum(vext.blocks[i].letters for i in range(lo, hi))
        triple = inst.prod(inst.prod(q["prefix"], q["s"]), q["u"])
        words = None
        if vext.blocks[lo].words is not None:
            words = [w for b in vext.blocks[lo:hi] for w in (b.words or [])]
        out.append(HVBlock(elem=triple, tag="even", letters=lets,
                           words=words))
        out.append(HVBlock(elem=q["s_next"], tag="odd", letters=inp.m,
                           words=vext.blocks[hi].words))
    return out


@dataclass
class Segment:
    elem: object
    first: object           # the hat-v letter that starts the segment
    start: int              # hat-v index of the first block
    count: int              # hat-v block count (the weight p_{2i})
    letters: int


@dataclass
class PivotEvent:
    step: int
    branch: str             # 'forward' | 'backtrack' | 'reset'
    m_before: int
    m_after: int
    depth: int
    tau: float
    threshold: float
    mass: float
    aligned: bool


@dataclass
class PivotRun:
    instance_name: str
    seed: int
    rho: float
    eps: "float | None"
    n_steps: int
    m_trace: list
    segments: list
    pivots: list            # (elem, placed_step, hatv_index, letters)
    hatv: list
    events: list
    truncated: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def p_weights(self):
        """Final sparse p in hat-v units: [p_0, 1, p_2, 1, ..., p_{2m}];
        entries beyond the stored prefix are implicitly 1."""
        out = []
        for i, seg in enumerate(self.segments):
            out.append(seg.count)
            if i < len(self.pivots):
                out.append(1)
        return out

    @property
    def even_weights(self):
        return [s.count for s in self.segments]

    @property
    def n_letters(self):
        return sum(h.letters for h in self.hatv)

    @property
    def state(self):
        return PivotState(j=self.n_steps - 1, m_j=len(self.pivots),
                          p_sparse=self.even_weights,
                          penalties_consumed=self.n_steps)

    def pbar(self, k):
        w = self.p_weights
        return sum(w[:k]) if k <= len(w) else sum(w) + (k - len(w))

    def pbar_letters(self, k):
        """Base-letter prefix sums of the final p-blocks."""
        pl = 0
        for i in range(k):
            if i % 2 == 0:
                pl += self.segments[i // 2].letters
            else:
                pl += self.pivots[i // 2][3]
        return pl

    def settled_even_weights(self, margin=32):
        """p_{2k}, k >= 1, excluding the final incomplete block plus a
        safety margin that later backtracks could still reach."""
        stop = len(self.segments) - 1 - margin
        return [seg.count for seg in self.segments[1:stop]]

    def to_event_json(self, path):
        with open(path, "w") as fh:
            json.dump([e.__dict__ for e in self.events], fh)

    def m_trace_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "m"])
            for j, m in enumerate(self.m_trace):
                w.writerow([j, m])


def pivot_algorithm(inp, hatv, seed, n_steps=None, penalties=None,
                    mass_evaluator=None, log_events=True):
    """Run the penalized pivot state machine over a hat-v block stream.

    ``penalties`` may inject an explicit per-step penalty list in place of
    the keyed generator (the toy-model walkthrough uses this); a backtrack
    always reuses the penalty of the step that placed the pivot it removes.
    """
    inst = inp.instance
    rho = inp.rho
    if not 0.0 < rho < 0.2:
        raise ValueError("the pivot algorithm needs rho < 1/5")
    mass = mass_evaluator or MassEvaluator(inp)

    def tau_at(idx):
        if penalties is not None:
            return penalties[idx]
        return keyed_uniform(seed, "piv", idx)

    max_steps = (len(hatv) - 3) // 2 + 1
    n_steps = max_steps if n_steps is None else min(n_steps, max_steps)

    segments = [Segment(elem=hatv[0].elem, first=hatv[0].elem, start=0,
                        count=1, letters=hatv[0].letters)]
    pivots = []
    m_trace = [0]
    events = []

    for j in range(n_steps):
        s_blk = hatv[2 * j + 1]
        u_blk = hatv[2 * j + 2]
        m_j = len(pivots)
        left = segments[-1]
        ali = inst.ali(left.elem, s_blk.elem) and \
            inst.ali(s_blk.elem, u_blk.elem)
        p_fwd = mass.query([left.elem], [u_blk.elem])
        thr = (1.0 - 2.0 * rho) / p_fwd.value
        tau = tau_at(j)
        if ali and tau < thr:
            pivots.append((s_blk.elem, j, 2 * j + 1, s_blk.letters))
            segments.append(Segment(elem=u_blk.elem, first=u_blk.elem,
                                    start=2 * j + 2, count=1,
                                    letters=u_blk.letters))
            m_trace.append(len(pivots))
            if log_events:
                events.append(PivotEvent(j, "forward", m_j, m_j + 1, 0,
                                         tau, thr, p_fwd.value, ali))
            continue

        # scan k = m_j-1 .. 0, largest first; R_k = seg_{k+1} piv_{k+1}
        # ... seg_m s u is grown incrementally while descending
        su = inst.prod(s_blk.elem, u_blk.elem)
        su_letters = s_blk.letters + u_blk.letters
        suffix = inst.prod(segments[-1].elem, su)
        suffix_letters = segments[-1].letters + su_letters
        target = None
        for k in range(m_j - 1, -1, -1):
            piv_elem, piv_step, _, piv_letters = pivots[k]
            ind = inst.ali(piv_elem, suffix)
            mid = segments[k + 1].first
            b_mass = mass.query([segments[k].elem], [mid, suffix])
            thr_b = (1.0 - 3.0 * rho) / b_mass.value
            tau_b = tau_at(piv_step)
            if ind and tau_b < thr_b:
                target = (k, suffix, suffix_letters, tau_b, thr_b,
                          b_mass.value)
                break
            suffix = inst.prod(inst.prod(segments[k].elem, piv_elem), suffix)
            suffix_letters += segments[k].letters + piv_letters

        if target is not None:
            # the new top block spans from seg_k on: seg_k piv_k R_k
            k, suffix_elem, suffix_letters_k, tau_b, thr_b, bm = target
            merged_elem = inst.prod(
                inst.prod(segments[k].elem, pivots[k][0]), suffix_elem)
            merged = Segment(elem=merged_elem,
                             first=segments[k].first,
                             start=segments[k].start,
                             count=2 * j + 3 - segments[k].start,
                             letters=segments[k].letters + pivots[k][3]
                             + suffix_letters_k)
            segments = segments[:k] + [merged]
            pivots = pivots[:k]
            m_trace.append(k)
            if log_events:
                events.append(PivotEvent(j, "backtrack", m_j, k, m_j - k,
                                         tau_b, thr_b, bm, True))
        else:
            merged = Segment(elem=suffix, first=segments[0].first, start=0,
                             count=2 * j + 3, letters=suffix_letters)
            segments = [merged]
            pivots = []
            m_trace.append(0)
            if log_events:
                events.append(PivotEvent(j, "reset", m_j, 0, m_j,
                                         tau, thr, p_fwd.value, ali))

    return PivotRun(
        instance_name=inst.name, seed=seed, rho=rho,
        eps=getattr(inp, "eps", None), n_steps=n_steps, m_trace=m_trace,
        segments=segments, pivots=pivots, hatv=hatv[:2 * n_steps + 3],
        events=events,
    )


def run_pipeline(inp, seed, n_pairs, n_steps=None, max_quads=None,
                 keep_letters=False):
    """w-stream -> v extraction -> hat-v -> pivot run."""
    blocks = build_w_stream(inp, seed, n_pairs, keep_words=keep_letters)
    vext = extract_v(inp, blocks, seed, max_quads=max_quads)
    hatv = regroup_hat_v(inp, vext)
    run = pivot_algorithm(inp, hatv, seed, n_steps=n_steps)
    run.meta["vext"] = vext
    run.meta["input"] = inp
    run.meta["model_id"] = (f"{inp.instance.name} rho={inp.rho:g} "
                            f"alpha={inp.alpha:g} m={inp.m}")
    if keep_letters:
        letters = []
        for hv in run.hatv:
            for w in hv.words or []:
                letters.extend(w)
        run.meta["letters"] = letters
    return run


# ---------------------------------------------------------------------------
# invariants derived from the trace
# ---------------------------------------------------------------------------


def renewal_identity_holds(run):
    """p-bar_{2k+1} recomputed from the m-trace must match the final block
    structure exactly at every k."""
    m = np.asarray(run.m_trace)
    j_final = len(m) - 1
    for k in range(len(run.segments)):
        hits = np.nonzero(m <= k)[0]
        if len(hits) == 0:
            return False
        l_k = int(hits.max())
        expected = 2 * l_k + 1 + 2 * max(0, k - int(m[j_final]))
        if expected != run.pbar(2 * k + 1):
            return False
    return True


def backtrack_offsets(run, k):
    """Offsets c_i (odd, in hat-v letters) of the recursive alignment
    structure behind pivotal block k+1, recomputed from the m-trace."""
    m = run.m_trace
    hits = [j for j, mj in enumerate(m) if mj <= k]
    if not hits:
        return []
    l_k = max(hits)
    bs = [j for j in range(l_k + 1, len(m)) if m[j] == k + 1]
    pbar = run.pbar(2 * k + 2)
    return [2 * b + 1 - pbar for b in bs]


def check_recursive_alignment(run, max_blocks=200):
    """Re-verify the alternating alignment certificates behind each settled
    even block directly from the stored hat-v letters."""
    inp = run.meta.get("input")
    inst = inp.instance
    hatv = run.hatv

    def hv_prod(i, j):
        out = None
        for t in range(i, j):
            out = inst.prod(out, hatv[t].elem)
        return out

    for k in range(1, min(len(run.segments), max_blocks)):
        seg = run.segments[k]
        pbar = run.pbar(2 * k)
        if pbar != seg.start:
            return False
        cs = backtrack_offsets(run, k - 1)
        if not cs or cs[-1] != seg.count:
            return False
        if any(c % 2 == 0 for c in cs):
            return False
        piv = run.pivots[k - 1][0] if k - 1 < len(run.pivots) else None
        if piv is not None and not inst.ali(piv, hatv[pbar].elem):
            return False
        for i in range(len(cs) - 1):
            c, c_next = cs[i], cs[i + 1]
            left = hv_prod(pbar, pbar + c)
            mid = hatv[pbar + c].elem
            right = hv_prod(pbar + c + 1, pbar + c_next)
            if not inst.ali(left, mid):
                return False
            if right is not None and not inst.ali(mid, right):
                return False
    return True


def reassemble_letters(run):
    """Letter stream rebuilt from the final extraction; equals the stored
    stream exactly (law/bookkeeping preservation)."""
    out = []
    for hv in run.hatv:
        for w in hv.words or []:
            out.extend(w)
    return out


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def _acf(x, lags):
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    denom = float(np.dot(x, x))
    out = {}
    for lag in lags:
        out[lag] = float(np.dot(x[:-lag], x[lag:]) / denom) if denom > 0 \
            else 0.0
    return out


def diagnostics(run, seed=0, depth_cap=6, n_heredity=48):
    """Statistical and structural report for a completed run: forward rate
    vs 1-2rho, backtrack-depth law, independence proxies for the even
    weights, renewal identity, recursive alignment, and for matrix models
    the sigma caps, heredity and conditional-Schottky spot checks."""
    from scipy import stats

    rho = run.rho
    m = np.asarray(run.m_trace)
    steps = np.diff(m)
    forward = steps == 1
    n = len(steps)
    rate = float(forward.mean())
    se = float(np.sqrt(max(rate * (1 - rate), 1e-12) / n))
    report = {
        "n_steps": n,
        "forward_rate": rate,
        "forward_se": se,
        "forward_expected": 1.0 - 2.0 * rho,
        "forward_ok": abs(rate - (1 - 2 * rho)) <= max(4 * se, 5e-3),
    }

    # backtrack-depth histogram vs the truncated geometric law, restricted
    # to steps deep enough that the truncation at m_j is invisible
    r = rho / (1.0 - 2.0 * rho)
    mask = (~forward) & (m[:-1] > depth_cap)
    depths = (m[:-1] - m[1:])[mask]
    depths = depths[(depths >= 1) & (depths <= depth_cap)]
    if len(depths) >= 50:
        counts = np.bincount(depths, minlength=depth_cap + 1)[1:depth_cap + 1]
        probs = np.array([(1 - r) * r ** i for i in range(depth_cap - 1)]
                         + [r ** (depth_cap - 1)])
        expected = probs * counts.sum()
        keep = expected >= 5
        chi2 = float(((counts[keep] - expected[keep]) ** 2
                      / expected[keep]).sum())
        dof = int(keep.sum()) - 1
        pval = float(stats.chi2.sf(chi2, dof)) if dof > 0 else 1.0
        report.update({"backtrack_ratio": r, "backtrack_n": int(len(depths)),
                       "backtrack_chi2": chi2, "backtrack_p": pval,
                       "backtrack_ok": pval > 0.01})
    else:
        report.update({"backtrack_n": int(len(depths)),
                       "backtrack_p": None, "backtrack_ok": None})

    p2 = np.asarray(run.settled_even_weights(), dtype=float)
    if len(p2) >= 200:
        acf = _acf(p2, range(1, 6))
        half = len(p2) // 2
        ks = stats.ks_2samp(p2[:half], p2[half:])
        report.update({
            "p2_n": int(len(p2)),
            "p2_acf": acf,
            "p2_acf_ok": all(abs(v) <= 0.02 for v in acf.values()),
            "p2_halves_ks_p": float(ks.pvalue),
            "p2_halves_ok": bool(ks.pvalue > 0.01),
            "p2_mean": float(p2.mean()),
        })
    else:
        report.update({"p2_n": int(len(p2)), "p2_acf_ok": None,
                       "p2_halves_ok": None})

    report["renewal_identity_ok"] = renewal_identity_holds(run)
    if run.meta.get("input") is not None:
        report["recursive_alignment_ok"] = check_recursive_alignment(run)

    if run.eps is not None:
        report.update(_matrix_checks(run, seed, n_heredity))
    return report


def _matrix_checks(run, seed, n_heredity):
    from . import linalg
    from .semigroup import matrix_instance

    eps = run.eps
    cap = eps ** 6 / 48.0
    sigmas = [linalg.sigma(p[0]) for p in run.pivots]
    sigma_ok = all(s <= cap + 1e-12 for s in sigmas)

    rng = substream(seed, "heredity")
    inst = matrix_instance(eps)
    blocks = []
    for i, seg in enumerate(run.segments[:-1]):
        blocks.append(seg.elem)
        if i < len(run.pivots):
            blocks.append(run.pivots[i][0])
    ok = True
    worst = 1.0
    trials = 0
    for _ in range(n_heredity):
        if len(blocks) < 3:
            break
        i = int(rng.integers(0, len(blocks) - 2))
        k = int(rng.integers(i + 2, min(len(blocks), i + 12) + 1))
        j = int(rng.integers(i + 1, k))
        f = linalg.top_row_direction(blocks[i])
        h = linalg.top_image_direction(blocks[k - 1])
        left = _prod_range(inst, blocks, i, j)
        right = _prod_range(inst, blocks, j, k)
        lf = f @ left
        rh = right @ h
        ratio = float(np.abs(np.dot(lf, rh))
                      / (np.linalg.norm(lf) * np.linalg.norm(rh)))
        worst = min(worst, ratio)
        trials += 1
        if ratio < eps / 2 - 1e-9:
            ok = False

    # conditional-Schottky spot check: mass(C_k and g-aligned)/mass(C_k)
    inp = run.meta.get("input")
    spot_ok = None
    if inp is not None and len(run.pivots) >= 2:
        mass = MassEvaluator(inp)
        spot_ok = True
        for k in (0, len(run.pivots) // 2):
            mid = run.segments[k + 1].first
            den = mass.query([run.segments[k].elem], [mid]).value
            g = linalg.top_row_direction(run.segments[k].elem)
            num = mass.query([run.segments[k].elem, g], [mid]).value
            if den > 0 and num / den < 0.75 - 0.05:
                spot_ok = False
    return {"sigma_cap_ok": sigma_ok, "sigma_cap": cap,
            "heredity_trials": trials, "heredity_worst": worst,
            "heredity_ok": ok, "conditional_schottky_ok": spot_ok}


def _prod_range(inst, blocks, i, j):
    out = None
    for b in blocks[i:j]:
        out = inst.prod(out, b)
    return out


def fit_exponential_tail(samples, n_boot=400, seed=0, min_count=20):
    """OLS fit of log P(X >= t) against t plus a bootstrap CI for the rate;
    a CI excluding 0 evidences the exponential moment."""
    samples = np.asarray(samples, dtype=float)
    rng = substream(seed, "tailboot")

    def one_rate(xs):
        hi = int(np.quantile(xs, 0.98))
        ts = np.arange(1, max(hi, 4) + 1)
        surv = np.array([(xs >= t).mean() for t in ts])
        keep = (surv * len(xs) >= min_count) & (surv < 1.0)
        if keep.sum() < 3:
            return np.nan
        slope = np.polyfit(ts[keep], np.log(surv[keep]), 1)[0]
        return -slope

    rate = one_rate(samples)
    boots = []
    for _ in range(n_boot):
        idx = rng.integers(0, len(samples), len(samples))
        boots.append(one_rate(samples[idx]))
    boots = np.asarray([b for b in boots if np.isfinite(b)])
    return float(rate), float(np.quantile(boots, 0.025)), \
        float(np.quantile(boots, 0.975))


# ---------------------------------------------------------------------------
# bilateral pivoting
# ---------------------------------------------------------------------------


def _left_mul(f, elem):
    """f * elem for f a covector/matrix (arrays) or a word (tuple)."""
    if isinstance(elem, tuple):
        return fg_concat(f, elem)
    out = np.asarray(f, dtype=float) @ np.asarray(elem, dtype=float)
    return out / np.linalg.norm(out)


def _right_mul(elem, h):
    if isinstance(elem, tuple):
        return fg_concat(elem, h)
    out = np.asarray(elem, dtype=float) @ np.asarray(h, dtype=float)
    return out / np.linalg.norm(out)


def _aligned_generic(inst, a, b):
    if isinstance(a, tuple) or isinstance(b, tuple):
        return inst.ali(a, b)
    from . import linalg
    return linalg.alignment_ratio(a, b) >= _inst_eps(inst)


def _inst_eps(inst):
    return float(inst.name.split("=", 1)[1]) if "=" in inst.name else None


def left_right_pivots(run, f, h, n, seed, mass_evaluator=None,
                      parts=("l", "r", "c")):
    """Left, right and cyclic pivot indices of the bilateral technique.

    l_f, r_n, c_n are penalized first-success indices with laws G(1/4),
    G(1/4) and G(1/2); sentinels fire on the escape clauses (r_n >= q_n,
    2 c_n + 1 >= q_n).  Alignment certificates are re-verified directly.
    """
    inp = run.meta.get("input")
    if inp is None:
        raise ValueError("run carries no model input")
    inst = inp.instance
    for operand in (f, h):
        if not isinstance(operand, tuple):
            arr = np.asarray(operand, dtype=float)
            if not np.any(arr):
                from .linalg import DomainError
                raise DomainError("zero f or h operand")
        elif len(operand) == 0:
            from .linalg import DomainError
            raise DomainError("empty word operand")
    mass = mass_evaluator or MassEvaluator(inp)
    segs = run.segments
    pivs = run.pivots
    m_run = len(pivs)

    # q_n: number of full even/odd block pairs within the first n letters
    q_n = 0
    while q_n + 1 <= m_run and run.pbar_letters(2 * (q_n + 1)) <= n:
        q_n += 1

    # ----- left pivot ------------------------------------------------------
    l_f = -1
    cert_l = None
    prefix = None
    for k in (range(m_run) if "l" in parts else ()):
        if k == 0:
            prefix = _left_mul(f, segs[0].elem)
        else:
            prefix = _left_mul(_left_mul(prefix, pivs[k - 1][0]),
                               segs[k].elem)
        ali = _aligned_generic(inst, prefix, pivs[k][0])
        mid = segs[k + 1].first
        den = mass.query([segs[k].elem], [mid]).value
        num = mass.query([segs[k].elem, prefix], [mid]).value
        p_cond = num / den if den > 0 else 1.0
        thr = min(1.0, 0.75 / p_cond) if p_cond > 0 else 1.0
        if keyed_uniform(seed, "lf", k) < thr and ali:
            l_f = k
            cert_l = True
            break

    # ----- right pivot at time n -------------------------------------------
    r_n = -1
    cert_r = None
    letters = run.meta.get("letters")
    for k in (range(q_n + 64) if "r" in parts else ()):
        tau = keyed_uniform(seed, "rn", n, k)
        if k >= q_n:
            if tau < 0.75:
                r_n = k
                break
            continue
        pividx = q_n - k - 1
        tail = _letters_prod(inst, letters, run.pbar_letters(2 * q_n - 2 * k),
                             n)
        tailh = _right_mul(tail, h) if tail is not None else h
        ali = _aligned_generic(inst, pivs[pividx][0], tailh)
        mid = segs[pividx + 1].first
        den = mass.query([segs[pividx].elem], [mid]).value
        num = mass.query([segs[pividx].elem], [mid, tailh]).value
        p_cond = num / den if den > 0 else 1.0
        thr = min(1.0, 0.75 / p_cond) if p_cond > 0 else 1.0
        if tau < thr and ali:
            r_n = k
            cert_r = True
            break

    # ----- cyclic pivot at time n ------------------------------------------
    c_n = -1
    cert_c = None
    for k in (range(q_n + 64) if "c" in parts else ()):
        tau = keyed_uniform(seed, "cn", n, k)
        if 2 * k + 1 >= q_n:
            if tau < 0.5:
                c_n = k
                break
            continue
        back = q_n - k - 1
        pre_k = _blocks_prod(inst, segs, pivs, 2 * k + 1)   # blocks 0..2k
        tail = _letters_prod(inst, letters,
                             run.pbar_letters(2 * q_n - 2 * k), n)
        t1 = inst.prod(tail, pre_k)
        cond_a = _aligned_generic(inst, pivs[back][0], t1)
        tail2 = _letters_prod(inst, letters,
                              run.pbar_letters(2 * q_n - 2 * k - 1), n)
        t2 = inst.prod(tail2, pre_k)
        cond_b = _aligned_generic(inst, t2, pivs[k][0])
        cond = cond_a and cond_b

        mid_b = segs[back + 1].first
        mid_k = segs[k + 1].first
        tail_only = tail

        def pair_cond(s_k, s_back, _tail=tail_only, _pre=pre_k,
                      _mid=None):
            t1p = inst.prod(_tail, _pre)
            ca = inst.ali(s_back, t1p)
            t2p = inst.prod(inst.prod(s_back, _tail), _pre)
            cb = inst.ali(t2p, s_k)
            return ca and cb

        pm = mass.query_pair(
            pair_cond,
            ([segs[k].elem], [mid_k]),
            ([segs[back].elem], [mid_b]),
        )
        thr = min(1.0, 0.5 / pm.value) if pm.value > 0 else 1.0
        if tau < thr and cond:
            c_n = k
            cert_c = True
            break

    return {"l_f": l_f, "r_n": r_n, "c_n": c_n, "q_n": q_n,
            "l_cert": cert_l, "r_cert": cert_r, "c_cert": cert_c,
            "l_escaped": l_f < 0,
            "r_escaped": r_n < 0 or r_n >= q_n,
            "c_escaped": c_n < 0 or 2 * c_n + 1 >= q_n}


def _letters_prod(inst, letters, i, j):
    if letters is None:
        raise ValueError("run was built without keep_letters=True")
    out = None
    for t in range(i, j):
        out = inst.prod(out, letters[t])
    return out


def _blocks_prod(inst, segs, pivs, n_blocks):
    out = None
    for i in range(n_blocks):
        if i % 2 == 0:
            out = inst.prod(out, segs[i // 2].elem)
        else:
            out = inst.prod(out, pivs[i // 2][0])
    return out
