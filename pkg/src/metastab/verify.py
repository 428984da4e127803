"""Empirical checks of metastability, asymptotic regularity and the lemma inequalities.

Conventions: a conclusion of the form ``lhs <= rhs`` passes when
``lhs <= rhs + tol`` and a strict one when ``lhs < rhs + tol``.  The
recorded margin is always ``rhs + tol - lhs``.  Premises are tested with
the much smaller slack :data:`PREMISE_TOL` so that loose premises never
manufacture failures.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from . import rates
from .counterfn import Bound, CounterFn, Identity, LambdaModuli, partial_sum
from .iterations import IterationTrace, bauschke_sequence, halpern_sequence, scan_cyclic
from .rates import ProblemParams
from .space import (
    ConvexBody,
    L1Shift,
    MetricProjection,
    Operator,
    OperatorFamily,
    SparseL1,
    convex_combine,
    residual,
    sample_points,
)

PREMISE_TOL = 1e-12
DEFAULT_TOL = 1e-9

PASS = "pass"
FAIL = "fail"
SAT_PASS = "bound-saturated-but-window-pass"
BUDGET = "budget-exceeded"
VACUOUS = "vacuous"


@dataclass
class MetastabilityReport:
    k: int
    f: str
    bound: Bound
    witness_n: Optional[int]
    window_end: Optional[int]
    max_gap: Optional[float]
    tolerance: float
    verdict: str
    searched_up_to: int = 0

    @property
    def passed(self) -> bool:
        return self.verdict in (PASS, SAT_PASS)

    @property
    def margin(self) -> Optional[float]:
        if self.max_gap is None:
            return None
        return 1.0 / (self.k + 1) + self.tolerance - self.max_gap

    def to_json(self) -> dict:
        d = asdict(self)
        d["bound"] = self.bound.to_json()
        d["margin"] = self.margin
        return d


@dataclass
class LemmaReport:
    lemma: str
    instance: str
    checked: int = 0
    vacuous: int = 0
    worst_margin: Optional[float] = None
    thresholds: dict = field(default_factory=dict)
    verdict: str = VACUOUS
    tolerance: float = DEFAULT_TOL
    diagnostics: dict = field(default_factory=dict)
    items: list = field(default_factory=list)

    @property
    def samples(self) -> int:
        return self.checked + self.vacuous

    @property
    def passed(self) -> bool:
        return self.verdict != FAIL

    def record(self, margin, strict: bool = False, weight: int = 1) -> bool:
        """Register ``weight`` checked cases whose smallest margin is ``margin``."""
        ok = margin > 0 if strict else margin >= 0
        self.checked += weight
        if self.worst_margin is None or margin < self.worst_margin:
            self.worst_margin = margin
        if not ok:
            self.verdict = FAIL
        elif self.verdict == VACUOUS:
            self.verdict = PASS
        return ok

    def skip(self, weight: int = 1) -> None:
        self.vacuous += weight

    def absorb(self, item: "LemmaReport") -> None:
        self.items.append(item)
        self.checked += item.checked
        self.vacuous += item.vacuous
        if item.worst_margin is not None and (self.worst_margin is None
                                              or item.worst_margin < self.worst_margin):
            self.worst_margin = item.worst_margin
        if item.verdict == FAIL:
            self.verdict = FAIL
        elif item.verdict == PASS and self.verdict == VACUOUS:
            self.verdict = PASS

    def to_json(self) -> dict:
        def clean(v):
            if isinstance(v, Bound):
                return v.to_json()
            if isinstance(v, Fraction):
                return str(v)
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, dict):
                return {str(a): clean(b) for a, b in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            return v

        return {
            "lemma": self.lemma,
            "instance": self.instance,
            "samples": self.samples,
            "checked": self.checked,
            "vacuous": self.vacuous,
            "worst_margin": clean(self.worst_margin),
            "thresholds": clean(self.thresholds),
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "diagnostics": clean(self.diagnostics),
            "items": [it.to_json() for it in self.items],
        }


def _fn_label(f: CounterFn) -> str:
    from .counterfn import counterfn_label

    return counterfn_label(f)


# ---------------------------------------------------------------------------
# metastability windows


def _window_gap(P: np.ndarray, a: int, e: int, limit: float) -> float:
    """Diameter of ``P[a..e]``; may stop early once it is known to reach ``limit``."""
    if e <= a:
        return 0.0
    W = P[a:e + 1]
    # cheap lower bound first: distances from the window's first point
    first = float(np.max(np.linalg.norm(W - W[0], axis=1)))
    if first >= limit:
        return first
    best = first
    for i in range(1, len(W) - 1):
        best = max(best, float(np.max(np.linalg.norm(W[i + 1:] - W[i], axis=1))))
        if best >= limit:
            break
    return best


def check_metastability(trace: IterationTrace, k: int, f: CounterFn, bound: Bound,
                        tol: float = DEFAULT_TOL) -> MetastabilityReport:
    """Least ``N <= min(bound, last index)`` whose window ``[N, f(N)]`` has diameter below ``1/(k+1)``."""
    if trace.streamed:
        raise ValueError("metastability needs stored points")
    P = trace.points
    last = trace.last
    limit = 1.0 / (k + 1) + tol
    top = last if bound.saturated else min(bound.value, last)
    label = _fn_label(f)
    for N in range(top + 1):
        e = f.value(N)
        if e > last:
            return MetastabilityReport(k, label, bound, None, e, None, tol, BUDGET, N)
        gap = _window_gap(P, N, e, limit)
        if gap < limit:
            verdict = SAT_PASS if bound.saturated else PASS
            full = _window_gap(P, N, e, math.inf)
            return MetastabilityReport(k, label, bound, N, e, full, tol, verdict, N)
    verdict = FAIL if not bound.saturated and bound.value <= last else BUDGET
    return MetastabilityReport(k, label, bound, None, None, None, tol, verdict, top)


def minimal_window_oracle(trace: IterationTrace, k: int, f: CounterFn,
                          tol: float = 0.0) -> Optional[int]:
    """Brute force: scan ``N = 0, 1, ...`` checking every pair of the window."""
    pts = [tuple(map(float, p)) for p in trace.points]
    limit = 1.0 / (k + 1) + tol
    for N in range(len(pts)):
        e = f.value(N)
        if e >= len(pts):
            return None
        if all(math.dist(pts[i], pts[j]) < limit
               for i in range(N, e + 1) for j in range(i + 1, e + 1)):
            return N
    return None


# ---------------------------------------------------------------------------
# asymptotic regularity


def check_asymptotic_regularity(trace: IterationTrace, params: ProblemParams, k,
                                tol: float = DEFAULT_TOL,
                                fns: Sequence[CounterFn] = ()):
    """Residual decay checks per scheme.

    ``k`` may be a single natural or a sequence; for a sequence a list of
    reports is returned (cyclic runs then share a single pass over the
    recurrence).
    """
    ks = [k] if isinstance(k, int) else list(k)
    if trace.scheme == "browder":
        out = [_regularity_browder(trace, params, kk, tol) for kk in ks]
    elif trace.scheme == "halpern":
        out = [_regularity_halpern(trace, params, kk, tol, fns) for kk in ks]
    elif trace.scheme == "bauschke":
        out = _regularity_cyclic(trace, params, ks, tol)
    else:
        raise ValueError(f"no regularity check for scheme {trace.scheme!r}")
    return out[0] if isinstance(k, int) else out


def _regularity_browder(trace, params, k, tol):
    rep = LemmaReport("quasi-fixed", f"browder N={trace.last}", tolerance=tol,
                      thresholds={"rhs": "b/(n+1) + 2 cert(n)"})
    n = np.arange(trace.length)
    rhs = params.b / (n + 1) + 2 * trace.certs
    margins = rhs + tol - trace.residuals
    worst = int(np.argmin(margins))
    rep.record(float(margins[worst]), weight=trace.length)
    rep.diagnostics["worst_index"] = worst
    return rep


def _regularity_halpern(trace, params, k, tol, fns):
    alpha = rates.alpha_wittmann(params, k)
    rep = LemmaReport("alpha-window", f"halpern N={trace.last} k={k}", tolerance=tol,
                      thresholds={"alpha_W": alpha})
    res = trace.scalar_residuals()
    limit = 1.0 / (k + 1)
    top = trace.last if alpha.saturated else min(alpha.value, trace.last)
    for f in (fns or [Identity()]):
        item = LemmaReport("alpha-window", f"k={k} f={_fn_label(f)}", tolerance=tol,
                           thresholds={"alpha_W": alpha})
        for N in range(top + 1):
            e = max(f.value(N), N)
            if e > trace.last:
                item.skip()
                item.diagnostics["budget_exceeded_at"] = N
                break
            worst = float(res[N:e + 1].max())
            if worst < limit + tol:
                item.record(limit + tol - worst, strict=True)
                item.diagnostics["witness"] = N
                break
        else:
            item.record(-math.inf, strict=True)  # no witness below alpha_W
        rep.absorb(item)
    # the stronger "for all n >= alpha_W" form, recorded only as a diagnostic
    if not alpha.saturated and alpha.value <= trace.last:
        tail = float(res[alpha.value:].max())
        rep.diagnostics["tail_max_residual"] = tail
        rep.diagnostics["tail_margin"] = limit + tol - tail
    else:
        rep.diagnostics["tail_max_residual"] = None
    return rep


CYCLIC_ITEMS = ("i", "ii", "iii", "iv")


def cyclic_thresholds(params: ProblemParams, k: int) -> dict:
    mu = params.moduli.mu
    return {
        "i": mu.apply(params.b * params.nat(k + 1)),
        "ii": rates.chi(params, k),
        "iii": rates.alpha_tilde(params, k),
        "iv": rates.alpha_hat(params, k),
    }


def _regularity_cyclic(trace, params, ks, tol):
    ths = {k: cyclic_thresholds(params, k) for k in ks}
    requested = [[] for _ in CYCLIC_ITEMS]
    for k in ks:
        for j, name in enumerate(CYCLIC_ITEMS):
            t = ths[k][name]
            if not t.saturated:
                requested[j].append(t.value)
    scan = scan_cyclic(trace, requested)
    reports = []
    for k in ks:
        rep = LemmaReport("cyclic-regularity", f"bauschke N={trace.last} ell={params.ell} k={k}",
                          tolerance=tol, thresholds=dict(ths[k]))
        rhs = 1.0 / (k + 1)
        for j, name in enumerate(CYCLIC_ITEMS):
            t = ths[k][name]
            end = scan.last_index[j]
            strict = name == "iv"
            item = LemmaReport(f"cyclic-regularity-{name}", f"k={k}", tolerance=tol,
                               thresholds={"start": t, "end": end})
            if not t.saturated and t.value <= end:
                item.record(rhs + tol - scan.suffix_max[j][t.value], strict=strict,
                            weight=end - t.value + 1)
            else:
                item.skip()
                spot = rhs + tol - scan.last[j]
                item.diagnostics.update(spot_index=end, spot_margin=spot,
                                        spot_ok=bool(spot > 0 if strict else spot >= 0))
            rep.absorb(item)
        reports.append(rep)
    return reports


def check_step_identity(trace: IterationTrace, tol: float = 1e-12) -> LemmaReport:
    """``||u_{n+1} - lam_{n+1} u0 - (1 - lam_{n+1}) U_{n+1}(u_n)|| <= tol`` for every n."""
    rep = LemmaReport("step-identity", f"{trace.scheme} N={trace.last}", tolerance=tol)
    P, u0, fam, lam = trace.points, trace.anchor, trace.family, trace.lam
    worst = math.inf
    for n in range(trace.last):
        t = lam(n + 1)
        pred = t * u0 + (1 - t) * fam.at(n + 1)(P[n])
        worst = min(worst, tol - float(np.linalg.norm(P[n + 1] - pred)))
    rep.record(worst, weight=max(trace.last, 0))
    return rep


def check_telescoping(trace: IterationTrace, params: ProblemParams, pairs: Iterable[tuple],
                      tol: float = DEFAULT_TOL) -> LemmaReport:
    """``||u_{n+m+l} - u_{n+m}|| <= b sum_{j=n}^{n+m} |lam_{j+l} - lam_j| + ||u_{n+l-1} - u_{n-1}|| prod_{j=n}^{n+m} (1 - lam_{j+l})``."""
    ell = trace.family.ell
    P, lam = trace.points, trace.lam
    rep = LemmaReport("telescoping", f"{trace.scheme} N={trace.last} ell={ell}", tolerance=tol)
    for n, m in pairs:
        if n < 1 or n + m + ell > trace.last:
            rep.skip()
            continue
        js = range(n, n + m + 1)
        drift = params.b * sum(abs(lam(j + ell) - lam(j)) for j in js)
        decay = math.prod(1 - lam(j + ell) for j in js)
        rhs = drift + float(np.linalg.norm(P[n + ell - 1] - P[n - 1])) * decay
        lhs = float(np.linalg.norm(P[n + m + ell] - P[n + m]))
        rep.record(rhs + tol - lhs)
    return rep


# ---------------------------------------------------------------------------
# lemma inequalities on sampled configurations


def near_fixed_points(op: Operator, body: ConvexBody, count: int, seed: int,
                      steps: Sequence[int] = (10, 100, 1000, 4000)) -> list[np.ndarray]:
    """Points with small residual, from anchored runs started at sampled points.

    Metric projections contribute exact fixed points (the body samples themselves).
    """
    starts = sample_points(body, count, seed)
    if isinstance(op, MetricProjection):
        return [op(x) for x in starts]
    out = []
    for x0 in starts:
        tr = halpern_sequence(op, None, x0, None, max(steps))
        out.extend(tr.points[s].copy() for s in steps)
    return out


def _inner(a, b) -> float:
    return float(np.dot(a, b))


def check_convex_residual(op: Operator, body: ConvexBody, k: int, points: Sequence[np.ndarray],
                   tol: float = DEFAULT_TOL, gammas: int = 11, max_pairs: int = 5000) -> LemmaReport:
    """Both residuals at most ``1/(12b(k+1)^2)`` implies every convex combination has residual below ``1/(k+1)``."""
    rep = LemmaReport("convex-residual", f"k={k}", tolerance=tol,
                      thresholds={"premise": 1 / (12 * body.b * (k + 1) ** 2)})
    bound = 1 / (12 * body.b * (k + 1) ** 2) + PREMISE_TOL
    res = [float(residual(op, x)) for x in points]
    grid = np.linspace(0.0, 1.0, gammas)
    pairs = itertools.islice(itertools.combinations_with_replacement(range(len(points)), 2), max_pairs)
    for i, j in pairs:
        if res[i] > bound or res[j] > bound:
            rep.skip()
            continue
        worst = max(float(residual(op, convex_combine(g, points[i], points[j]))) for g in grid)
        rep.record(1 / (k + 1) + tol - worst, strict=True)
    return rep


def check_segment_minimality(body: ConvexBody, anchor: np.ndarray, k: int, points: Sequence[np.ndarray],
                   tol: float = DEFAULT_TOL, max_pairs: int = 5000) -> LemmaReport:
    """Near-minimality of ``||x - v0||`` along the segment to ``y`` implies ``<x - v0, x - y> < 1/(k+1)``."""
    slack = 1 / (body.b**2 * (k + 1) ** 2 + 1)
    rep = LemmaReport("segment-minimality", f"k={k}", tolerance=tol, thresholds={"premise_slack": slack})
    pairs = itertools.islice(itertools.product(range(len(points)), repeat=2), max_pairs)
    for i, j in pairs:
        x, y = points[i], points[j]
        # ||w_g - v0||^2 - ||x - v0||^2 = 2 g a + g^2 c, minimized over g in [0, 1]
        a = _inner(x - anchor, y - x)
        c = _inner(y - x, y - x)
        g = min(max(-a / c, 0.0), 1.0) if c > 0 else 0.0
        if 2 * g * a + g * g * c < -slack - PREMISE_TOL:
            rep.skip()
            continue
        rep.record(1 / (k + 1) + tol - _inner(x - anchor, x - y), strict=True)
    return rep


def check_resolvent_closeness(op: Operator, anchor: np.ndarray, trace: IterationTrace, k: int,
                              points: Sequence[np.ndarray], indices: Sequence[int],
                              b: int, tol: float = DEFAULT_TOL) -> LemmaReport:
    """Small residual and small ``<x - v0, x - u_n>`` imply ``||u_n - x|| < 1/(k+1)``."""
    rep = LemmaReport("resolvent-closeness", f"k={k}", tolerance=tol)
    P = trace.points
    for x in points:
        rx = float(residual(op, x))
        for n in indices:
            if n > trace.last:
                rep.skip()
                continue
            u = P[n]
            # the computed u_n is only known up to its certificate; a premise that
            # holds for the computed point must not be read as holding exactly
            cert = float(trace.certs[n]) if trace.certs is not None else 0.0
            p1 = rx <= 1 / (2 * b * (n + 1) * (k + 1) ** 2 + 1) + PREMISE_TOL
            p2 = _inner(x - anchor, x - u) + cert * b <= 1 / (2 * (k + 1) ** 2) + PREMISE_TOL
            if not (p1 and p2):
                rep.skip()
                continue
            rep.record(1 / (k + 1) + tol - float(np.linalg.norm(u - x)) - cert, strict=True)
    return rep


def check_anchored_closeness(family: OperatorFamily, anchor: np.ndarray, trace: IterationTrace,
                             params: ProblemParams, k: int, points: Sequence[np.ndarray],
                             windows: Sequence[tuple], tol: float = DEFAULT_TOL) -> LemmaReport:
    """Residual and inner-product premises on ``[n, p]`` imply ``||u_m - x|| < 1/(k+1)`` for ``m`` in ``[sigma'(k, n), p]``."""
    rep = LemmaReport("anchored-closeness", f"k={k}", tolerance=tol)
    P = trace.points
    ops = family.operators
    b = params.b
    for x in points:
        rx = max(float(np.linalg.norm(op(x) - x)) for op in ops)
        Tx = [op(x) for op in ops]
        for n, p in windows:
            if p > trace.last or n > p:
                rep.skip()
                continue
            start = rates.sigma_prime(params, k, n)
            if start.saturated or start.value > p:
                rep.skip()  # the conclusion ranges over an empty interval
                continue
            if rx > 1 / (9 * b * (k + 1) ** 2 * (p + 1)) + PREMISE_TOL:
                rep.skip()
                continue
            seg = P[n:p + 1]
            ip = max(float(np.max((Tx[i] - op.apply_many(seg)) @ (x - anchor)))
                     for i, op in enumerate(ops))
            if ip > 1 / (12 * (k + 1) ** 2) + PREMISE_TOL:
                rep.skip()
                continue
            dist = float(np.max(np.linalg.norm(P[start.value:p + 1] - x, axis=1)))
            rep.record(1 / (k + 1) + tol - dist, strict=True)
    return rep


def check_projection_lemmas(target, body: ConvexBody, anchor, k: int, samples: int,
                            params: Optional[ProblemParams] = None,
                            trace: Optional[IterationTrace] = None,
                            seed: int = 0, tol: float = DEFAULT_TOL) -> LemmaReport:
    """Run every lemma that applies to ``target`` (an operator or a family).

    Configurations are the sampled body points plus near-fixed points from
    long anchored runs; each sub-report records its own vacuity counts.
    """
    anchor = np.asarray(anchor, dtype=float)
    family = target if isinstance(target, OperatorFamily) else OperatorFamily((target,))
    params = params or ProblemParams(b=body.b, ell=family.ell)
    base = sample_points(body, samples, seed)
    pts = list(base)
    if family.ell == 1:
        pts += near_fixed_points(family.operators[0], body, max(2, samples // 20), seed)
    if trace is not None and not trace.streamed:
        stride = max(1, trace.length // 50)
        pts += [trace.points[i].copy() for i in range(0, trace.length, stride)]
    rep = LemmaReport("lemmas", f"k={k} samples={len(pts)}", tolerance=tol)
    if family.ell == 1:
        rep.absorb(check_convex_residual(family.operators[0], body, k, pts, tol))
    rep.absorb(check_segment_minimality(body, anchor, k, pts, tol))
    if trace is not None and trace.scheme == "browder":
        idx = sorted({0, 1, 2, 5, 10, 50, 100, 500, trace.last})
        rep.absorb(check_resolvent_closeness(family.operators[0], anchor, trace, k, pts, idx,
                                             params.b, tol))
    if trace is not None and trace.scheme in ("halpern", "bauschke") and not trace.streamed:
        ends = sorted({trace.last, trace.last // 2, trace.last // 4})
        wins = [(n, p) for n in (0, 1, 10, 100) for p in ends]
        rep.absorb(check_anchored_closeness(family, anchor, trace, params, k, pts, wins, tol))
    return rep


# ---------------------------------------------------------------------------
# shift counterexample (exact)


def run_counterexample(max_n: int = 100, ks: Sequence[int] = tuple(range(0, 11))) -> LemmaReport:
    """Exact check that the fixed-point transfer principle fails for the l1 shift.

    With ``theta(x) = -||x||_1`` and ``lambda = 0``, the hypothesis holds at
    the only fixed point 0, the residuals of ``u_n`` tend to 0, and yet
    ``lambda < theta(u_n) + 1/(k+1)`` is false for every ``n``.
    """
    if max_n < 1:
        raise ValueError("max_n must be at least 1")
    U = L1Shift()
    rep = LemmaReport("shift-counterexample", f"l1 shift, n<={max_n}", tolerance=0.0)
    zero = SparseL1()
    lam = Fraction(0)

    def theta(x: SparseL1) -> Fraction:
        return -x.norm()

    fixed = LemmaReport("zero-is-fixed", "U(0) = 0", tolerance=0.0)
    fixed.record(0 if U(zero) == zero else -1)
    rep.absorb(fixed)

    identities = LemmaReport("exact-identities", "||u_n||=1, ||Uu_n-u_n||=2/(n+1), theta(u_n)=-1",
                             tolerance=0.0)
    for n in range(max_n + 1):
        u = SparseL1.constant_prefix(Fraction(1, n + 1), n + 1)
        ok = (u.norm() == 1 and residual(U, u) == Fraction(2, n + 1) and theta(u) == -1
              and U(u).norm() == u.norm())
        identities.record(0 if ok else -1)
    rep.absorb(identities)

    hyp = LemmaReport("hypothesis-at-fixed-point", "lambda < theta(0) + 1/(k+1)", tolerance=0.0)
    concl = LemmaReport("conclusion-fails", "not (lambda < theta(u_n) + 1/(k+1))", tolerance=0.0)
    us = [SparseL1.constant_prefix(Fraction(1, n + 1), n + 1) for n in range(max_n + 1)]
    failing = []
    for k in ks:
        hyp.record(theta(zero) + Fraction(1, k + 1) - lam, strict=True)
        # slack of the conclusion; it must be <= 0 (i.e. the conclusion false) for every n
        worst = max(theta(u) + Fraction(1, k + 1) - lam for u in us)
        concl.record(-worst, weight=len(us))
        if worst <= 0:
            failing.append(k)
    rep.absorb(hyp)
    rep.absorb(concl)
    rep.diagnostics["conclusion_fails_for_k"] = failing
    return rep


# ---------------------------------------------------------------------------
# step-size moduli and the fixed-set modulus


def validate_moduli(moduli: LambdaModuli, family: Optional[OperatorFamily] = None,
                    body: Optional[ConvexBody] = None, samples: int = 1000,
                    k_max: int = 10, k_max_linear: int = 1000, mu_window: int = 100,
                    tail_len: int = 10**4, tau_ks: Sequence[int] = tuple(range(0, 8)),
                    seed: int = 0, tol: float = DEFAULT_TOL) -> LemmaReport:
    """Exact-rational validity checks for mu, nu, xi and a sampled check of tau."""
    lam = moduli.lambda_seq
    ell = moduli.ell
    rep = LemmaReport("moduli", f"lambda={lam.kind} ell={ell}", tolerance=0.0)

    mu = LemmaReport("mu", f"k<={k_max_linear}", tolerance=0.0)
    for k in range(k_max_linear + 1):
        start = moduli.mu.value(k)
        # the largest lambda on the window bounds the rest
        worst = max(lam.exact(n) for n in range(start, start + mu_window + 1))
        mu.record(Fraction(1, k + 1) - worst, weight=mu_window + 1)
    rep.absorb(mu)

    nu = LemmaReport("nu", f"k<={k_max}", tolerance=0.0)
    total, upto = Fraction(0), -1
    for k in range(k_max + 1):
        top = moduli.nu.value(k)
        if top > 10**7:
            nu.skip()
            continue
        total += partial_sum(lam.exact, upto + 1, top)
        upto = max(upto, top)
        nu.record(total - k)
    rep.absorb(nu)

    xi = LemmaReport("xi", f"k<={k_max_linear}, tail {tail_len}", tolerance=0.0)
    starts = [moduli.xi.value(k) + 1 for k in range(k_max_linear + 1)]
    last = max(starts) + tail_len - 1
    # exact prefix sums of |lam_j - lam_{j+ell}|; tails are differences of prefixes
    prefix = [Fraction(0)]
    for j in range(last + 1):
        prefix.append(prefix[-1] + abs(lam.exact(j) - lam.exact(j + ell)))
    for k, s in enumerate(starts):
        # terms are nonnegative, so the longest tail is the binding one
        tail = prefix[s + tail_len] - prefix[s]
        xi.record(Fraction(1, k + 1) - tail, weight=tail_len)
    rep.absorb(xi)

    if family is not None and body is not None:
        rep.absorb(check_tau(family, body, samples, tau_ks, seed, tol))
    return rep


def check_tau(family: OperatorFamily, body: ConvexBody, samples: int,
              ks: Sequence[int] = tuple(range(0, 8)), seed: int = 0,
              tol: float = DEFAULT_TOL) -> LemmaReport:
    """``||x - U_{m+l}...U_{m+1} x|| <= 1/(tau(k)+1)`` implies ``||x - U_i x|| < 1/(k+1)`` for all i."""
    if family.tau is None:
        raise ValueError("family has no tau")
    ell = family.ell
    # adversarial points: samples pulled toward an approximate common fixed point
    hub = bauschke_sequence(family, None, body.center(), None, 4000).points[-1]
    rng = np.random.default_rng(seed)
    extra = []
    for k in ks:
        scale = 1.0 / (family.tau.value(k) + 1)
        for _ in range(8):
            d = rng.standard_normal(body.dim)
            extra.append(hub + d / np.linalg.norm(d) * scale * rng.random())
    pts = sample_points(body, samples, seed, extra=extra)
    rep = LemmaReport("tau", f"ell={ell} samples={len(pts)}", tolerance=tol)
    for x in pts:
        res = max(float(np.linalg.norm(x - op(x))) for op in family.operators)
        for m in range(ell):
            y = x
            for step in range(1, ell + 1):
                y = family.at(m + step)(y)
            cyc = float(np.linalg.norm(x - y))
            for k in ks:
                if cyc > 1.0 / (family.tau.value(k) + 1) + PREMISE_TOL:
                    rep.skip()
                    continue
                rep.record(1.0 / (k + 1) + tol - res, strict=True)
    return rep
