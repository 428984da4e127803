"""The three iteration schemes and their recorded traces.

* resolvent (Browder): ``u_n`` is the fixed point of
  ``x -> (1 - 1/(n+1)) U(x) + v0/(n+1)``;
* anchored (Halpern): ``u_{n+1} = lam_{n+1} u0 + (1 - lam_{n+1}) U(u_n)``;
* cyclic anchored (Bauschke): same with ``U`` replaced by ``T_{(n+1) mod ell}``.

Cyclic runs too long to store are handled by :func:`scan_cyclic`, which
streams the recurrence and only keeps running maxima of the quantities
the asymptotic-regularity checks need.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .counterfn import LambdaModuli, LambdaSeq
from .space import ConvexBody, Operator, OperatorFamily, as_point

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


def default_eps(n: int) -> float:
    return min(1e-10, 1.0 / (10 * (n + 1) ** 2))


def _lambda_seq(lam) -> LambdaSeq:
    if isinstance(lam, LambdaModuli):
        return lam.lambda_seq
    if isinstance(lam, LambdaSeq):
        return lam
    if lam is None:
        return LambdaSeq("harmonic")
    raise TypeError(f"expected step sizes, got {type(lam).__name__}")


@dataclass
class IterationTrace:
    scheme: str
    points: Optional[np.ndarray]  # (N+1, d); None for streamed cyclic runs
    residuals: Optional[np.ndarray]  # (N+1,) or (N+1, ell) for the cyclic scheme
    certs: Optional[np.ndarray] = None  # solver error bound per n (resolvent scheme)
    config: dict = field(default_factory=dict)
    # kept so that streamed runs can be replayed
    family: Optional[OperatorFamily] = None
    anchor: Optional[np.ndarray] = None
    lam: Optional[LambdaSeq] = None
    length: int = 0

    def __post_init__(self):
        if self.points is not None:
            self.length = len(self.points)
            if self.residuals is not None and len(self.residuals) != self.length:
                raise ValueError("points and residuals differ in length")
            if self.certs is not None and len(self.certs) != self.length:
                raise ValueError("points and certificates differ in length")

    @property
    def last(self) -> int:
        return self.length - 1

    @property
    def streamed(self) -> bool:
        return self.points is None

    def scalar_residuals(self) -> np.ndarray:
        r = self.residuals
        return r if r.ndim == 1 else r.max(axis=1)

    def to_csv(self) -> str:
        if self.streamed:
            raise ValueError("a streamed run has no stored points to export")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.points.shape[1]
        per_op = self.residuals.ndim == 2
        header = ["n"] + [f"x{i}" for i in range(d)] + ["residual"]
        if per_op:
            header += [f"residual_T{i}" for i in range(self.residuals.shape[1])]
        header.append("cert")
        w.writerow(header)
        res = self.scalar_residuals()
        for n in range(self.length):
            row = [n] + [repr(float(v)) for v in self.points[n]] + [repr(float(res[n]))]
            if per_op:
                row += [repr(float(v)) for v in self.residuals[n]]
            row.append(repr(float(self.certs[n])) if self.certs is not None else "")
            w.writerow(row)
        return buf.getvalue()


# ---------------------------------------------------------------------------
# resolvent scheme


def solve_resolvent(op: Operator, body: ConvexBody, v0, n: int, eps: float,
                    method: str = "auto", max_steps: int = 10**7):
    """Fixed point of ``x -> q U(x) + (1 - q) v0`` with ``q = n/(n+1)``.

    Returns ``(point, error_bound)``.  Affine operators are solved as a
    linear system and the bound comes from the a-posteriori contraction
    estimate ``||x - u_n|| <= ||x - U_n x|| / (1 - q)``.  Otherwise Picard
    iteration runs until a step is at most ``eps (1 - q)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    v0 = as_point(v0)
    q = n / (n + 1)
    aff = op.affine() if method in ("auto", "exact") else None
    if method == "exact" and aff is None:
        raise SolverError("exact solve requested for a non-affine operator")
    if n == 0:
        return v0.copy(), 0.0
    if aff is not None:
        A, c = aff
        d = v0.size
        x = np.linalg.solve(np.eye(d) - q * A, q * c + (1 - q) * v0)
        step = float(np.linalg.norm(q * op(x) + (1 - q) * v0 - x))
        return x, step / (1 - q)
    x = v0.copy()
    stop = eps * (1 - q)
    for _ in range(max_steps):
        y = q * op(x) + (1 - q) * v0
        gap = float(np.linalg.norm(y - x))
        x = y
        if gap <= stop:
            return x, q / (1 - q) * gap
    raise SolverError(f"Picard iteration for n={n} did not reach {eps:g} in {max_steps} steps")


def browder_sequence(op: Operator, body: ConvexBody, v0, N: int,
                     eps_schedule: Callable[[int], float] = default_eps,
                     method: str = "auto") -> IterationTrace:
    v0 = as_point(v0)
    pts = np.empty((N + 1, v0.size))
    res = np.empty(N + 1)
    certs = np.empty(N + 1)
    for n in range(N + 1):
        x, cert = solve_resolvent(op, body, v0, n, eps_schedule(n), method)
        pts[n], certs[n] = x, cert
        res[n] = np.linalg.norm(op(x) - x)
    _check_inside(body, pts, "browder")
    return IterationTrace("browder", pts, res, certs,
                          config={"scheme": "browder", "N": N, "v0": v0.tolist()})


# ---------------------------------------------------------------------------
# anchored schemes


def _check_inside(body: Optional[ConvexBody], pts: np.ndarray, scheme: str) -> None:
    if body is None:
        return
    for n, x in enumerate(pts):
        if not body.contains(x, tol=1e-9):
            raise SolverError(f"{scheme} iterate u_{n} left the body")


def halpern_sequence(op: Operator, body: Optional[ConvexBody], u0, lam, N: int) -> IterationTrace:
    trace = bauschke_sequence(OperatorFamily((op,)), body, u0, lam, N)
    trace.scheme = "halpern"
    trace.config["scheme"] = "halpern"
    trace.residuals = trace.residuals[:, 0].copy()
    return trace


def bauschke_sequence(family: OperatorFamily, body: Optional[ConvexBody], u0, lam, N: int,
                      store: bool = True) -> IterationTrace:
    """Cyclic anchored iteration; with ``store=False`` only the recipe is kept."""
    u0 = as_point(u0)
    seq = _lambda_seq(lam)
    config = {"scheme": "bauschke", "N": N, "u0": u0.tolist(), "ell": family.ell,
              "lambda": seq.describe()}
    if not store:
        return IterationTrace("bauschke", None, None, None, config,
                              family=family, anchor=u0, lam=seq, length=N + 1)
    ell = family.ell
    pts = np.empty((N + 1, u0.size))
    pts[0] = u0
    affs = [op.affine() for op in family.operators]
    if all(a is not None for a in affs):
        A = np.array([a[0] for a in affs])
        c = np.array([a[1] for a in affs])
        lams = np.array([seq(n) for n in range(N + 1)])
        _affine_recurrence(A, c, u0, lams, pts)
    else:
        x = u0
        for n in range(N):
            t = seq(n + 1)
            x = t * u0 + (1 - t) * family.at(n + 1)(x)
            pts[n + 1] = x
    res = np.empty((N + 1, ell))
    for i, op in enumerate(family.operators):
        res[:, i] = np.linalg.norm(op.apply_many(pts) - pts, axis=1)
    _check_inside(body, pts, "bauschke")
    return IterationTrace("bauschke", pts, res, None, config, family=family, anchor=u0, lam=seq)


def _affine_recurrence_py(A, c, u0, lams, out):
    ell = A.shape[0]
    d = u0.shape[0]
    x = u0.copy()
    for n in range(out.shape[0] - 1):
        i = (n + 1) % ell
        t = lams[n + 1]
        y = np.empty(d)
        for r in range(d):
            s = c[i, r]
            for q in range(d):
                s += A[i, r, q] * x[q]
            y[r] = t * u0[r] + (1 - t) * s
        out[n + 1] = y
        x = y


# ---------------------------------------------------------------------------
# streaming scan for long cyclic runs
#
# Per index n the scan evaluates
#   q0(n) = ||u_{n+1} - U_{n+1}(u_n)||           (n + 1 <= N)
#   q1(n) = ||u_{n+ell} - u_n||                  (n + ell <= N)
#   q2(n) = ||u_n - U_{n+ell} ... U_{n+1}(u_n)||  (n <= N)
#   q3(n) = max_i ||u_n - T_i(u_n)||             (n <= N)
# and for every requested threshold t of item j reports max_{n >= t} qj(n)
# together with qj at the last index of its range.

ITEMS = 4


def _scan_affine_py(A, c, u0, N, thresholds, counts):
    """Streaming scan for an affine family with harmonic step sizes.

    ``thresholds`` is (ITEMS, m) with each row sorted ascending and padded
    with N + 1; ``counts[j]`` is the number of real thresholds in row j.
    Returns (segment maxima (ITEMS, m), last values (ITEMS,)).
    """
    ell = A.shape[0]
    d = u0.shape[0]
    m = thresholds.shape[1]
    seg = np.full((ITEMS, m), -1.0)
    last = np.zeros(ITEMS)
    ptr = np.full(ITEMS, -1, dtype=np.int64)
    ring = np.zeros((ell + 1, d))
    x = u0.copy()
    ring[0] = x
    tmp = np.empty(d)
    tmp2 = np.empty(d)
    for n in range(N + 1):
        # advance segment pointers for item j at index n
        for j in range(ITEMS):
            while ptr[j] + 1 < counts[j] and thresholds[j, ptr[j] + 1] <= n:
                ptr[j] += 1
        # q3 and q2 at index n
        worst = 0.0
        for i in range(ell):
            s2 = 0.0
            for r in range(d):
                s = c[i, r]
                for q in range(d):
                    s += A[i, r, q] * x[q]
                s2 += (s - x[r]) ** 2
            if s2 > worst:
                worst = s2
        v3 = np.sqrt(worst)
        for r in range(d):
            tmp[r] = x[r]
        for step in range(1, ell + 1):
            i = (n + step) % ell
            for r in range(d):
                s = c[i, r]
                for q in range(d):
                    s += A[i, r, q] * tmp[q]
                tmp2[r] = s
            for r in range(d):
                tmp[r] = tmp2[r]
        s2 = 0.0
        for r in range(d):
            s2 += (x[r] - tmp[r]) ** 2
        v2 = np.sqrt(s2)
        if ptr[3] >= 0 and v3 > seg[3, ptr[3]]:
            seg[3, ptr[3]] = v3
        if ptr[2] >= 0 and v2 > seg[2, ptr[2]]:
            seg[2, ptr[2]] = v2
        last[3] = v3
        last[2] = v2
        # q1 at index n - ell, now that u_n is known
        if n >= ell:
            base = ring[(n - ell) % (ell + 1)]
            s2 = 0.0
            for r in range(d):
                s2 += (x[r] - base[r]) ** 2
            v1 = np.sqrt(s2)
            idx = n - ell
            # locate the segment of idx (pointer for item 1 trails by ell steps)
            k = -1
            while k + 1 < counts[1] and thresholds[1, k + 1] <= idx:
                k += 1
            if k >= 0 and v1 > seg[1, k]:
                seg[1, k] = v1
            last[1] = v1
        if n == N:
            break
        # step to u_{n+1}, recording q0(n)
        i = (n + 1) % ell
        t = 1.0 / (n + 2)
        s2 = 0.0
        for r in range(d):
            s = c[i, r]
            for q in range(d):
                s += A[i, r, q] * x[q]
            y = t * u0[r] + (1 - t) * s
            s2 += (y - s) ** 2
            tmp[r] = y
        v0 = np.sqrt(s2)
        if ptr[0] >= 0 and v0 > seg[0, ptr[0]]:
            seg[0, ptr[0]] = v0
        last[0] = v0
        for r in range(d):
            x[r] = tmp[r]
        ring[(n + 1) % (ell + 1)] = x
    return seg, last


try:  # numba turns the scan into a tight loop; without it the Python version still works
    import numba

    _scan_affine = numba.njit(cache=True)(_scan_affine_py)
    _affine_recurrence = numba.njit(cache=True)(_affine_recurrence_py)
except Exception:  # pragma: no cover - numba missing or broken
    log.warning("numba unavailable; long cyclic scans will be slow")
    _scan_affine = _scan_affine_py
    _affine_recurrence = _affine_recurrence_py


def _scan_generic(family: OperatorFamily, u0: np.ndarray, seq: LambdaSeq, N: int,
                  thresholds: np.ndarray, counts: np.ndarray):
    ell = family.ell
    m = thresholds.shape[1]
    seg = np.full((ITEMS, m), -1.0)
    last = np.zeros(ITEMS)
    ring = [u0] * (ell + 1)
    x = u0

    def segment(j: int, n: int) -> int:
        return int(np.searchsorted(thresholds[j, :counts[j]], n, side="right")) - 1

    def record(j: int, n: int, v: float) -> None:
        s = segment(j, n)
        if s >= 0 and v > seg[j, s]:
            seg[j, s] = v
        last[j] = v

    for n in range(N + 1):
        record(3, n, max(float(np.linalg.norm(op(x) - x)) for op in family.operators))
        y = x
        for step in range(1, ell + 1):
            y = family.at(n + step)(y)
        record(2, n, float(np.linalg.norm(x - y)))
        if n >= ell:
            record(1, n - ell, float(np.linalg.norm(x - ring[(n - ell) % (ell + 1)])))
        if n == N:
            break
        t = seq(n + 1)
        ux = family.at(n + 1)(x)
        nxt = t * u0 + (1 - t) * ux
        record(0, n, float(np.linalg.norm(nxt - ux)))
        x = nxt
        ring[(n + 1) % (ell + 1)] = x
    return seg, last


@dataclass
class ScanResult:
    """``suffix_max[j][t]`` = max of item j over indices ``>= t``; ``last[j]`` = value at the end."""

    suffix_max: list
    last: list
    last_index: list


def scan_cyclic(trace: IterationTrace, thresholds: Sequence[Sequence[int]]) -> ScanResult:
    """Evaluate the four per-index quantities of a cyclic run against thresholds.

    ``thresholds[j]`` lists the starting indices of interest for item j.
    Works for stored and streamed traces alike; streamed affine runs with
    harmonic steps use the compiled kernel.
    """
    if trace.scheme not in ("bauschke", "halpern"):
        raise ValueError("scan_cyclic needs an anchored trace")
    N = trace.last
    family, u0, seq = trace.family, trace.anchor, trace.lam
    ell = family.ell
    ends = [N - 1, N - ell, N, N]
    uniq = [sorted({int(t) for t in ts if 0 <= int(t) <= ends[j]}) for j, ts in enumerate(thresholds)]
    width = max(1, max(len(u) for u in uniq))
    T = np.full((ITEMS, width), N + 1, dtype=np.int64)
    counts = np.zeros(ITEMS, dtype=np.int64)
    for j, u in enumerate(uniq):
        T[j, :len(u)] = u
        counts[j] = len(u)
    affs = [op.affine() for op in family.operators]
    if all(a is not None for a in affs) and seq.kind == "harmonic":
        A = np.array([a[0] for a in affs], dtype=float)
        c = np.array([a[1] for a in affs], dtype=float)
        seg, last = _scan_affine(A, c, np.asarray(u0, dtype=float), N, T, counts)
    else:
        seg, last = _scan_generic(family, np.asarray(u0, dtype=float), seq, N, T, counts)
    suffix = []
    for j, u in enumerate(uniq):
        table, run = {}, -1.0
        for s in range(len(u) - 1, -1, -1):
            run = max(run, float(seg[j, s]))
            table[u[s]] = run
        suffix.append(table)
    return ScanResult(suffix, [float(v) for v in last], ends)
