"""Integer-order Bessel functions of the first kind and their zeros.

J_m(x) comes from the ascending series when x <= 2 sqrt(m + 1) (cancellation
stays below a factor e^2) and from Miller's backward recurrence, normalized by
J_0 + 2 sum J_2k = 1, otherwise.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

MAX_ORDER = 200
MAX_ARGUMENT = 1.0e4
MAX_ZERO_INDEX = 200

_BIG = 1.0e250
_SERIES_TERMS = 64


def _check(m, x):
    if int(m) != m or m < 0 or m > MAX_ORDER:
        raise ValueError(f"order must be an integer in [0, {MAX_ORDER}], got {m}")
    xa = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(xa)) or np.any(xa < 0) or np.any(xa > MAX_ARGUMENT):
        raise ValueError(f"argument must lie in [0, {MAX_ARGUMENT:g}]")
    return int(m), xa


def _series(m: int, x: np.ndarray) -> np.ndarray:
    half = 0.5 * x
    with np.errstate(divide="ignore"):
        lead = np.where(x > 0, np.exp(m * np.log(np.where(x > 0, half, 1.0)) - math.lgamma(m + 1)), 0.0)
    if m == 0:
        lead = np.ones_like(x)
    q = -half * half
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, _SERIES_TERMS):
        term = term * q / (k * (k + m))
        total = total + term
    return lead * total


def _start_order(m: int, xmax: float) -> int:
    top = max(float(m), xmax)
    n = int(top + 12.0 * top ** (1.0 / 3.0) + 40)
    return n + (n % 2)


def _miller(orders, x: np.ndarray) -> dict:
    """Backward recurrence returning {order: J_order(x)} for positive ``x``."""
    orders = sorted(set(orders))
    n0 = _start_order(orders[-1], float(x.max()))
    want = set(orders)
    out = {o: np.zeros_like(x) for o in orders}
    nxt = np.zeros_like(x)
    cur = np.full_like(x, 1e-300)
    norm = np.zeros_like(x)
    inv = 2.0 / x
    for n in range(n0, 0, -1):
        # cur = J_n (unnormalized), nxt = J_{n+1}
        if n in want:
            out[n] = cur.copy()
        if n % 2 == 0:
            norm += 2.0 * cur
        prev = n * inv * cur - nxt
        nxt, cur = cur, prev
        # growth per step is at most 2n/x < 60 here, so checking every 8 steps cannot overflow
        if n % 8:
            continue
        big = np.abs(cur) > _BIG
        if big.any():
            s = np.where(big, 1.0 / _BIG, 1.0)
            cur *= s
            nxt *= s
            norm *= s
            for o in out:
                out[o] *= s
    # cur = J_0
    if 0 in want:
        out[0] = cur.copy()
    norm += cur
    return {o: out[o] / norm for o in orders}


def _scalar_miller(m: int, x: float) -> float:
    n0 = _start_order(m, x)
    nxt, cur, norm, keep = 0.0, 1e-300, 0.0, 0.0
    inv = 2.0 / x
    for n in range(n0, 0, -1):
        if n == m:
            keep = cur
        if n % 2 == 0:
            norm += 2.0 * cur
        nxt, cur = cur, n * inv * cur - nxt
        if abs(cur) > _BIG:
            cur /= _BIG
            nxt /= _BIG
            norm /= _BIG
            keep /= _BIG
    if m == 0:
        keep = cur
    return keep / (norm + cur)


def _series_scalar(m: int, x: float) -> float:
    if x == 0.0:
        return 1.0 if m == 0 else 0.0
    half = 0.5 * x
    lead = math.exp(m * math.log(half) - math.lgamma(m + 1))
    q = -half * half
    term, total = 1.0, 1.0
    for k in range(1, _SERIES_TERMS):
        term *= q / (k * (k + m))
        total += term
        if abs(term) < 1e-18 * abs(total):
            break
    return lead * total


def _use_series(m, x):
    return x <= 2.0 * math.sqrt(m + 1.0)


def bessel_j(m: int, x):
    """J_m(x) for integer 0 <= m <= 200 and 0 <= x <= 1e4 (scalar or array)."""
    m, xa = _check(m, x)
    if xa.ndim == 0:
        xv = float(xa)
        if _use_series(m, xv):
            return _series_scalar(m, xv)
        return _scalar_miller(m, xv)
    return _bessel_many([m], xa)[m]


def _bessel_many(orders, x: np.ndarray) -> dict:
    flat = np.asarray(x, dtype=float).ravel()
    out = {o: np.empty_like(flat) for o in orders}
    series = {o: _use_series(o, flat) for o in orders}
    rest_any = ~np.logical_and.reduce([series[o] for o in orders])
    mill = _miller(orders, flat[rest_any]) if rest_any.any() else {}
    for o in orders:
        s = series[o]
        if s.any():
            out[o][s] = _series(o, flat[s])
        rest = ~s
        if rest.any():
            # rows of the shared Miller pass that this order needs
            out[o][rest] = mill[o][rest[rest_any]]
    return {o: v.reshape(np.shape(x)) for o, v in out.items()}


def bessel_j_and_derivative(m: int, x):
    """(J_m(x), J_m'(x)) with J_m' = (J_{m-1} - J_{m+1}) / 2 and J_0' = -J_1."""
    m, xa = _check(m, x)
    if m + 1 > MAX_ORDER + 1:
        raise ValueError("order out of range")
    xa = np.atleast_1d(xa)
    orders = [m, m + 1] + ([m - 1] if m > 0 else [])
    vals = _bessel_many(orders, xa)
    if m == 0:
        d = -vals[1]
    else:
        d = 0.5 * (vals[m - 1] - vals[m + 1])
    return vals[m], d


def bessel_jp(m: int, x):
    """J_m'(x)."""
    if np.ndim(x) == 0:
        _check(m, x)
        xv = float(x)
        if m == 0:
            return -_scalar_eval(1, xv)
        return 0.5 * (_scalar_eval(m - 1, xv) - _scalar_eval(m + 1, xv))
    return bessel_j_and_derivative(m, x)[1]


def _scalar_eval(m: int, x: float) -> float:
    if _use_series(m, x):
        return _series_scalar(m, x)
    return _scalar_miller(m, x)


# ---------------------------------------------------------------------------
# zeros
# ---------------------------------------------------------------------------

class BracketingError(ValueError):
    """Raised when the requested zero could not be bracketed."""

    def __init__(self, message, interval):
        super().__init__(f"{message} (searched {interval[0]:.6g} .. {interval[1]:.6g})")
        self.interval = interval


def _zero_function(m: int, kind: str):
    if kind == "j":
        return lambda x: _scalar_eval(m, x)
    if m == 0:
        return lambda x: -_scalar_eval(1, x)
    return lambda x: 0.5 * (_scalar_eval(m - 1, x) - _scalar_eval(m + 1, x))


def _zero_function_vec(m: int, kind: str):
    if kind == "j":
        return lambda x: _bessel_many([m], x)[m]
    if m == 0:
        return lambda x: -_bessel_many([1], x)[1]
    return lambda x: (lambda v: 0.5 * (v[m - 1] - v[m + 1]))(_bessel_many([m - 1, m + 1], x))


def _normalize_kind(kind) -> str:
    k = str(getattr(kind, "value", kind)).lower()
    if k in ("j", "ofj"):
        return "j"
    if k in ("jp", "ofjprime", "jprime", "j'"):
        return "jp"
    raise ValueError(f"unknown zero kind {kind!r}")


@lru_cache(maxsize=4096)
def bessel_zero(m: int, k: int, kind="j", tol: float = 1e-12) -> float:
    """k-th positive zero of J_m (kind "j") or J_m' (kind "jp").

    Zeros are bracketed by a sign scan of step 0.25 (zero spacing always exceeds
    that for m <= 200) and refined by bisection to ``tol``.  x = 0 is never
    counted, so the first zero of J_0' is j_{1,1} = 3.8317...
    """
    kind = _normalize_kind(kind)
    if int(m) != m or not 0 <= m <= MAX_ORDER:
        raise ValueError(f"order must be an integer in [0, {MAX_ORDER}]")
    if int(k) != k or not 1 <= k <= MAX_ZERO_INDEX:
        raise ValueError(f"zero index must be an integer in [1, {MAX_ZERO_INDEX}]")
    m, k = int(m), int(k)
    # J_m and J_m' keep one sign on (0, m] for m >= 1
    start = max(0.1, float(m))
    step = 0.25
    # McMahon: j_{m,k} ~ (k + m/2 - 1/4) pi
    stop = start + (k + 0.5 * m + 2) * math.pi + 10.0
    xs = np.arange(start, min(stop, MAX_ARGUMENT) + step, step)
    fv = _zero_function_vec(m, kind)(xs)
    changes = np.nonzero(np.sign(fv[:-1]) * np.sign(fv[1:]) < 0)[0]
    exact = np.nonzero(fv == 0.0)[0]
    if len(exact):
        raise BracketingError("scan hit a zero exactly; cannot bracket", (xs[exact[0]], xs[exact[0]]))
    if len(changes) < k:
        raise BracketingError(f"found only {len(changes)} sign changes for zero #{k} of order {m}",
                              (float(xs[0]), float(xs[-1])))
    lo, hi = float(xs[changes[k - 1]]), float(xs[changes[k - 1] + 1])
    f = _zero_function(m, kind)
    flo = f(lo)
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bessel_zeros_below(m: int, xmax: float, kind="j", tol: float = 1e-12) -> np.ndarray:
    """All positive zeros of J_m (or J_m') below ``xmax``, ascending.

    One sign scan brackets every zero, then all brackets are refined together.
    """
    kind = _normalize_kind(kind)
    if int(m) != m or not 0 <= m <= MAX_ORDER:
        raise ValueError(f"order must be an integer in [0, {MAX_ORDER}]")
    m = int(m)
    start = max(0.1, float(m))
    if xmax <= start:
        return np.zeros(0)
    step = 0.25
    xs = np.arange(start, min(float(xmax), MAX_ARGUMENT) + step, step)
    f = _zero_function_vec(m, kind)
    fv = f(xs)
    idx = np.nonzero(np.sign(fv[:-1]) * np.sign(fv[1:]) < 0)[0]
    lo, hi = xs[idx].copy(), xs[idx + 1].copy()
    flo, fhi = fv[idx].copy(), fv[idx + 1].copy()
    x = 0.5 * (lo + hi)
    side = np.zeros(len(lo), dtype=int)
    # Illinois regula falsi: bracketing, superlinear, fully vectorized
    for _ in range(100):
        if not len(lo):
            break
        x_new = (lo * fhi - hi * flo) / (fhi - flo)
        x_new = np.where((x_new > lo) & (x_new < hi), x_new, 0.5 * (lo + hi))
        done = np.abs(x_new - x) <= tol
        x = x_new
        if done.all():
            break
        fx = f(x)
        left = (fx < 0) == (flo < 0)
        lo = np.where(left, x, lo)
        flo = np.where(left, fx, flo)
        hi = np.where(left, hi, x)
        fhi = np.where(left, fhi, fx)
        # halve the stale endpoint value when the same side moves twice
        fhi = np.where(left & (side == 1), 0.5 * fhi, fhi)
        flo = np.where(~left & (side == -1), 0.5 * flo, flo)
        side = np.where(left, 1, -1)
    return x[x < xmax]
