"""Authentication failure rates for one or several Gaussian characteristics.

A_F = P(C) * P(Pass | C) + P(A) * (1 - P(Pass | A)): counterfeits that pass
plus authentic chips that fail.

``AcDistribution.f_ac_role`` controls how ``f_ac`` is read:

* ``"population"``: ``f_ac`` is the density over all chips, so
  P(Pass | C) = (P(Pass) - P(A) P(Pass | A)) / P(C).  An ``f_ac`` that cannot
  contain ``P(A) * f_ac_given_a`` raises ``InconsistentMixtureError``.
* ``"counterfeit"``: ``f_ac`` is the counterfeit density itself.
"""

from dataclasses import dataclass
import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr

from momauth import _rng

ROLES = ("population", "counterfeit")
# slack for round-off when checking the mixture decomposition
_MIX_TOL = 1e-12


class InconsistentMixtureError(ValueError):
    pass


@dataclass(frozen=True)
class Gaussian:
    mean: float
    std: float

    def __post_init__(self):
        if not np.isfinite(self.mean):
            raise ValueError(f"mean must be finite, got {self.mean}")
        if not (np.isfinite(self.std) and self.std > 0):
            raise ValueError(f"std must be > 0, got {self.std}")


@dataclass(frozen=True)
class ThresholdPair:
    t_l: float
    t_u: float

    def __post_init__(self):
        if np.isnan(self.t_l) or np.isnan(self.t_u):
            raise ValueError("thresholds must not be NaN")
        if self.t_l > self.t_u:
            raise ValueError(f"t_l ({self.t_l}) must not exceed t_u ({self.t_u})")


@dataclass(frozen=True)
class AcDistribution:
    f_ac: Gaussian
    f_ac_given_a: Gaussian
    p_a: float = 0.5
    rho: float = 0.0
    f_ac_role: str = "population"

    def __post_init__(self):
        if not 0 < self.p_a < 1:
            raise ValueError(f"p_a must be in (0, 1), got {self.p_a}")
        if not abs(self.rho) < 1:
            raise ValueError(f"|rho| must be < 1, got {self.rho}")
        if self.f_ac_role not in ROLES:
            raise ValueError(f"f_ac_role must be one of {ROLES}")

    @property
    def p_c(self):
        return 1.0 - self.p_a


def pass_probability(g, t):
    """Mass of ``g`` inside [t_l, t_u]."""
    if t.t_l == t.t_u:
        return 0.0
    return float(ndtr((t.t_u - g.mean) / g.std) - ndtr((t.t_l - g.mean) / g.std))


def _pass_vec(g, tl, tu):
    p = ndtr((tu - g.mean) / g.std) - ndtr((tl - g.mean) / g.std)
    return np.where(tl == tu, 0.0, p)


def pass_given_counterfeit(d, t):
    if d.f_ac_role == "counterfeit":
        return pass_probability(d.f_ac, t)
    p_all = pass_probability(d.f_ac, t)
    p_auth = pass_probability(d.f_ac_given_a, t)
    q = (p_all - d.p_a * p_auth) / d.p_c
    if q < -_MIX_TOL or q > 1 + _MIX_TOL:
        raise InconsistentMixtureError(
            f"P(Pass)={p_all:.6g} < P(A)*P(Pass|A)={d.p_a * p_auth:.6g}: f_ac is not a mixture containing "
            f"the authentic density; use f_ac_role='counterfeit' if f_ac describes counterfeits"
        )
    return min(max(q, 0.0), 1.0)


def failure_rate(d, t):
    """A_F for thresholds ``t``."""
    p_auth = pass_probability(d.f_ac_given_a, t)
    return d.p_c * pass_given_counterfeit(d, t) + d.p_a * (1.0 - p_auth)


def _failure_vec(d, tl, tu):
    p_auth = _pass_vec(d.f_ac_given_a, tl, tu)
    p_all = _pass_vec(d.f_ac, tl, tu)
    if d.f_ac_role == "counterfeit":
        q = p_all
    else:
        q = (p_all - d.p_a * p_auth) / d.p_c
        # inconsistent candidates are not admissible optima
        q = np.where((q < -_MIX_TOL) | (q > 1 + _MIX_TOL), np.inf, np.clip(q, 0.0, 1.0))
    return d.p_c * q + d.p_a * (1.0 - p_auth)


def _envelope(gaussians, width=5.0):
    lo = min(g.mean - width * g.std for g in gaussians)
    hi = max(g.mean + width * g.std for g in gaussians)
    return lo, hi


def _refine(obj, x0, scale):
    res = minimize(obj, x0, method="Nelder-Mead",
                   options={"xatol": 1e-9 * scale, "fatol": 1e-13, "maxiter": 4000})
    return res.x, res.fun


def optimize_thresholds(d, grid=400, width=5.0):
    """Minimize A_F over threshold pairs.

    A ``grid`` x ``grid`` search over the mean +- ``width``*std envelope of both
    densities (plus the full-range and empty windows) is refined by
    Nelder-Mead.  Returns ``(ThresholdPair, A_F_min)``.
    """
    lo, hi = _envelope([d.f_ac, d.f_ac_given_a], width)
    pts = np.linspace(lo, hi, grid)
    tl, tu = np.meshgrid(pts, pts, indexing="ij")
    keep = tl <= tu
    tl, tu = tl[keep], tu[keep]
    # unbounded sides as candidates too
    tl = np.concatenate([tl, np.full(grid, -np.inf), pts, [-np.inf]])
    tu = np.concatenate([tu, pts, np.full(grid, np.inf), [np.inf]])
    af = _failure_vec(d, tl, tu)
    i = int(np.argmin(af))
    best_t, best = (float(tl[i]), float(tu[i])), float(af[i])

    if np.isfinite(best_t[0]) and np.isfinite(best_t[1]) and best_t[0] < best_t[1]:
        def obj(x):
            a, b = x
            if a > b:
                return 2.0
            return float(_failure_vec(d, np.array([a]), np.array([b]))[0])

        x, f = _refine(obj, np.array(best_t), hi - lo)
        if f < best:
            best_t, best = (float(x[0]), float(x[1])), float(f)
    return ThresholdPair(*best_t), best


# beyond this many standard deviations every CDF term is exactly 0 or 1 in doubles
_Z_CLIP = 40.0


def bvn_cdf(h, k, rho, panels=16, nodes=20):
    """P(X <= h, Y <= k) for a standard bivariate normal with correlation ``rho``.

    Uses the angular identity
    Phi2 = Phi(h)Phi(k) + 1/(2 pi) int_0^asin(rho) exp(-(h^2 + k^2 - 2hk sin t) / (2 cos^2 t)) dt
    with composite Gauss-Legendre (``panels`` x ``nodes``); the error is at
    round-off level for |rho| <= 0.999.  ``h`` and ``k`` broadcast.
    """
    if not abs(rho) < 1:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    h = np.clip(np.asarray(h, dtype=float), -_Z_CLIP, _Z_CLIP)
    k = np.clip(np.asarray(k, dtype=float), -_Z_CLIP, _Z_CLIP)
    h, k = np.broadcast_arrays(h, k)
    base = ndtr(h) * ndtr(k)
    if rho == 0:
        return base
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(0.0, np.arcsin(rho), panels + 1)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    t = (mid + half * x).ravel()
    wt = (half * w).ravel()
    hh, kk = h[..., None], k[..., None]
    f = np.exp(-(hh * hh + kk * kk - 2 * hh * kk * np.sin(t)) / (2 * np.cos(t) ** 2))
    return base + (f @ wt) / (2 * np.pi)


def bvn_rectangle(a, b, rho):
    """P(a[0] < X <= b[0], a[1] < Y <= b[1]) for a standard bivariate normal."""
    p = (bvn_cdf(b[0], b[1], rho) - bvn_cdf(a[0], b[1], rho)
         - bvn_cdf(b[0], a[1], rho) + bvn_cdf(a[0], a[1], rho))
    return np.clip(p, 0.0, 1.0)


@dataclass(frozen=True)
class MultiAcResult:
    a_f: float
    p_accept_counterfeit: float
    p_accept_authentic: float
    se: float = 0.0
    method: str = "quadrature"


def _accept_two(g, rho, t1, t2, m):
    """P(at least m of two correlated ACs pass) for marginal ``g``.

    ``t1``/``t2`` are (t_l, t_u) tuples of arrays.  The joint probability of
    each pass/fail outcome follows from the both-pass rectangle and the
    marginals; outcomes with at least ``m`` passes are summed.
    """
    l1, u1 = [(np.asarray(v, dtype=float) - g.mean) / g.std for v in t1]
    l2, u2 = [(np.asarray(v, dtype=float) - g.mean) / g.std for v in t2]
    p1 = np.where(l1 < u1, ndtr(u1) - ndtr(l1), 0.0)
    p2 = np.where(l2 < u2, ndtr(u2) - ndtr(l2), 0.0)
    both = np.where((l1 < u1) & (l2 < u2), bvn_rectangle((l1, l2), (u1, u2), rho), 0.0)
    outcomes = {
        (1, 1): both,
        (1, 0): p1 - both,
        (0, 1): p2 - both,
        (0, 0): 1.0 - p1 - p2 + both,
    }
    total = sum(np.clip(v, 0.0, 1.0) for (s1, s2), v in outcomes.items() if s1 + s2 >= m)
    return np.minimum(total, 1.0)


def multi_ac_failure(d, thresholds, n=2, m=1, mc_samples=1_000_000, seed=0, method="auto"):
    """A_F when a chip is accepted if at least ``m`` of ``n`` ACs pass.

    ``d.f_ac`` is read as the counterfeit marginal of every AC and
    ``d.f_ac_given_a`` as the authentic marginal; ``d.rho`` is the pairwise
    correlation within each population.  ``thresholds`` is one pair shared by
    all ACs or a sequence of ``n`` pairs.  n = 2 is integrated; n > 2 is
    sampled and the result carries its standard error; ``method='monte-carlo'``
    forces sampling for any n.
    """
    if d.f_ac_role != "counterfeit":
        raise ValueError("multi_ac_failure needs f_ac_role='counterfeit'")
    if n < 1 or not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    ts = [thresholds] * n if isinstance(thresholds, ThresholdPair) else list(thresholds)
    if len(ts) != n:
        raise ValueError(f"expected {n} threshold pairs, got {len(ts)}")
    if n == 1 and method != "monte-carlo":
        return MultiAcResult(failure_rate(d, ts[0]), pass_probability(d.f_ac, ts[0]),
                             pass_probability(d.f_ac_given_a, ts[0]))
    if n == 2 and method != "monte-carlo":
        t1, t2 = (ts[0].t_l, ts[0].t_u), (ts[1].t_l, ts[1].t_u)
        pc = float(_accept_two(d.f_ac, d.rho, t1, t2, m))
        pa = float(_accept_two(d.f_ac_given_a, d.rho, t1, t2, m))
        return MultiAcResult(d.p_c * pc + d.p_a * (1 - pa), pc, pa)

    if n > 1 and d.rho <= -1.0 / (n - 1):
        raise ValueError(f"rho={d.rho} does not give a valid {n}x{n} equicorrelation matrix")
    cov = np.full((n, n), d.rho) + (1 - d.rho) * np.eye(n)
    lo = np.array([t.t_l for t in ts])
    hi = np.array([t.t_u for t in ts])
    out = []
    for k, g in enumerate((d.f_ac, d.f_ac_given_a)):
        rng = _rng.stream(seed, _rng.MC, 0, k)
        x = g.mean + g.std * rng.multivariate_normal(np.zeros(n), cov, size=mc_samples, method="cholesky")
        out.append(((x >= lo) & (x <= hi)).sum(axis=1) >= m)
    pc, pa = out[0].mean(), out[1].mean()
    a_f = d.p_c * pc + d.p_a * (1 - pa)
    se = np.sqrt(d.p_c**2 * pc * (1 - pc) / mc_samples + d.p_a**2 * pa * (1 - pa) / mc_samples)
    return MultiAcResult(float(a_f), float(pc), float(pa), float(se), "monte-carlo")


def _multi_af_vec(d, tl, tu, m):
    t = (tl, tu)
    pc = _accept_two(d.f_ac, d.rho, t, t, m)
    pa = _accept_two(d.f_ac_given_a, d.rho, t, t, m)
    return d.p_c * pc + d.p_a * (1 - pa)


def optimize_multi_thresholds(d, n=2, m=1, grid=200, width=5.0):
    """Best common threshold pair for two ACs under the m-of-2 rule.

    Same search as ``optimize_thresholds`` on a coarser grid.
    """
    if n != 2:
        raise ValueError("threshold optimization is implemented for n = 2")
    if d.f_ac_role != "counterfeit":
        raise ValueError("multi-AC analysis needs f_ac_role='counterfeit'")
    lo, hi = _envelope([d.f_ac, d.f_ac_given_a], width)
    pts = np.linspace(lo, hi, grid)
    tl, tu = np.meshgrid(pts, pts, indexing="ij")
    keep = tl <= tu
    tl = np.concatenate([tl[keep], np.full(grid, -np.inf), pts, [-np.inf]])
    tu = np.concatenate([tu[keep], pts, np.full(grid, np.inf), [np.inf]])
    af = _multi_af_vec(d, tl, tu, m)
    i = int(np.argmin(af))
    best_t, best = (float(tl[i]), float(tu[i])), float(af[i])
    if np.isfinite(best_t[0]) and np.isfinite(best_t[1]) and best_t[0] < best_t[1]:
        def obj(x):
            if x[0] > x[1]:
                return 2.0
            return float(_multi_af_vec(d, np.array([x[0]]), np.array([x[1]]), m)[0])

        x, f = _refine(obj, np.array(best_t), hi - lo)
        if f < best:
            best_t, best = (float(x[0]), float(x[1])), float(f)
    return ThresholdPair(*best_t), best


def mc_multi_failure(d, thresholds, n=2, m=1, samples=1_000_000, seed=0):
    """Correlated-Gaussian sampling oracle for ``multi_ac_failure``."""
    return multi_ac_failure(d, thresholds, n, m, mc_samples=samples, seed=seed, method="monte-carlo")


def mc_failure_rate(d, t, samples=1_000_000, seed=0):
    """Sampling oracle for ``failure_rate``: returns (A_F, standard error)."""
    if d.f_ac_role != "counterfeit":
        raise ValueError("the sampling oracle draws counterfeits from f_ac; use f_ac_role='counterfeit'")
    rng = _rng.stream(seed, _rng.MC, 1)
    auth = rng.random(samples) < d.p_a
    x = np.empty(samples)
    na = int(auth.sum())
    x[auth] = rng.normal(d.f_ac_given_a.mean, d.f_ac_given_a.std, na)
    x[~auth] = rng.normal(d.f_ac.mean, d.f_ac.std, samples - na)
    passed = (x >= t.t_l) & (x <= t.t_u) & (t.t_l < t.t_u)
    err = np.where(auth, ~passed, passed)
    return float(err.mean()), float(err.std() / np.sqrt(samples))
