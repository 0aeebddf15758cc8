"""Monte Carlo and exact checks of the variance analysis under the Gaussian embedding model.

Class-i embeddings are h = mu^i + eps with eps ~ N(0, Lambda^i) (diagonal), and
a class center estimated from n_i labeled nodes is C^i = mu^i + e^i with
e^i ~ N(0, Lambda^i / n_i).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ContractError, InvalidSpecError
from .graph import ClassCounts

CHUNK = 100_000


@dataclass(frozen=True, eq=False)
class GaussianModelSpec:
    mu: np.ndarray
    lambda_diag: np.ndarray
    counts: ClassCounts

    def __post_init__(self):
        mu = np.atleast_2d(np.asarray(self.mu, dtype=np.float64))
        lam = np.atleast_2d(np.asarray(self.lambda_diag, dtype=np.float64))
        counts = self.counts if isinstance(self.counts, ClassCounts) else ClassCounts(tuple(int(c) for c in self.counts))
        if mu.shape != lam.shape:
            raise InvalidSpecError("mu and lambda_diag must have the same k x d shape")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise InvalidSpecError("lambda_diag must be nonnegative and finite")
        if len(counts) != mu.shape[0] or min(counts.counts) < 1:
            raise InvalidSpecError("need one count >= 1 per class")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "lambda_diag", lam)
        object.__setattr__(self, "counts", counts)

    @property
    def k(self) -> int:
        return self.mu.shape[0]

    @property
    def d(self) -> int:
        return self.mu.shape[1]

    @property
    def n(self) -> np.ndarray:
        return self.counts.as_array().astype(np.float64)

    def with_counts(self, counts) -> "GaussianModelSpec":
        return GaussianModelSpec(self.mu, self.lambda_diag, ClassCounts(tuple(int(c) for c in counts)))

    def scaled(self, h_scale: float = 1.0, lambda_scale: float = 1.0) -> "GaussianModelSpec":
        return GaussianModelSpec(self.mu * h_scale, self.lambda_diag * lambda_scale, self.counts)

    @classmethod
    def random(cls, k: int, d: int, seed: int = 0, count_range=(1, 50)) -> "GaussianModelSpec":
        rng = np.random.default_rng(seed)
        return cls(
            rng.normal(size=(k, d)),
            rng.uniform(0.2, 2.0, size=(k, d)),
            ClassCounts(tuple(int(c) for c in rng.integers(count_range[0], count_range[1] + 1, size=k))),
        )


@dataclass
class OracleReport:
    name: str
    analytic: float
    monte_carlo: float
    num_samples: int
    relative_error: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _report(name, analytic, mc, num_samples, tolerance, details=None, rel=None, atol=1e-20) -> OracleReport:
    """Build a report whose pass flag is exactly ``relative_error <= tolerance``.

    Composite checks pass their own ``rel`` already expressed on the tolerance's scale.
    """
    analytic, mc = float(analytic), float(mc)
    if rel is None:
        if analytic == 0.0:
            rel = 0.0 if abs(mc) <= atol else math.inf
        else:
            rel = abs(mc - analytic) / abs(analytic)
    rel = float(rel)
    return OracleReport(name, analytic, mc, int(num_samples), rel, float(tolerance), rel <= tolerance, details or {})


def _chunks(total: int, size: int = CHUNK):
    done = 0
    while done < total:
        step = min(size, total - done)
        yield step
        done += step


# reciprocal-sum bound ------------------------------------------------------------------------


def reciprocal_sum_bound(counts_list) -> OracleReport:
    """Check sum_i 1/n_i >= c^2/m for partitions of m into c positive parts, equality iff uniform.

    Arithmetic is exact (rationals), so the equality test has no tolerance.
    """
    parts = [tuple(int(x) for x in p) for p in counts_list]
    if not parts:
        raise ContractError("need at least one partition")
    m, c = sum(parts[0]), len(parts[0])
    violations, equal_nonuniform, uniform_not_equal, n_equal = 0, 0, 0, 0
    smallest, shortfall = None, Fraction(0)
    for p in parts:
        if len(p) != c or sum(p) != m:
            raise ContractError("all partitions must share the same total and number of parts")
        if min(p) < 1:
            raise ContractError("partition parts must be positive")
        s = sum(Fraction(1, x) for x in p)
        bound = Fraction(c * c, m)
        uniform = len(set(p)) == 1
        smallest = s if smallest is None else min(smallest, s)
        if s < bound:
            violations += 1
            shortfall = max(shortfall, (bound - s) / bound)
        if s == bound:
            n_equal += 1
            if not uniform:
                equal_nonuniform += 1
        elif uniform:
            uniform_not_equal += 1
    # the relative error is the worst shortfall below the bound; a misplaced equality case is a hard failure
    rel = math.inf if equal_nonuniform or uniform_not_equal else float(shortfall)
    return _report(
        "reciprocal_sum_bound", Fraction(c * c, m), smallest, len(parts), 0.0,
        {"m": m, "c": c, "violations": violations, "equality_cases": n_equal,
         "equality_at_nonuniform": equal_nonuniform, "uniform_without_equality": uniform_not_equal},
        rel=rel,
    )


def random_partition(m: int, c: int, rng) -> list[int]:
    """Uniformly random composition of m into c positive parts (stars and bars)."""
    cuts = np.sort(rng.choice(np.arange(1, m), size=c - 1, replace=False))
    return np.diff(np.concatenate([[0], cuts, [m]])).tolist()


# closed-form variance and its Monte Carlo estimate ----------------------------------------------


def variance_closed_form(spec: GaussianModelSpec, h) -> float:
    """sum_i (1/n_i) h^T Lambda^i h for diagonal Lambda^i."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (spec.d,) or not np.all(np.isfinite(h)):
        raise ContractError("h must be a finite d-vector")
    return float(np.sum((spec.lambda_diag @ (h * h)) / spec.n))


def sample_center_residuals(spec: GaussianModelSpec, size: int, rng) -> np.ndarray:
    """size x k x d draws of e^i ~ N(0, Lambda^i / n_i)."""
    sd = np.sqrt(spec.lambda_diag / spec.n[:, None])
    return rng.standard_normal((size, spec.k, spec.d)) * sd


def monte_carlo_variance(spec: GaussianModelSpec, h, num_samples: int = 1_000_000, seed: int = 0,
                         tolerance: float | None = None) -> OracleReport:
    """Empirical variance of sum_i h^T C^i over resampled centers vs the closed form.

    The default tolerance is 4 standard errors of the sample variance,
    4 * sqrt(2 / (N - 1)) in relative terms.
    """
    if num_samples < 10_000:
        raise ContractError("num_samples must be >= 1e4")
    h = np.asarray(h, dtype=np.float64)
    rng = np.random.default_rng(seed)
    total = np.empty(num_samples)
    pos = 0
    for size in _chunks(num_samples):
        e = sample_center_residuals(spec, size, rng)
        total[pos : pos + size] = (e @ h).sum(axis=1)
        pos += size
    mc = float(total.var(ddof=1))
    tol = 4.0 * math.sqrt(2.0 / (num_samples - 1)) if tolerance is None else tolerance
    analytic = variance_closed_form(spec, h)
    return _report("monte_carlo_variance", analytic, mc, num_samples, tol)


# pair differences ---------------------------------------------------------------------------------------


def pair_difference_check(spec: GaussianModelSpec, cls: int, num_samples: int = 1_000_000, seed: int = 0,
                          sigmas: float = 4.0) -> OracleReport:
    """(h_1 - h_2) / sqrt(2 n_i) for two draws of class i should be N(0, Lambda^i / n_i).

    Passes when every coordinate's mean is within ``sigmas`` standard errors of 0
    and its sample variance within ``sigmas`` standard errors of Lambda^i_j / n_i.
    """
    if not 0 <= cls < spec.k:
        raise ContractError("class index out of range")
    rng = np.random.default_rng(seed)
    mu, sd, n_i = spec.mu[cls], np.sqrt(spec.lambda_diag[cls]), spec.n[cls]
    s1 = np.zeros(spec.d)
    s2 = np.zeros(spec.d)
    for size in _chunks(num_samples):
        h1 = mu + rng.standard_normal((size, spec.d)) * sd
        h2 = mu + rng.standard_normal((size, spec.d)) * sd
        diff = (h1 - h2) / math.sqrt(2.0 * n_i)
        s1 += diff.sum(axis=0)
        s2 += (diff * diff).sum(axis=0)
    mean = s1 / num_samples
    var = (s2 - num_samples * mean * mean) / (num_samples - 1)
    target = spec.lambda_diag[cls] / n_i
    tol = sigmas * math.sqrt(2.0 / (num_samples - 1))
    # z-scores of every coordinate's mean and variance, mapped onto the variance tolerance
    z_mean = _zscore(np.abs(mean), np.sqrt(target / num_samples))
    z_var = _zscore(np.abs(var - target), target * math.sqrt(2.0 / (num_samples - 1)))
    rel = tol * max(z_mean, z_var) / sigmas
    details = {"class": cls, "mean": mean.tolist(), "variance": var.tolist(), "target_variance": target.tolist(),
               "max_z_mean": z_mean, "max_z_variance": z_var}
    return _report("pair_difference_check", target.sum(), var.sum(), num_samples, tol, details, rel=rel)


def _zscore(err: np.ndarray, se: np.ndarray) -> float:
    z = np.where(se > 0, err / np.where(se > 0, se, 1.0), np.where(err > 0, np.inf, 0.0))
    return float(z.max(initial=0.0))


# labeled-pair estimate of the total variance ----------------------------------------------------


def labeled_pair_closed_form(spec: GaussianModelSpec, class_weights=None) -> float:
    """sum_i E_x[(1/n_i) h(x)^T Lambda^i h(x)] with x drawn from the class mixture."""
    w = np.full(spec.k, 1.0 / spec.k) if class_weights is None else np.asarray(class_weights, dtype=np.float64)
    second_moment = w @ (spec.mu**2 + spec.lambda_diag)
    return float(np.sum((spec.lambda_diag @ second_moment) / spec.n))


def labeled_pair_statistic(h, pairs1, pairs2, counts) -> np.ndarray:
    """Per-sample sum_i (h^T (h_1^i - h_2^i) / sqrt(2 n_i))^2.

    ``h`` is N x d, the pair arrays are N x k x d and ``counts`` holds n_i.
    """
    proj = np.einsum("nd,nkd->nk", h, pairs1 - pairs2)
    return np.sum(proj**2 / (2.0 * np.asarray(counts, dtype=np.float64)), axis=1)


def labeled_pair_equivalence(spec: GaussianModelSpec, num_samples: int = 1_000_000, seed: int = 0,
                       tolerance: float = 0.03, class_weights=None) -> OracleReport:
    """Average the labeled-pair statistic over x from the class mixture and fresh pairs; compare to the closed form."""
    rng = np.random.default_rng(seed)
    w = np.full(spec.k, 1.0 / spec.k) if class_weights is None else np.asarray(class_weights, dtype=np.float64)
    sd = np.sqrt(spec.lambda_diag)
    acc, acc2 = 0.0, 0.0
    for size in _chunks(num_samples):
        cls = rng.choice(spec.k, size=size, p=w)
        h = spec.mu[cls] + rng.standard_normal((size, spec.d)) * sd[cls]
        p1 = spec.mu + rng.standard_normal((size, spec.k, spec.d)) * sd
        p2 = spec.mu + rng.standard_normal((size, spec.k, spec.d)) * sd
        stat = labeled_pair_statistic(h, p1, p2, spec.n)
        acc += stat.sum()
        acc2 += (stat * stat).sum()
    mc = acc / num_samples
    se = math.sqrt(max(acc2 / num_samples - mc * mc, 0.0) / num_samples)
    analytic = labeled_pair_closed_form(spec, w)
    return _report("labeled_pair_equivalence", analytic, mc, num_samples, tolerance, {"standard_error": se})


# T1 + T2 + T3 split of the labeled-pair statistic ----------------------------------------------------------


def pair_statistic_terms(mu_x, eps_x, pairs1, pairs2, counts) -> dict:
    """Split (1/2n_i)[(mu + eps)^T (eps_1 - eps_2)]^2 into the mean-only, noise-only and cross parts.

    Inputs are per-sample node means/noise (N x d) and the class-pair residuals
    (N x k x d); values are averaged over samples and summed over classes.
    """
    n = np.asarray(counts, dtype=np.float64)
    delta = pairs1 - pairs2
    a = np.einsum("nd,nkd->nk", mu_x, delta)
    b = np.einsum("nd,nkd->nk", eps_x, delta)
    t1 = np.mean(np.sum(a * a / (2 * n), axis=1))
    t2 = np.mean(np.sum(b * b / (2 * n), axis=1))
    t3 = np.mean(np.sum(a * b / n, axis=1))
    direct = np.mean(labeled_pair_statistic(mu_x + eps_x, delta, np.zeros_like(delta), n))
    return {"T1": float(t1), "T2": float(t2), "T3": float(t3), "direct": float(direct)}


# center-replacement statistic and its L1 + L2 + L3 split -----------------------------------------------------


def center_replacement_terms(spec: GaussianModelSpec, num_samples: int, seed: int = 0,
                             identical_views: bool = False) -> dict:
    """Sample nodes seen in two views and split sum_j ((C^j)^T h - (C^j)^T h')^2.

    A node of class i has h = mu^i + eps, h' = mu^i + eps'; the centers share
    one residual across views, C^j = mu^j + eps^j / sqrt(n_j).  Per sample,
    with D = eps - eps':
      L1 = sum_j (mu^j . D)^2
      L2 = sum_j (1/n_j) (eps^j . D)^2
      L3 = sum_j (2/sqrt(n_j)) (mu^j . D)(eps^j . D)
    Returns the sample means and the per-class L2 contributions.
    """
    rng = np.random.default_rng(seed)
    sd = np.sqrt(spec.lambda_diag)
    n = spec.n
    sums = {"L1": 0.0, "L2": 0.0, "L3": 0.0, "direct": 0.0}
    l2_per_class = np.zeros(spec.k)
    for size in _chunks(num_samples):
        cls = rng.integers(spec.k, size=size)
        eps = rng.standard_normal((size, spec.d)) * sd[cls]
        eps_p = eps if identical_views else rng.standard_normal((size, spec.d)) * sd[cls]
        eps_c = rng.standard_normal((size, spec.k, spec.d)) * sd
        h, h_p = spec.mu[cls] + eps, spec.mu[cls] + eps_p
        centers = spec.mu + eps_c / np.sqrt(n)[:, None]
        direct = np.einsum("nkd,nd->nk", centers, h) - np.einsum("nkd,nd->nk", centers, h_p)
        d = eps - eps_p
        a = d @ spec.mu.T
        b = np.einsum("nkd,nd->nk", eps_c, d)
        l2 = b * b / n
        sums["L1"] += float(np.sum(a * a))
        sums["L2"] += float(np.sum(l2))
        sums["L3"] += float(np.sum(2.0 * a * b / np.sqrt(n)))
        sums["direct"] += float(np.sum(direct * direct))
        l2_per_class += l2.sum(axis=0)
    out = {key: val / num_samples for key, val in sums.items()}
    out["L2_per_class"] = (l2_per_class / num_samples).tolist()
    return out


def center_replacement_l2_expected(spec: GaussianModelSpec) -> float:
    """E[L2] = sum_j (1/n_j) E[(eps^j . D)^2] = sum_j (2/n_j) sum_d Lambda^j_d * mean_i Lambda^i_d."""
    mix = spec.lambda_diag.mean(axis=0)
    return float(np.sum(2.0 * (spec.lambda_diag @ mix) / spec.n))


def center_replacement_decomposition(spec: GaussianModelSpec, num_samples: int = 200_000, seed: int = 0,
                                     identity_tol: float = 1e-10, scaling_tol: float = 0.05) -> OracleReport:
    """Check L1 + L2 + L3 == direct statistic (same samples), then that L2 halves when every n_j doubles."""
    base = center_replacement_terms(spec, num_samples, seed)
    total = base["L1"] + base["L2"] + base["L3"]
    identity_err = abs(total - base["direct"]) / max(abs(base["direct"]), 1e-300)
    doubled = center_replacement_terms(spec.with_counts(2 * spec.counts.as_array()), num_samples, seed + 1)
    ratio = doubled["L2"] / base["L2"] if base["L2"] else float("nan")
    ratio_err = abs(ratio - 0.5) / 0.5
    details = {"terms": base, "doubled_terms": doubled, "identity_rel_error": identity_err,
               "l2_ratio": ratio, "l2_ratio_rel_error": ratio_err,
               "identity_tol": identity_tol, "scaling_tol": scaling_tol}
    # the scaling error is reported on the identity tolerance's scale
    rel = max(identity_err, ratio_err * identity_tol / scaling_tol)
    return _report("center_replacement_decomposition", base["direct"], total, num_samples, identity_tol, details,
                   rel=rel)


def run_all(seed: int = 0, num_samples: int = 1_000_000, num_specs: int = 20) -> list[OracleReport]:
    """The full battery used by the ``verify-theory`` command."""
    rng = np.random.default_rng(seed)
    reports = []
    for c in range(2, 11):
        parts = [random_partition(100, c, rng) for _ in range(1000 // 9 + 1)]
        if 100 % c == 0:
            parts.append([100 // c] * c)
        reports.append(reciprocal_sum_bound(parts))
    for i in range(num_specs):
        spec = GaussianModelSpec.random(int(rng.integers(1, 5)), int(rng.integers(1, 9)), seed=seed + 1000 + i)
        h = rng.normal(size=spec.d)
        reports.append(monte_carlo_variance(spec, h, num_samples, seed + i, tolerance=0.02))
    spec1 = GaussianModelSpec(np.zeros((2, 1)), np.ones((2, 1)), ClassCounts((1, 4)))
    a = pair_difference_check(spec1, 0, num_samples, seed)
    b = pair_difference_check(spec1, 1, num_samples, seed + 1)
    ratio = a.monte_carlo / b.monte_carlo
    reports += [a, b, _report("pair_difference_ratio", 4.0, ratio, num_samples, 0.05)]
    sym = GaussianModelSpec(np.array([[1.0, 0.0], [0.0, 1.0]]), np.ones((2, 2)), ClassCounts((5, 5)))
    reports.append(labeled_pair_equivalence(sym, num_samples, seed))
    reports.append(center_replacement_decomposition(GaussianModelSpec.random(3, 4, seed=seed),
                                                    min(num_samples, 200_000), seed))
    return reports
