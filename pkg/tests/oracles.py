"""Independent reference implementations used only by the tests."""
from collections import deque

from scipy.stats import poisson


def _bisect(f, lo, hi, iters=200):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def poisson_interval_by_bisection(n: int, confidence: float) -> tuple[float, float]:
    """Exact interval by inverting the Poisson CDF directly (no chi-square / gamma identity)."""
    a = (1 - confidence) / 2
    top = 10.0 * (n + 10)
    # upper: P(X <= n; mu) = a
    high = _bisect(lambda mu: poisson.cdf(n, mu) <= a, 0.0, top)
    # lower: P(X >= n; mu) = a
    low = 0.0 if n == 0 else _bisect(lambda mu: poisson.sf(n - 1, mu) >= a, 0.0, top)
    return low, high


def brute_force_components(points) -> set[frozenset]:
    """Connected components under Chebyshev-1 adjacency by BFS over all pairs."""
    pts = list(points)
    seen, comps = set(), set()
    for start in range(len(pts)):
        if start in seen:
            continue
        comp, queue = {start}, deque([start])
        seen.add(start)
        while queue:
            i = queue.popleft()
            for j in range(len(pts)):
                if j not in seen and max(abs(pts[i][0] - pts[j][0]), abs(pts[i][1] - pts[j][1])) <= 1:
                    seen.add(j)
                    comp.add(j)
                    queue.append(j)
        comps.add(frozenset(pts[i] for i in comp))
    return comps


def exponential_ks_pvalue(samples, mean: float) -> float:
    from scipy.stats import kstest

    return kstest(samples, "expon", args=(0, mean)).pvalue

