# Copyright 2026 senscen authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Time-to-event helpers: correlated exponential pairs and the log-rank test"""

from collections import namedtuple

import numpy as np
from scipy.stats import norm

LogRank = namedtuple("LogRank", ["z", "events", "o_minus_e", "variance"])


def mixture_weight(rate1, rate2, rho):
    """Probability of the comonotone component giving Pearson correlation rho

    The comonotone pair is t2 = t1 * rate1 / rate2, a linear map, so its
    correlation is 1 whatever the rates; mixing with an independent draw of
    the same marginal scales the covariance linearly, hence pi = rho.
    """
    if np.any(np.asarray(rate1) <= 0) or np.any(np.asarray(rate2) <= 0):
        raise ValueError("exponential rates must be positive")
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0) or np.any(rho >= 1):
        raise ValueError("rho must lie in [0, 1)")
    return rho


def sample_correlated_exponentials(rate1, rate2, rho, rng, size=None):
    """Draw (t1, t2) with exponential marginals and correlation rho

    rate1, rate2, rho may be scalars or arrays broadcastable to ``size``.
    With probability rho the second time is the quantile-matched transform of
    the first, otherwise an independent exponential draw.
    """
    pi = mixture_weight(rate1, rate2, rho)
    rate1 = np.asarray(rate1, dtype=float)
    rate2 = np.asarray(rate2, dtype=float)
    t1 = rng.exponential(1.0 / rate1, size)
    comonotone = rng.random(size) < pi
    independent = rng.exponential(1.0 / rate2, size)
    t2 = np.where(comonotone, t1 * rate1 / rate2, independent)
    if size is None and np.ndim(t2) == 0:
        return float(t1), float(t2)
    return t1, t2


def logrank(times, events, group):
    """Two-group log-rank statistic (tie-aware)

    times: follow-up times; events: 1 if the event was observed, 0 if censored;
    group: 1 for the experimental arm, 0 for control.
    z = (O - E) / sqrt(V) for the experimental arm, so z < 0 favours it.
    """
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=float)
    group = np.asarray(group, dtype=float)
    n_events = int(events.sum())
    if times.size == 0 or n_events == 0:
        return LogRank(0.0, n_events, 0.0, 0.0)
    (uniq, inv) = np.unique(times, return_inverse=True)
    count = np.bincount(inv, minlength=uniq.size)
    count1 = np.bincount(inv, weights=group, minlength=uniq.size)
    d = np.bincount(inv, weights=events, minlength=uniq.size)
    d1 = np.bincount(inv, weights=events * group, minlength=uniq.size)
    # at risk just before each distinct time
    n = times.size - np.cumsum(count) + count
    n1 = group.sum() - np.cumsum(count1) + count1
    has = d > 0
    (n, n1, d, d1) = (n[has], n1[has], d[has], d1[has])
    frac = n1 / n
    expected = d * frac
    with np.errstate(divide="ignore", invalid="ignore"):
        ties = np.where(n > 1, (n - d) / (n - 1), 0.0)
    variance = float(np.sum(d * frac * (1 - frac) * ties))
    o_minus_e = float(np.sum(d1 - expected))
    z = o_minus_e / np.sqrt(variance) if variance > 0 else 0.0
    return LogRank(float(z), n_events, o_minus_e, variance)


def logrank_pvalue(result):
    """One-sided p-value for a lower hazard in the experimental arm"""
    return float(norm.cdf(result.z))


def schoenfeld_hr(result):
    """Hazard ratio estimate exp(z * sqrt(4 / events)); 1 with no events"""
    if result.events == 0:
        return 1.0
    return float(np.exp(result.z * np.sqrt(4.0 / result.events)))
