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

"""Simulatable trial designs.

Each design knows its default parameter space, its operating characteristics
(OCs) and how to simulate one trial realisation phi(Z, theta) given a seeded
random generator. Designs register under a stable name so configuration files
can refer to them.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.stats import binom, norm

from senscen.error import ConfigError, FeasibilityError
from senscen.model import OCKind, OCSchema, ParameterSpace, Scenario
from senscen.survival import (
    logrank,
    logrank_pvalue,
    sample_correlated_exponentials,
    schoenfeld_hr,
)

logger = logging.getLogger(__name__)

WEEKS_PER_MONTH = 52.0 / 12.0

DESIGNS = {}


def register(name):
    def decorator(cls):
        cls.name = name
        DESIGNS[name] = cls
        return cls

    return decorator


def get_design(name, params=None):
    """Instantiate a registered design from a dict of config fields"""
    if name not in DESIGNS:
        raise ConfigError(f"unknown design {name!r}; choose from {sorted(DESIGNS)}")
    cls = DESIGNS[name]
    params = dict(params or {})
    known = {f.name for f in fields(cls.config_class)}
    unknown = set(params) - known
    if unknown:
        raise ConfigError(f"unknown keys for design {name!r}: {sorted(unknown)}")
    return cls(cls.config_class(**params))


def _theta(theta):
    if isinstance(theta, Scenario):
        return theta.theta
    return np.asarray(theta, dtype=float)


def _require(condition, message):
    if not condition:
        raise ConfigError(message)


class TrialDesign(ABC):
    """A trial design that can be simulated under a scenario theta

    simulate_once returns one realisation of phi(Z, theta) as a float vector
    of length R: probability OCs are 0/1 indicators, counts and durations
    are non-negative.
    """

    name = None
    config_class = None

    def __init__(self, config=None):
        self.config = config if config is not None else self.config_class()

    @abstractmethod
    def parameter_space(self):
        pass

    @abstractmethod
    def oc_schema(self):
        pass

    @abstractmethod
    def simulate_once(self, theta, rng):
        pass

    def simulate_many(self, theta, reps, rng):
        """reps x R array of independent realisations"""
        theta = _theta(theta)
        return np.vstack([self.simulate_once(theta, rng) for _ in range(reps)])

    @property
    def has_exact(self):
        return False

    def exact_ocs(self, thetas):
        raise NotImplementedError(f"design {self.name!r} has no closed-form OCs")

    def config_dict(self):
        return asdict(self.config)


# two-arm randomized trial with a normal outcome


@dataclass(frozen=True)
class TwoArmRCTConfig:
    n: int = 30
    sigma: float = 30.0
    alpha: float = 0.05

    def __post_init__(self):
        _require(self.n >= 2 and self.n % 2 == 0, "n must be an even integer >= 2")
        _require(self.sigma > 0, "sigma must be positive")
        _require(0 < self.alpha < 0.5, "alpha must lie in (0, 0.5)")


def rct_power_exact(theta_effect, cfg):
    """Power Phi(theta sqrt(n) / sigma - z_{1-alpha}) of the one-sided z-test"""
    theta_effect = np.asarray(theta_effect, dtype=float)
    shift = theta_effect * np.sqrt(cfg.n) / cfg.sigma
    power = norm.cdf(shift - norm.ppf(1 - cfg.alpha))
    return float(power) if power.ndim == 0 else power


def rct_power_inverse(target_power, cfg):
    """Treatment effect attaining ``target_power``"""
    target = np.asarray(target_power, dtype=float)
    if np.any(target <= 0) or np.any(target >= 1):
        raise ValueError("target power must lie strictly between 0 and 1")
    effect = cfg.sigma * (norm.ppf(target) + norm.ppf(1 - cfg.alpha)) / np.sqrt(cfg.n)
    return float(effect) if effect.ndim == 0 else effect


def rct_simulate_once(theta, cfg, rng):
    effect = _theta(theta)[0]
    z = rng.standard_normal() + effect * np.sqrt(cfg.n) / cfg.sigma
    return np.array([float(z > norm.ppf(1 - cfg.alpha))])


@register("rct2arm")
class TwoArmRCT(TrialDesign):
    config_class = TwoArmRCTConfig

    def parameter_space(self):
        return ParameterSpace(["effect"], [-5.0], [25.0])

    def oc_schema(self):
        return OCSchema(["power"], [OCKind.PROBABILITY])

    def simulate_once(self, theta, rng):
        return rct_simulate_once(theta, self.config, rng)

    def simulate_many(self, theta, reps, rng):
        cfg = self.config
        effect = _theta(theta)[0]
        z = rng.standard_normal(reps) + effect * np.sqrt(cfg.n) / cfg.sigma
        return (z > norm.ppf(1 - cfg.alpha)).astype(float)[:, None]

    @property
    def has_exact(self):
        return True

    def exact_ocs(self, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        return np.asarray(rct_power_exact(thetas[:, 0], self.config)).reshape(-1, 1)


# two-stage design with an auxiliary interim outcome


def bivariate_bernoulli_cells(p, q, rho):
    """Cell probabilities (P11, P10, P01, P00) of (Y, S) with given margins

    Raises FeasibilityError when P11 violates the Frechet bounds.
    """
    if not (0 <= p <= 1 and 0 <= q <= 1):
        raise ValueError("margins must be probabilities")
    p11 = p * q + rho * np.sqrt(p * (1 - p) * q * (1 - q))
    lower = max(0.0, p + q - 1)
    upper = min(p, q)
    tol = 1e-12
    if p11 < lower - tol:
        raise FeasibilityError(
            f"P(Y=1,S=1)={p11:.6g} below Frechet lower bound max(0, p+q-1)={lower:.6g}"
        )
    if p11 > upper + tol:
        raise FeasibilityError(
            f"P(Y=1,S=1)={p11:.6g} above Frechet upper bound min(p, q)={upper:.6g}"
        )
    p11 = min(max(p11, lower), upper)
    cells = np.array([p11, p - p11, q - p11, 1 - p - q + p11])
    return np.clip(cells, 0.0, 1.0)


def sample_bivariate_bernoulli(p, q, rho, rng, size=None):
    """Draw (y, s) with P(y=1)=p, P(s=1)=q and Pearson correlation rho"""
    cells = bivariate_bernoulli_cells(p, q, rho)
    idx = rng.choice(4, size=size, p=cells / cells.sum())
    # cell order: (1,1), (1,0), (0,1), (0,0)
    y = (idx <= 1).astype(int)
    s = ((idx == 0) | (idx == 2)).astype(int)
    if size is None:
        return int(y), int(s)
    return y, s


@dataclass(frozen=True)
class AuxInterimConfig:
    N0: int = 100
    N1: int = 100
    n0: int = 50
    n1: int = 50
    alpha: float = 0.05
    cp_cutoff: float = 0.5
    interim_lag: float = 0.0

    def __post_init__(self):
        _require(0 < self.n0 < self.N0, "need 0 < n0 < N0")
        _require(0 < self.n1 < self.N1, "need 0 < n1 < N1")
        _require(0 < self.alpha < 0.5, "alpha must lie in (0, 0.5)")
        _require(0 < self.cp_cutoff < 1, "cp_cutoff must lie in (0, 1)")
        _require(self.interim_lag >= 0, "interim_lag must be non-negative")


def information_fraction(cfg):
    return (1.0 / cfg.N1 + 1.0 / cfg.N0) / (1.0 / cfg.n1 + 1.0 / cfg.n0)


def conditional_power(z_s, t_s, alpha):
    """CP(t) = 1 - Phi((z_{1-alpha} - Z_S sqrt(t)) / sqrt(1 - t))"""
    z_s = np.asarray(z_s, dtype=float)
    arg = (norm.ppf(1 - alpha) - z_s * np.sqrt(t_s)) / np.sqrt(1 - t_s)
    cp = 1 - norm.cdf(arg)
    return float(cp) if cp.ndim == 0 else cp


def pooled_z(x1, n1, x0, n0):
    """Two-proportion z statistic with pooled variance; 0 when degenerate"""
    x1 = np.asarray(x1, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    pooled = (x1 + x0) / (n1 + n0)
    se = np.sqrt(pooled * (1 - pooled) * (1.0 / n1 + 1.0 / n0))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (x1 / n1 - x0 / n0) / se, 0.0)
    return float(z) if z.ndim == 0 else z


def _overrun(enrollment_rate, cfg):
    planned = cfg.N0 + cfg.N1 - cfg.n0 - cfg.n1
    return min(planned, int(round(enrollment_rate * cfg.interim_lag)))


def aux_interim_simulate_once(theta, cfg, rng):
    (e, p0, p1, q0, q1, rho0, rho1) = _theta(theta)
    (y0, s0) = sample_bivariate_bernoulli(p0, q0, rho0, rng, size=cfg.n0)
    (y1, s1) = sample_bivariate_bernoulli(p1, q1, rho1, rng, size=cfg.n1)
    t_s = information_fraction(cfg)
    z_s = pooled_z(s1.sum(), cfg.n1, s0.sum(), cfg.n0)
    if conditional_power(z_s, t_s, cfg.alpha) < cfg.cp_cutoff:
        return np.array([0.0, float(cfg.n0 + cfg.n1 + _overrun(e, cfg))])
    x0 = y0.sum() + rng.binomial(cfg.N0 - cfg.n0, p0)
    x1 = y1.sum() + rng.binomial(cfg.N1 - cfg.n1, p1)
    z_y = pooled_z(x1, cfg.N1, x0, cfg.N0)
    return np.array([float(z_y > norm.ppf(1 - cfg.alpha)), float(cfg.N0 + cfg.N1)])


@register("aux-interim")
class AuxInterim(TrialDesign):
    """Two-arm trial with a conditional-power futility look on an auxiliary
    binary outcome S and a final z-test on the primary binary outcome Y"""

    config_class = AuxInterimConfig

    def parameter_space(self):
        return ParameterSpace(
            ["e", "p0", "p1", "q0", "q1", "rho0", "rho1"],
            [0.2, 0.2, 0.2, 0.2, 0.2, 0.0, 0.0],
            [1.0, 0.4, 0.4, 0.4, 0.4, 0.6, 0.6],
        )

    def oc_schema(self):
        return OCSchema(["power", "sample_size"], [OCKind.PROBABILITY, OCKind.COUNT])

    def simulate_once(self, theta, rng):
        return aux_interim_simulate_once(theta, self.config, rng)

    def simulate_many(self, theta, reps, rng):
        # same law as simulate_once, drawn through per-arm cell counts
        cfg = self.config
        (e, p0, p1, q0, q1, rho0, rho1) = _theta(theta)
        c0 = rng.multinomial(cfg.n0, bivariate_bernoulli_cells(p0, q0, rho0), size=reps)
        c1 = rng.multinomial(cfg.n1, bivariate_bernoulli_cells(p1, q1, rho1), size=reps)
        z_s = pooled_z(c1[:, 0] + c1[:, 2], cfg.n1, c0[:, 0] + c0[:, 2], cfg.n0)
        cont = conditional_power(z_s, information_fraction(cfg), cfg.alpha) >= cfg.cp_cutoff
        x0 = c0[:, 0] + c0[:, 1] + rng.binomial(cfg.N0 - cfg.n0, p0, size=reps)
        x1 = c1[:, 0] + c1[:, 1] + rng.binomial(cfg.N1 - cfg.n1, p1, size=reps)
        z_y = pooled_z(x1, cfg.N1, x0, cfg.N0)
        reject = cont & (z_y > norm.ppf(1 - cfg.alpha))
        stopped_n = cfg.n0 + cfg.n1 + _overrun(e, cfg)
        size = np.where(cont, cfg.N0 + cfg.N1, stopped_n)
        return np.column_stack([reject.astype(float), size.astype(float)])


# biomarker-driven adaptive enrichment


@dataclass(frozen=True)
class EnrichmentConfig:
    stage1_n: int = 120
    stage2_n: int = 70
    os_events_final: int = 110
    hr_plus_threshold: float = 0.6
    hr_overall_threshold: float = 0.8
    omega1: float = float(np.sqrt(0.5))
    omega2: float = float(np.sqrt(0.5))
    control_median_pfs_months: float = 4.0
    control_median_os_months: float = 12.0
    z_crit: float = 1.96
    interim_delay_months: float = 0.0

    def __post_init__(self):
        _require(self.stage1_n > 0 and self.stage2_n > 0, "stage sizes must be positive")
        _require(self.os_events_final > 0, "os_events_final must be positive")
        for thr in (self.hr_plus_threshold, self.hr_overall_threshold):
            _require(0 < thr < 1.5, "HR thresholds must lie in (0, 1.5)")
        _require(self.omega1 > 0 and self.omega2 > 0, "weights must be positive")
        _require(
            abs(self.omega1 ** 2 + self.omega2 ** 2 - 1) < 1e-9,
            "combination weights need omega1^2 + omega2^2 = 1",
        )
        _require(
            self.control_median_pfs_months > 0 and self.control_median_os_months > 0,
            "control medians must be positive",
        )
        _require(self.interim_delay_months >= 0, "interim delay must be non-negative")


def classify_branch(hr_plus, hr_overall, cfg=None):
    """Interim decision from the PFS hazard-ratio estimates

    A: positive subgroup only, B: overall only, C: futility stop, D: both
    """
    cfg = cfg if cfg is not None else EnrichmentConfig()
    plus = hr_plus < cfg.hr_plus_threshold
    overall = hr_overall < cfg.hr_overall_threshold
    if plus and not overall:
        return "A"
    if overall and not plus:
        return "B"
    if not plus and not overall:
        return "C"
    return "D"


def _enroll(n, start, monthly_rate, prevalence, positives_only, theta, cfg, rng):
    (_, _, pfs_hr_pos, pfs_hr_neg, os_hr_pos, os_hr_neg, rho_pos, rho_neg) = theta
    arrival = start + np.cumsum(rng.exponential(1.0 / monthly_rate, n))
    if positives_only:
        positive = np.ones(n, dtype=bool)
    else:
        positive = rng.random(n) < prevalence
    arm = rng.integers(0, 2, n)
    pfs_rate = np.log(2) / cfg.control_median_pfs_months
    os_rate = np.log(2) / cfg.control_median_os_months
    pfs_hr = np.where(positive, pfs_hr_pos, pfs_hr_neg)
    os_hr = np.where(positive, os_hr_pos, os_hr_neg)
    rho = np.where(positive, rho_pos, rho_neg)
    (pfs, os_) = sample_correlated_exponentials(
        pfs_rate * np.where(arm == 1, pfs_hr, 1.0),
        os_rate * np.where(arm == 1, os_hr, 1.0),
        rho,
        rng,
        size=n,
    )
    return {"arrival": arrival, "positive": positive, "arm": arm, "pfs": pfs, "os": os_}


def _logrank_at(cohort, endpoint, at_time, mask):
    followup = at_time - cohort["arrival"][mask]
    seen = followup > 0
    duration = cohort[endpoint][mask][seen]
    followup = followup[seen]
    observed = (duration <= followup).astype(float)
    return logrank(np.minimum(duration, followup), observed, cohort["arm"][mask][seen])


def _combined_z(stage1, stage2, final_time, population):
    z = []
    for cohort in (stage1, stage2):
        if population == "positive":
            mask = cohort["positive"]
        else:
            mask = np.ones(cohort["arm"].size, dtype=bool)
        p = logrank_pvalue(_logrank_at(cohort, "os", final_time, mask))
        # Phi^{-1}(1 - p)
        z.append(float(norm.isf(p)))
    return z


def enrichment_simulate_once(theta, cfg, rng):
    theta = _theta(theta)
    (accrual, prevalence) = theta[:2]
    monthly = accrual * WEEKS_PER_MONTH
    stage1 = _enroll(cfg.stage1_n, 0.0, monthly, prevalence, False, theta, cfg, rng)
    interim = stage1["arrival"][-1] + cfg.interim_delay_months
    everyone = np.ones(cfg.stage1_n, dtype=bool)
    hr_overall = schoenfeld_hr(_logrank_at(stage1, "pfs", interim, everyone))
    hr_plus = schoenfeld_hr(_logrank_at(stage1, "pfs", interim, stage1["positive"]))
    branch = classify_branch(hr_plus, hr_overall, cfg)
    logger.debug("interim HR+=%.3f HR=%.3f branch %s", hr_plus, hr_overall, branch)
    if branch == "C":
        return np.array([0.0, 0.0, 1.0])

    if branch == "A":
        stage2 = _enroll(
            cfg.stage2_n, interim, monthly * prevalence, 1.0, True, theta, cfg, rng
        )
    else:
        stage2 = _enroll(cfg.stage2_n, interim, monthly, prevalence, False, theta, cfg, rng)
    death = np.sort(
        np.concatenate(
            [stage1["arrival"] + stage1["os"], stage2["arrival"] + stage2["os"]]
        )
    )
    final_time = death[min(cfg.os_events_final, death.size) - 1]

    alpha = 1 - norm.cdf(cfg.z_crit)
    if branch == "D":
        crit = norm.ppf(1 - alpha / 2)
        populations = ["positive", "overall"]
    else:
        crit = cfg.z_crit
        populations = ["positive"] if branch == "A" else ["overall"]
    rejected = False
    for population in populations:
        (z1, z2) = _combined_z(stage1, stage2, final_time, population)
        if cfg.omega1 * z1 + cfg.omega2 * z2 > crit:
            rejected = True
    return np.array(
        [float(branch == "A"), float(branch in ("B", "D")), float(not rejected)]
    )


@register("enrichment")
class Enrichment(TrialDesign):
    """Two-stage adaptive enrichment trial with PFS interim and OS final"""

    config_class = EnrichmentConfig

    def parameter_space(self):
        return ParameterSpace(
            [
                "accrual",
                "prevalence",
                "pfs_hr_pos",
                "pfs_hr_neg",
                "os_hr_pos",
                "os_hr_neg",
                "rho_pos",
                "rho_neg",
            ],
            [0.5, 0.15, 0.5, 0.6, 0.7, 0.8, 0.3, 0.2],
            [1.0, 0.25, 1.2, 1.2, 1.2, 1.2, 0.6, 0.7],
        )

    def oc_schema(self):
        return OCSchema(
            ["enrich_positive", "enroll_all", "no_rejection"],
            [OCKind.PROBABILITY] * 3,
        )

    def simulate_once(self, theta, rng):
        return enrichment_simulate_once(theta, self.config, rng)


# single-arm trial against a historical control rate


@dataclass(frozen=True)
class SingleArmConfig:
    stage1_n: int = 20
    stage2_n: int = 20
    futility_responses: int = 4
    historical_rate: float = 0.3
    alpha: float = 0.05

    def __post_init__(self):
        _require(self.stage1_n > 0 and self.stage2_n > 0, "stage sizes must be positive")
        _require(
            0 <= self.futility_responses < self.stage1_n,
            "futility_responses must lie in [0, stage1_n)",
        )
        _require(0 < self.historical_rate < 1, "historical_rate must lie in (0, 1)")
        _require(0 < self.alpha < 0.5, "alpha must lie in (0, 0.5)")


def single_arm_critical_value(cfg):
    """Smallest response count rejecting H0: rate <= historical_rate"""
    total = cfg.stage1_n + cfg.stage2_n
    x = np.arange(total + 2)
    pvalues = binom.sf(x - 1, total, cfg.historical_rate)
    return int(x[np.argmax(pvalues <= cfg.alpha)])


@register("single-arm")
class SingleArm(TrialDesign):
    """Single-arm two-stage trial; the final test compares the experimental
    response rate with a historical estimate of the control rate, so the
    true control rate only enters through the definition of power

    Both rates range over [0.05, 0.95] rather than the whole unit square. At
    a rate of 0 or 1 every simulated trial ends the same way, so the box
    stops short of the corners where the OCs are flat and uninformative.
    """

    config_class = SingleArmConfig

    def parameter_space(self):
        return ParameterSpace(["control_rate", "experimental_rate"], [0.05, 0.05], [0.95, 0.95])

    def oc_schema(self):
        return OCSchema(["power", "sample_size"], [OCKind.PROBABILITY, OCKind.COUNT])

    def simulate_once(self, theta, rng):
        return self.simulate_many(theta, 1, rng)[0]

    def simulate_many(self, theta, reps, rng):
        cfg = self.config
        (control, experimental) = _theta(theta)
        x1 = rng.binomial(cfg.stage1_n, experimental, size=reps)
        x2 = rng.binomial(cfg.stage2_n, experimental, size=reps)
        cont = x1 > cfg.futility_responses
        reject = cont & (x1 + x2 >= single_arm_critical_value(cfg))
        power = reject & (experimental > control)
        size = np.where(cont, cfg.stage1_n + cfg.stage2_n, cfg.stage1_n)
        return np.column_stack([power.astype(float), size.astype(float)])

    @property
    def has_exact(self):
        return True

    def exact_ocs(self, thetas):
        cfg = self.config
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        crit = single_arm_critical_value(cfg)
        x1 = np.arange(cfg.futility_responses + 1, cfg.stage1_n + 1)
        out = np.empty((thetas.shape[0], 2))
        for (i, (control, experimental)) in enumerate(thetas):
            pmf = binom.pmf(x1, cfg.stage1_n, experimental)
            tail = binom.sf(crit - x1 - 1, cfg.stage2_n, experimental)
            reject = float(np.sum(pmf * tail))
            out[i, 0] = reject if experimental > control else 0.0
            out[i, 1] = cfg.stage1_n + cfg.stage2_n * float(pmf.sum())
        return out
