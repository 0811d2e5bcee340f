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

"""Simulated annealing over sets of K scenarios, plus exhaustive and sweep
helpers built on it."""

import logging
from dataclasses import asdict, dataclass, field
from itertools import combinations
from math import comb
from multiprocessing import Pool

import numpy as np
import pandas as pd

from senscen.error import BudgetError
from senscen.loss import (
    CoverageLoss,
    as_thetas,
    coverage_radius,
    min_distances,
    nearest_centers,
    nearest_rows,
)
from senscen.model import ParameterSpace, ScenarioSet, clamp_array
from senscen.sampling import CloudSpec, uniform_array
from senscen.util import derive_rng, derive_seed, describe, progress_bar, relative_spread

logger = logging.getLogger(__name__)

SCHEDULES = ("piecewise", "geometric")
PERTURB_MODES = ("all", "one")
SPREAD_FLAG = 0.10
# first temperature as a fraction of the initial loss
START_FRACTION = 0.1
REFINE_TOL = 1e-6
REFINE_PATIENCE = 50
BRUTE_FORCE_BUDGET = 10 ** 7


@dataclass(frozen=True)
class SaConfig:
    """Annealing settings for one K

    With temperature_scale "initial_loss" the schedule t0 .. t_min is read in
    relative units: the first temperature is a tenth of the chain's initial
    loss and later ones shrink in proportion. A number multiplies the raw
    schedule instead. refine_rounds caps the polishing stage run on the
    best-ever set when the loss is a CoverageLoss; 0 disables it.
    """

    K: int
    space: ParameterSpace
    iterations: int = None
    t0: float = 1000.0
    reduction: float = 0.8
    t_min: float = 0.1
    schedule: str = "piecewise"
    steps_per_temperature: int = 50
    proposal_fraction: float = 0.05
    perturb_mode: str = "one"
    proposal_decay: float = 0.95
    temperature_scale: object = "initial_loss"
    refine_rounds: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not 0 < self.reduction < 1:
            raise ValueError("reduction factor must lie in (0, 1)")
        if not 0 < self.t_min < self.t0:
            raise ValueError("need 0 < t_min < t0")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if self.steps_per_temperature < 1:
            raise ValueError("steps_per_temperature must be positive")
        if np.any(np.asarray(self.proposal_fraction) <= 0):
            raise ValueError("proposal fractions must be positive")
        if self.perturb_mode not in PERTURB_MODES:
            raise ValueError(f"perturb_mode must be one of {PERTURB_MODES}")
        if not 0 < self.proposal_decay <= 1:
            raise ValueError("proposal_decay must lie in (0, 1]")
        if self.iterations is not None and self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.temperature_scale != "initial_loss" and not (
            isinstance(self.temperature_scale, (int, float))
            and self.temperature_scale > 0
        ):
            raise ValueError("temperature_scale must be 'initial_loss' or a positive number")
        if self.refine_rounds < 0:
            raise ValueError("refine_rounds must be non-negative")

    def replace(self, **changes):
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return SaConfig(**d)

    def to_dict(self):
        d = asdict(self)
        d["space"] = self.space.to_dict()
        d["proposal_fraction"] = np.asarray(self.proposal_fraction).tolist()
        return d


def accept_probability(current_loss, proposal_loss, temperature):
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if proposal_loss <= current_loss:
        return 1.0
    return float(min(1.0, np.exp((current_loss - proposal_loss) / temperature)))


def temperatures(cfg):
    """Cooling schedule; each reduction multiplies the previous value by r"""
    hold = 1 if cfg.schedule == "geometric" else cfg.steps_per_temperature
    t = cfg.t0
    while t >= cfg.t_min:
        for _ in range(hold):
            yield t
        t = t * cfg.reduction


def proposal_sd(cfg):
    space = cfg.space
    sd = np.asarray(cfg.proposal_fraction, dtype=float) * space.ranges
    return np.where(space.free_mask, sd, 0.0)


def perturb_array(thetas, space, sd, rng, mode="all"):
    """Gaussian proposal on free coordinates, projected back onto ``space``"""
    thetas = np.array(thetas, dtype=float, ndmin=2)
    sd = np.broadcast_to(np.asarray(sd, dtype=float), (space.dim,))
    sd = np.where(space.free_mask, sd, 0.0)
    noise = np.zeros_like(thetas)
    if mode == "all":
        noise = rng.standard_normal(thetas.shape) * sd
    elif mode == "one":
        k = rng.integers(thetas.shape[0])
        noise[k] = rng.standard_normal(space.dim) * sd
    else:
        raise ValueError(f"unknown perturb mode {mode!r}")
    return clamp_array(thetas + noise, space)


def perturb(scenarios, cfg, rng):
    thetas = perturb_array(
        as_thetas(scenarios), cfg.space, proposal_sd(cfg), rng, cfg.perturb_mode
    )
    return ScenarioSet(thetas)


def initial_set(cfg, rng):
    space = cfg.space
    thetas = rng.uniform(space.lower_array, space.upper_array, (cfg.K, space.dim))
    return clamp_array(thetas, space)


@dataclass(eq=False)
class SaTrace:
    """Per-iteration record of one annealing chain"""

    chain: int
    seed: int
    initial_loss: float
    iterations: list = field(default_factory=list)
    temperature: list = field(default_factory=list)
    current_loss: list = field(default_factory=list)
    proposal_loss: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    final_thetas: np.ndarray = None
    final_loss: float = None
    best_thetas: np.ndarray = None
    best_loss: float = None
    annealed_loss: float = None
    refine_rounds: int = 0

    def __len__(self):
        return len(self.iterations)

    def to_frame(self):
        return pd.DataFrame(
            {
                "iteration": self.iterations,
                "temperature": self.temperature,
                "current_loss": self.current_loss,
                "proposal_loss": self.proposal_loss,
                "accepted": np.asarray(self.accepted, dtype=int),
            }
        )


def temperature_unit(cfg, initial_loss):
    """Multiplier turning schedule values into loss units"""
    if cfg.temperature_scale != "initial_loss":
        return float(cfg.temperature_scale)
    if initial_loss <= 0:
        return 1.0
    return START_FRACTION * initial_loss / cfg.t0


def candidate_pool(loss, space, seed):
    """Candidate scenarios with their OCs, for snapping refined centers

    The cached cloud is reused when every point is a valid candidate;
    restricted spaces get a fresh uniform pool of the same size.
    """
    cache = loss.cache
    if np.all(space.contains(cache.cloud)):
        return cache.cloud, cache.oc_matrix
    thetas = clamp_array(uniform_array(CloudSpec(space, seed, len(cache))), space)
    return thetas, loss.surrogate.predict_array(thetas)


def refine(loss, thetas, space, seed=0, rounds=1000):
    """Minimax Lloyd polishing of a scenario set; (thetas, loss, rounds used)

    Each round assigns cloud points to their nearest scenario in OC space,
    aims every scenario at the midpoint of its cell's OC bounding box (an
    empty cell aims at the worst-covered point) and snaps to the candidate
    with the closest OCs. Snapping makes single rounds noisy, so the best set
    seen is returned; the loop stops at a fixed point or once the best loss
    has not improved for a while.
    """
    (cache, spec) = (loss.cache, loss.spec)
    (pool, pool_ocs) = candidate_pool(loss, space, seed)
    thetas = np.array(as_thetas(thetas), dtype=float)
    centers = loss.surrogate.predict_array(thetas)
    (value, witness) = coverage_radius(centers, cache, spec)
    (best, best_value) = (thetas, value)
    patience = max(REFINE_PATIENCE, 10 * thetas.shape[0])
    (stall, used) = (0, 0)
    for used in range(1, rounds + 1):
        labels = nearest_centers(cache.oc_matrix, centers, spec)
        targets = centers.copy()
        relocated = False
        for k in range(centers.shape[0]):
            rows = cache.oc_matrix[labels == k]
            if rows.shape[0]:
                targets[k] = 0.5 * (rows.min(axis=0) + rows.max(axis=0))
            elif not relocated:
                targets[k] = cache.oc_matrix[witness]
                relocated = True
        idx = nearest_rows(pool_ocs, targets, spec)
        if np.array_equal(pool_ocs[idx], centers):
            break
        (thetas, centers) = (pool[idx], pool_ocs[idx])
        (value, witness) = coverage_radius(centers, cache, spec)
        if value < best_value * (1 - REFINE_TOL):
            (best, best_value, stall) = (thetas, value, 0)
        else:
            stall += 1
            if stall >= patience:
                break
    return best, best_value, used


def sa_run(loss, cfg, chain=0, seed=None, progress=False):
    """One annealing chain; returns the trace with final and best-ever sets

    ``loss`` maps a K x d array of scenarios to a float. The trace records
    temperatures in loss units.
    """
    seed = derive_seed(cfg.seed, chain) if seed is None else seed
    rng = derive_rng(seed)
    current = initial_set(cfg, rng)
    current_loss = float(loss(current))
    trace = SaTrace(chain=chain, seed=seed, initial_loss=current_loss)
    (best, best_loss) = (current, current_loss)
    unit = temperature_unit(cfg, current_loss)
    sd = proposal_sd(cfg)
    last_t = None
    schedule = progress_bar(
        temperatures(cfg), enabled=progress, desc=f"SA chain {chain}", unit="it"
    )
    for (i, t) in enumerate(schedule):
        if cfg.iterations is not None and i >= cfg.iterations:
            break
        if last_t is not None and t != last_t:
            sd = sd * cfg.proposal_decay
        last_t = t
        t = t * unit
        proposal = perturb_array(current, cfg.space, sd, rng, cfg.perturb_mode)
        proposal_loss = float(loss(proposal))
        if proposal_loss <= current_loss:
            accepted = True
        else:
            u = rng.random()
            accepted = bool(u < accept_probability(current_loss, proposal_loss, t))
        trace.iterations.append(i)
        trace.temperature.append(t)
        trace.current_loss.append(current_loss)
        trace.proposal_loss.append(proposal_loss)
        trace.accepted.append(accepted)
        if accepted:
            (current, current_loss) = (proposal, proposal_loss)
            if current_loss < best_loss:
                (best, best_loss) = (current, current_loss)
    trace.final_thetas = current
    trace.final_loss = current_loss
    trace.annealed_loss = best_loss
    if cfg.refine_rounds and isinstance(loss, CoverageLoss):
        (polished, _, trace.refine_rounds) = refine(
            loss, best, cfg.space, derive_seed(seed, 1), cfg.refine_rounds
        )
        polished_loss = float(loss(polished))
        if polished_loss <= best_loss:
            (best, best_loss) = (polished, polished_loss)
    trace.best_thetas = best
    trace.best_loss = best_loss
    logger.debug(
        "chain %d: %d iterations, final %.5g, annealed %.5g, best %.5g after %d refine rounds",
        chain,
        len(trace),
        current_loss,
        trace.annealed_loss,
        best_loss,
        trace.refine_rounds,
    )
    return trace


@dataclass(frozen=True)
class ConvergenceSummary:
    n_chains: int
    min_loss: float
    median_loss: float
    max_loss: float
    spread: float
    flagged: bool
    best_chain: int

    def to_dict(self):
        return asdict(self)


def summarize_chains(traces):
    losses = np.array([t.best_loss for t in traces])
    stats = describe(losses)
    spread = relative_spread(losses)
    return ConvergenceSummary(
        n_chains=len(traces),
        min_loss=stats["min"],
        median_loss=stats["median"],
        max_loss=stats["max"],
        spread=spread,
        flagged=bool(spread > SPREAD_FLAG),
        best_chain=int(np.argmin(losses)),
    )


_worker_loss = None


def _init_worker(loss):
    global _worker_loss
    _worker_loss = loss


def _run_chain(args):
    (cfg, chain, seed) = args
    return sa_run(_worker_loss, cfg, chain=chain, seed=seed)


def sa_replicates(loss, cfg, n_chains, seeds=None, threads=1, progress=True):
    """Independent chains from per-chain seeds; returns (traces, summary)"""
    if n_chains < 2:
        raise ValueError("convergence checks need at least 2 chains")
    if seeds is None:
        seeds = [derive_seed(cfg.seed, c) for c in range(n_chains)]
    if len(seeds) != n_chains:
        raise ValueError("need one seed per chain")
    jobs = [(cfg, c, int(s)) for (c, s) in enumerate(seeds)]
    if threads > 1:
        with Pool(threads, initializer=_init_worker, initargs=(loss,)) as pool:
            traces = list(
                progress_bar(
                    pool.imap(_run_chain, jobs),
                    enabled=progress,
                    total=n_chains,
                    desc=f"K={cfg.K}",
                    unit="chain",
                )
            )
    else:
        traces = [
            sa_run(loss, cfg, chain=c, seed=s)
            for (cfg, c, s) in progress_bar(
                jobs, enabled=progress, desc=f"K={cfg.K}", unit="chain"
            )
        ]
    summary = summarize_chains(traces)
    if summary.flagged:
        logger.warning(
            "K=%d: best losses across %d chains spread by %.1f%%; "
            "consider more iterations",
            cfg.K,
            n_chains,
            100 * summary.spread,
        )
    return traces, summary


def best_trace(traces):
    return min(traces, key=lambda t: t.best_loss)


def brute_force_select(candidates, K, cache, surrogate, spec, budget=BRUTE_FORCE_BUDGET):
    """Exact best K-subset of a finite candidate list; (ScenarioSet, loss)"""
    thetas = as_thetas(candidates)
    n = thetas.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K must lie in [1, {n}]")
    total = comb(n, K)
    if total > budget:
        raise BudgetError(f"{total} subsets of size {K} exceed the budget of {budget}")
    centers = surrogate.predict_array(thetas)
    # distance of every cloud point to every candidate, one column at a time
    dist = np.column_stack(
        [min_distances(cache.oc_matrix, centers[[c]], spec) for c in range(n)]
    )
    (best, best_loss) = (None, np.inf)
    for combo in combinations(range(n), K):
        value = float(dist[:, combo].min(axis=1).max())
        if value < best_loss:
            (best, best_loss) = (combo, value)
    logger.info("enumerated %d subsets; best loss %.5g", total, best_loss)
    return ScenarioSet(thetas[list(best)]), best_loss


@dataclass(eq=False)
class SweepResult:
    table: pd.DataFrame
    best_sets: dict
    summaries: dict


def k_sweep(loss, cfg, Ks, n_chains=2, threads=1, progress=True):
    """Best loss for each K with a monotone (non-increasing) cleaned column"""
    Ks = sorted(set(int(k) for k in Ks))
    if not Ks:
        raise ValueError("need at least one K")
    rows = []
    (best_sets, summaries) = ({}, {})
    for K in Ks:
        (traces, summary) = sa_replicates(
            loss, cfg.replace(K=K), n_chains, threads=threads, progress=progress
        )
        top = best_trace(traces)
        best_sets[K] = top.best_thetas
        summaries[K] = summary
        rows.append(
            {
                "K": K,
                "best_loss": top.best_loss,
                "median_loss": summary.median_loss,
                "spread": summary.spread,
                "flagged": summary.flagged,
            }
        )
        logger.info("K=%d best loss %.5g", K, top.best_loss)
    table = pd.DataFrame(rows)
    # a set of K can always be padded to K+1 without raising its loss
    table["cleaned_loss"] = np.minimum.accumulate(table["best_loss"].to_numpy())
    return SweepResult(table, best_sets, summaries)


def min_k_for_threshold(table, tau):
    """Smallest K whose cleaned loss is at most tau, or None"""
    hits = table.loc[table["cleaned_loss"] <= tau + 1e-12, "K"]
    return int(hits.min()) if len(hits) else None
