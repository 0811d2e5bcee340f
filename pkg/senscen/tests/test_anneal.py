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

from itertools import combinations

import numpy as np
from pytest import approx, mark, raises

from senscen.anneal import (
    SaConfig,
    accept_probability,
    best_trace,
    brute_force_select,
    k_sweep,
    min_k_for_threshold,
    perturb,
    perturb_array,
    refine,
    sa_replicates,
    sa_run,
    temperatures,
)
from senscen.designs import get_design
from senscen.error import BudgetError
from senscen.loss import CoverageLoss, LossSpec, build_cache
from senscen.model import ScenarioSet, make_restriction
from senscen.sampling import sample_cloud
from senscen.surrogate import ExactSurrogate

rct = get_design("rct2arm")
space = rct.parameter_space()
surrogate = ExactSurrogate(rct)
cache = build_cache(surrogate, sample_cloud(space, 2000, 0))
loss = CoverageLoss(cache, surrogate, LossSpec([1.0]))


def tuned(K, **kw):
    params = dict(K=K, space=space, steps_per_temperature=30, seed=1)
    params.update(kw)
    return SaConfig(**params)


class TestSaConfig(object):
    def test_defaults(self):
        cfg = SaConfig(K=3, space=space)
        assert (cfg.t0, cfg.reduction, cfg.t_min) == (1000.0, 0.8, 0.1)
        assert cfg.proposal_fraction == 0.05
        assert (cfg.perturb_mode, cfg.proposal_decay) == ("one", 0.95)
        assert cfg.temperature_scale == "initial_loss"
        assert cfg.refine_rounds == 2000

    def test_invalid(self):
        with raises(ValueError):
            SaConfig(K=3, space=space, reduction=1.0)
        with raises(ValueError):
            SaConfig(K=3, space=space, t0=0.1, t_min=0.1)
        with raises(ValueError):
            SaConfig(K=3, space=space, proposal_fraction=0.0)
        with raises(ValueError):
            SaConfig(K=3, space=space, perturb_mode="some")
        with raises(ValueError):
            SaConfig(K=0, space=space)
        with raises(ValueError):
            SaConfig(K=3, space=space, temperature_scale=0.0)
        with raises(ValueError):
            SaConfig(K=3, space=space, temperature_scale="final_loss")
        with raises(ValueError):
            SaConfig(K=3, space=space, refine_rounds=-1)


class TestAcceptance(object):
    def test_formula(self):
        assert accept_probability(0.1, 0.1, 1.0) == 1.0
        assert accept_probability(0.2, 0.1, 1e-9) == 1.0
        assert abs(accept_probability(0.10, 0.15, 0.05) - np.exp(-1)) < 1e-12

    def test_bad_temperature(self):
        with raises(ValueError):
            accept_probability(0.1, 0.2, 0.0)

    def test_empirical_frequency(self):
        rng = np.random.default_rng(0)
        p = accept_probability(0.10, 0.15, 0.05)
        trials = 10 ** 4
        accepted = np.mean(rng.random(trials) < p)
        assert abs(accepted - p) < 3 * np.sqrt(p * (1 - p) / trials)


class TestSchedule(object):
    def test_geometric(self):
        cfg = SaConfig(K=1, space=space, schedule="geometric")
        temps = list(temperatures(cfg))
        assert temps[0] == 1000.0
        assert all(b == a * 0.8 for (a, b) in zip(temps, temps[1:]))
        assert temps[-1] >= 0.1 > temps[-1] * 0.8

    def test_piecewise(self):
        cfg = SaConfig(K=1, space=space, steps_per_temperature=50)
        temps = list(temperatures(cfg))
        assert len(temps) % 50 == 0
        assert temps[:50] == [1000.0] * 50
        assert temps[50] == 800.0


class TestPerturb(object):
    def test_zero_sd_identity(self):
        thetas = np.array([[1.0], [20.0]])
        out = perturb_array(thetas, space, 0.0, np.random.default_rng(0))
        assert np.array_equal(out, thetas)

    def test_stays_in_space(self):
        cfg = SaConfig(K=5, space=space, proposal_fraction=0.5)
        rng = np.random.default_rng(1)
        ss = ScenarioSet(np.full((5, 1), 24.9))
        for _ in range(100):
            ss = perturb(ss, cfg, rng)
            assert space.contains(ss.thetas).all()

    def test_noise_sd(self):
        rng = np.random.default_rng(2)
        draws = np.vstack(
            [perturb_array([[10.0]], space, 1.5, rng)[0] for _ in range(10 ** 4)]
        )
        assert abs(draws.std() - 1.5) < 0.05

    def test_fixed_dims_untouched(self):
        aux_space = make_restriction(get_design("aux-interim").parameter_space(), {"e": 0.5})
        thetas = np.tile((aux_space.lower_array + aux_space.upper_array) / 2, (4, 1))
        thetas[:, 0] = 0.5
        out = perturb_array(thetas, aux_space, 0.1, np.random.default_rng(3))
        assert np.all(out[:, 0] == 0.5)
        assert not np.array_equal(out[:, 1:], thetas[:, 1:])

    def test_one_mode(self):
        thetas = np.array([[1.0], [5.0], [10.0]])
        out = perturb_array(thetas, space, 1.0, np.random.default_rng(4), mode="one")
        assert np.sum(np.any(out != thetas, axis=1)) == 1


class TestSaRun(object):
    def test_trace_properties(self):
        trace = sa_run(loss, tuned(3))
        assert trace.best_loss <= trace.initial_loss
        assert trace.best_loss <= trace.final_loss
        df = trace.to_frame()
        assert list(df.columns) == [
            "iteration",
            "temperature",
            "current_loss",
            "proposal_loss",
            "accepted",
        ]
        improving = df["proposal_loss"] <= df["current_loss"]
        assert np.all(df.loc[improving, "accepted"] == 1)
        assert loss(trace.best_thetas) == trace.best_loss

    def test_reproducible(self):
        a = sa_run(loss, tuned(2, seed=5))
        b = sa_run(loss, tuned(2, seed=5))
        assert a.current_loss == b.current_loss
        assert np.array_equal(a.best_thetas, b.best_thetas)

    def test_iteration_cap(self):
        trace = sa_run(loss, tuned(2, iterations=25))
        assert len(trace) == 25

    def test_temperature_in_loss_units(self):
        trace = sa_run(loss, tuned(2, iterations=40))
        assert trace.temperature[0] == approx(0.1 * trace.initial_loss)
        raw = sa_run(loss, tuned(2, iterations=40, temperature_scale=1.0))
        assert raw.temperature[0] == 1000.0

    def test_polishing_never_hurts(self):
        trace = sa_run(loss, tuned(4, iterations=50))
        assert trace.refine_rounds > 0
        assert trace.best_loss <= trace.annealed_loss
        assert loss(trace.best_thetas) == trace.best_loss
        bare = sa_run(loss, tuned(4, iterations=50, refine_rounds=0))
        assert bare.refine_rounds == 0
        assert bare.best_loss == bare.annealed_loss

    def test_recovers_even_split(self):
        (traces, summary) = sa_replicates(loss, tuned(3), 4, progress=False)
        top = best_trace(traces)
        # optimum over the cloud: OC range split into six equal parts
        (low, high) = (cache.oc_matrix.min(), cache.oc_matrix.max())
        optimum = (high - low) / 6
        assert top.best_loss <= 1.02 * optimum
        ocs = np.sort(surrogate.predict_array(top.best_thetas)[:, 0])
        assert np.all(np.abs(ocs - np.array([1, 3, 5]) / 6) < 0.03)
        assert summary.min_loss == top.best_loss


class TestReplicates(object):
    def test_identical_seeds(self):
        (traces, summary) = sa_replicates(loss, tuned(2), 2, seeds=[9, 9], progress=False)
        assert traces[0].current_loss == traces[1].current_loss
        assert summary.spread == 0.0
        assert not summary.flagged

    def test_best_of_chains(self):
        (traces, summary) = sa_replicates(loss, tuned(2), 3, progress=False)
        assert all(best_trace(traces).best_loss <= t.best_loss for t in traces)
        assert summary.n_chains == 3

    def test_parallel_matches_serial(self):
        cfg = tuned(2, iterations=60)
        (serial, _) = sa_replicates(loss, cfg, 2, threads=1, progress=False)
        (parallel, _) = sa_replicates(loss, cfg, 2, threads=2, progress=False)
        for (a, b) in zip(serial, parallel):
            assert a.current_loss == b.current_loss

    def test_needs_two_chains(self):
        with raises(ValueError):
            sa_replicates(loss, tuned(2), 1)


class TestBruteForce(object):
    candidates = np.linspace(-5, 25, 50)[:, None]
    spec = LossSpec([1.0])

    def test_matches_naive(self):
        (best, best_loss) = brute_force_select(self.candidates, 2, cache, surrogate, self.spec)
        centers = surrogate.predict_array(self.candidates)[:, 0]
        reference = np.inf
        count = 0
        for (i, j) in combinations(range(50), 2):
            count += 1
            d = np.minimum(
                np.abs(cache.oc_matrix[:, 0] - centers[i]),
                np.abs(cache.oc_matrix[:, 0] - centers[j]),
            )
            reference = min(reference, d.max())
        assert count == 1225
        assert abs(best_loss - reference) < 1e-12
        assert len(best) == 2

    def test_full_set(self):
        (best, best_loss) = brute_force_select(
            self.candidates[:5], 5, cache, surrogate, self.spec
        )
        assert len(best) == 5
        assert best_loss == loss(self.candidates[:5])

    def test_budget(self):
        with raises(BudgetError):
            brute_force_select(self.candidates, 3, cache, surrogate, self.spec, budget=100)

    def test_annealing_reaches_grid_optimum(self):
        (_, grid_loss) = brute_force_select(self.candidates, 2, cache, surrogate, self.spec)
        (traces, _) = sa_replicates(loss, tuned(2), 3, progress=False)
        assert best_trace(traces).best_loss <= grid_loss + 0.01


class TestSweep(object):
    def test_monotone_and_threshold(self):
        result = k_sweep(loss, tuned(1), [1, 2, 4], n_chains=2, progress=False)
        table = result.table
        assert table["K"].tolist() == [1, 2, 4]
        cleaned = table["cleaned_loss"].to_numpy()
        assert np.all(np.diff(table["best_loss"].to_numpy()) < 0)
        assert np.all(np.diff(cleaned) <= 0)
        assert np.all(cleaned <= table["best_loss"].to_numpy())
        assert set(result.best_sets) == {1, 2, 4}
        assert min_k_for_threshold(table, cleaned[-1]) <= 4
        assert min_k_for_threshold(table, -1.0) is None

    def test_threshold_query(self):
        import pandas as pd

        table = pd.DataFrame({"K": [5, 10, 20], "cleaned_loss": [0.1, 0.05, 0.025]})
        assert min_k_for_threshold(table, 0.05) == 10
        assert min_k_for_threshold(table, 0.2) == 5


class TestRefine(object):
    def test_spreads_coincident_scenarios(self):
        (low, high) = (cache.oc_matrix.min(), cache.oc_matrix.max())
        optimum = (high - low) / 10
        (thetas, value, rounds) = refine(loss, np.full((5, 1), 10.0), space, rounds=2000)
        assert rounds > 4
        assert len(np.unique(thetas[:, 0])) == 5
        assert value <= 1.05 * optimum
        assert loss(thetas) == approx(value)

    def test_restricted_candidates(self):
        restricted = make_restriction(space, {"effect": 12.0})
        (thetas, value, _) = refine(loss, [[12.0], [12.0]], restricted, rounds=10)
        assert np.all(thetas == 12.0)
        assert value == approx(loss([[12.0]]))


@mark.slow
class TestCoverageTargets(object):
    """Single-OC power: K equally spaced levels cover [0, 1] within 1/(2K)"""

    def test_sweep_within_five_percent(self):
        big = CoverageLoss(
            build_cache(surrogate, sample_cloud(space, 10 ** 4, 7)), surrogate, LossSpec([1.0])
        )
        result = k_sweep(
            big, SaConfig(K=1, space=space, seed=2), [5, 6, 7, 8, 9, 10, 20, 30], progress=False
        )
        for (K, value) in zip(result.table["K"], result.table["best_loss"]):
            assert abs(value - 1 / (2 * K)) <= 0.05 / (2 * K)

    def test_every_chain_finds_three_levels(self):
        (traces, _) = sa_replicates(loss, SaConfig(K=3, space=space, seed=4), 20, progress=False)
        for trace in traces:
            ocs = np.sort(surrogate.predict_array(trace.best_thetas)[:, 0])
            assert np.all(np.abs(ocs - np.array([1, 3, 5]) / 6) < 0.05)
