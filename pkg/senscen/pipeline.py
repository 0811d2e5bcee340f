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

"""Pipeline stages: train -> fit -> validate -> select -> report.

Every stage writes its result under the output directory, tagged with the
config digest. A later stage reuses an earlier stage's files when their
digest matches, so expensive Monte Carlo runs are not repeated.
"""

import logging
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from senscen.anneal import (
    best_trace,
    k_sweep,
    min_k_for_threshold,
    sa_replicates,
)
from senscen.designs import TwoArmRCTConfig, rct_power_inverse
from senscen.error import ConfigError, ValidationGateError
from senscen.loss import (
    CoverageLoss,
    LossSpec,
    build_cache,
    default_scales,
    loss_hat,
    min_distances,
    oc_ranges,
)
from senscen.mcengine import (
    estimate_ocs,
    load_training_set,
    save_training_set,
    training_paths,
    validation_estimates,
)
from senscen.model import ScenarioSet, SensitivityReport
from senscen.sampling import LhsPlan, lhs_array, sample_cloud
from senscen.surrogate import ExactSurrogate, fit_surrogate, load_surrogate, validate
from senscen.util import (
    compute_float_hist,
    derive_seed,
    ensure_dir,
    read_json,
    write_json,
    write_table,
)

logger = logging.getLogger(__name__)

# largest relative marginal loss increase counted as agreement
MARGINAL_TOLERANCE = 0.10


@dataclass(frozen=True, eq=False)
class ExactApp1Solution:
    """Closed-form optimal scenarios for the two-arm normal-outcome trial"""

    K: int
    targets: np.ndarray
    thetas: np.ndarray
    loss: float

    def to_frame(self):
        return pd.DataFrame(
            {
                "K": self.K,
                "k": np.arange(1, self.K + 1),
                "target_power": self.targets,
                "effect": self.thetas,
                "exact_loss": self.loss,
            }
        )


def exact_app1(K, cfg=None):
    """Power targets (2k - 1) / 2K split (0, 1) evenly; the loss is 1 / 2K"""
    if K < 1:
        raise ValueError("K must be at least 1")
    cfg = cfg if cfg is not None else TwoArmRCTConfig()
    targets = (2.0 * np.arange(1, K + 1) - 1.0) / (2.0 * K)
    thetas = np.atleast_1d(rct_power_inverse(targets, cfg))
    return ExactApp1Solution(K, targets, thetas, 1.0 / (2.0 * K))


def marginals_within(table, tolerance=MARGINAL_TOLERANCE):
    """True when every relative difference in a marginals table is below tolerance"""
    return bool(np.all(table["relative_difference"] < tolerance))


class Pipeline(object):
    def __init__(self, config, progress=True):
        self.config = config
        self.progress = progress
        self.out_dir = ensure_dir(config.output.dir)
        self.threads = config.pipeline.threads or os.cpu_count() or 1
        self.design = config.design()
        self.space = config.space_full()
        self.candidates = config.candidate_space()
        self.digest = config.digest()
        self._surrogate = None
        self._cache = None

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def meta(self, stage):
        return {"config_digest": self.digest, "seed": self.config.seed(stage)}

    def _fresh(self, json_path):
        if not os.path.exists(json_path):
            return False
        fresh = read_json(json_path).get("config_digest") == self.digest
        if not fresh:
            logger.info("ignoring %s from a different configuration", json_path)
        return fresh

    def _mc_set(self, prefix, make):
        if self._fresh(training_paths(prefix)["meta"]):
            logger.info("reusing Monte Carlo estimates in %s", prefix)
            return load_training_set(prefix)
        ts = make()
        save_training_set(ts, prefix, self.digest)
        return ts

    def train(self):
        """Monte Carlo OC estimates at Latin hypercube training scenarios"""
        pc = self.config.pipeline
        seed = self.config.seed("train")

        def make():
            thetas = lhs_array(LhsPlan(pc.train_scenarios, self.space, seed))
            return estimate_ocs(
                self.design,
                thetas,
                pc.train_reps,
                derive_seed(seed, 1),
                space=self.space,
                threads=self.threads,
                progress=self.progress,
            )

        return self._mc_set(self.path("train"), make)

    def validation_set(self):
        pc = self.config.pipeline

        def make():
            return validation_estimates(
                self.design,
                pc.validation_scenarios,
                pc.validation_reps,
                self.space,
                self.config.seed("validation"),
                threads=self.threads,
                progress=self.progress,
            )

        return self._mc_set(self.path("validation-mc"), make)

    def fit(self):
        if self._surrogate is not None:
            return self._surrogate
        path = self.path("surrogate.json")
        if self._fresh(path):
            self._surrogate = load_surrogate(path)
            return self._surrogate
        kind = self.config.pipeline.surrogate
        if kind == "exact":
            surrogate = ExactSurrogate(self.design, self.space)
        else:
            surrogate = fit_surrogate(
                self.train(),
                kind=kind,
                config=self.config.mlp_config(),
                seed=self.config.seed("fit"),
                progress=self.progress,
            )
        write_json({**surrogate.to_dict(), "config_digest": self.digest}, path)
        self._surrogate = surrogate
        return surrogate

    def validate(self):
        """Compare the surrogate with independent MC estimates; apply the gate"""
        report = validate(self.fit(), self.validation_set())
        write_table(report.to_frame(), self.path("validation.csv"), self.meta("validation"))
        gate = self.config.pipeline.validation_gate
        passed = report.passes(gate)
        write_json(
            {
                "config_digest": self.digest,
                "gate": gate,
                "passed": passed,
                "ocs": report.summary(),
            },
            self.path("validation.json"),
        )
        if not passed:
            if not self.config.output.force:
                raise ValidationGateError(list(report.r2), gate)
            logger.warning("validation below gate %s; continuing because forced", gate)
        return report

    def check_gate(self):
        path = self.path("validation.json")
        if not self._fresh(path):
            if self.config.pipeline.surrogate != "exact":
                logger.warning("surrogate has not been validated for this configuration")
            return None
        summary = read_json(path)
        if not summary["passed"] and not self.config.output.force:
            r2 = [v["r2"] if v["r2"] is not None else np.nan for v in summary["ocs"].values()]
            raise ValidationGateError(r2, summary["gate"])
        return summary

    def cache(self):
        if self._cache is None:
            cloud = sample_cloud(
                self.space, self.config.pipeline.cloud_size, self.config.seed("cloud")
            )
            self._cache = build_cache(self.fit(), cloud)
        return self._cache

    def loss_spec(self):
        cache = self.cache()
        return self.config.loss_spec(cache.schema, default_scales(cache))

    def evaluator(self, spec=None):
        return CoverageLoss(self.cache(), self.fit(), spec or self.loss_spec())

    def sa_config(self, K, space=None):
        return self.config.sa_config(K, space if space is not None else self.candidates)

    def _chains(self, evaluator, cfg):
        return sa_replicates(
            evaluator,
            cfg,
            self.config.pipeline.chains,
            threads=self.threads,
            progress=self.progress,
        )

    def select(self, K=None):
        """Anneal replicate chains and keep the best-ever set"""
        self.check_gate()
        K = K if K is not None else self.config.pipeline.K
        (traces, summary) = self._chains(self.evaluator(), self.sa_config(K))
        for trace in traces:
            write_table(
                trace.to_frame(), self.path(f"trace-{trace.chain}.csv"), self.meta("anneal")
            )
        top = best_trace(traces)
        selection = {
            "config_digest": self.digest,
            "K": K,
            "chain": top.chain,
            "best_loss": top.best_loss,
            "final_loss": top.final_loss,
            "thetas": top.best_thetas,
            "convergence": summary.to_dict(),
        }
        write_json(selection, self.path("selection.json"))
        logger.info("selected K=%d scenarios with loss %.5g", K, top.best_loss)
        return selection

    def report(self):
        path = self.path("selection.json")
        if self._fresh(path):
            selection = read_json(path)
        else:
            selection = self.select()
        surrogate = self.fit()
        cache = self.cache()
        spec = self.loss_spec()
        thetas = np.asarray(selection["thetas"], dtype=float)
        predicted = surrogate.predict_array(thetas)
        # rows ordered by the predicted OCs for a readable table
        order = np.lexsort(predicted.T[::-1])
        (thetas, predicted) = (thetas[order], predicted[order])
        (loss, witness) = loss_hat(thetas, cache, surrogate, spec)
        marginals = np.array(
            [
                loss_hat(thetas, cache, surrogate, LossSpec.indicator(len(spec), r))[0]
                for r in range(len(spec))
            ]
        )
        mc = estimate_ocs(
            self.design,
            thetas,
            self.config.pipeline.report_reps,
            self.config.seed("report"),
            space=self.space,
            threads=self.threads,
            progress=self.progress,
        )
        validation = self.check_gate()
        tolerance = 3 * mc.mc_se
        if validation is not None:
            max_abs = np.array([v["max_abs"] for v in validation["ocs"].values()])
            tolerance = np.maximum(tolerance, max_abs)
        agreement = float(np.mean(np.abs(mc.oc_means - predicted) <= tolerance))
        report = SensitivityReport(
            space=self.space,
            schema=surrogate.schema,
            scenario_set=ScenarioSet(thetas),
            oc_estimates=predicted,
            achieved_loss=loss,
            marginal_losses=marginals,
            witness=witness,
            seed=self.config.seeds.master,
            config_digest=self.digest,
            mc_estimates=mc.oc_means,
            mc_se=mc.mc_se,
            extras={
                "design": self.design.name,
                "design_config": self.design.config_dict(),
                "K": int(selection["K"]),
                "restriction": dict(self.candidates.fixed),
                "loss_spec": spec.to_dict(),
                "oc_ranges": oc_ranges(cache),
                "coverage_hist": compute_float_hist(
                    min_distances(cache.oc_matrix, predicted, spec)
                ),
                "convergence": selection["convergence"],
                "validation": validation["ocs"] if validation else None,
                "mc_agreement": agreement,
                "surrogate": surrogate.kind,
            },
        )
        write_table(report.to_frame(), self.path("report.csv"), self.meta("report"))
        write_json(report.to_dict(), self.path("report.json"))
        return report

    def sweep(self, Ks=None, threshold=None):
        self.check_gate()
        Ks = Ks or self.config.pipeline.Ks
        result = k_sweep(
            self.evaluator(),
            self.sa_config(min(Ks)),
            Ks,
            n_chains=self.config.pipeline.chains,
            threads=self.threads,
            progress=self.progress,
        )
        write_table(result.table, self.path("sweep.csv"), self.meta("anneal"))
        if threshold is not None:
            k = min_k_for_threshold(result.table, threshold)
            if k is None:
                logger.info("no K in %s reaches loss %.4g", list(Ks), threshold)
            else:
                logger.info("K=%d is the smallest K with loss <= %.4g", k, threshold)
            return result, k
        return result, None

    def compare_restriction(self, Ks=None):
        """Best loss per K over the full and the restricted candidate spaces

        Both selections are scored against the same full-space cloud.
        """
        self.check_gate()
        if not self.candidates.fixed:
            logger.warning("space.restrict assigns nothing; both columns will agree")
        Ks = Ks or self.config.pipeline.Ks
        evaluator = self.evaluator()
        tables = {}
        for (label, space) in (("full", self.space), ("restricted", self.candidates)):
            result = k_sweep(
                evaluator,
                self.sa_config(min(Ks), space),
                Ks,
                n_chains=self.config.pipeline.chains,
                threads=self.threads,
                progress=self.progress,
            )
            tables[label] = result.table.set_index("K")
        table = pd.DataFrame(
            {
                "loss_full": tables["full"]["best_loss"],
                "loss_restricted": tables["restricted"]["best_loss"],
                "cleaned_full": tables["full"]["cleaned_loss"],
                "cleaned_restricted": tables["restricted"]["cleaned_loss"],
            }
        ).reset_index()
        table["difference"] = table["loss_restricted"] - table["loss_full"]
        write_table(table, self.path("restriction.csv"), self.meta("anneal"))
        return table

    def compare_marginals(self, Ks=None):
        """L_r of the set chosen for OC r alone against L_r of the joint set"""
        self.check_gate()
        Ks = Ks or self.config.pipeline.Ks
        spec = self.loss_spec()
        schema = self.cache().schema
        joint = self.evaluator(spec)
        singles = [
            self.evaluator(LossSpec.indicator(len(spec), r)) for r in range(len(spec))
        ]
        rows = []
        for K in sorted(set(Ks)):
            cfg = self.sa_config(K)
            joint_set = best_trace(self._chains(joint, cfg)[0]).best_thetas
            for (r, single) in enumerate(singles):
                own = best_trace(self._chains(single, cfg)[0])
                loss_joint = single(joint_set)
                rel = (loss_joint - own.best_loss) / own.best_loss if own.best_loss > 0 else 0.0
                rows.append(
                    {
                        "K": K,
                        "oc": schema.names[r],
                        "loss_own": own.best_loss,
                        "loss_joint": loss_joint,
                        "relative_difference": rel,
                    }
                )
        table = pd.DataFrame(rows)
        small = marginals_within(table)
        logger.info(
            "marginal losses of the joint set are %swithin %g%% of the per-OC optima",
            "" if small else "not ",
            100 * MARGINAL_TOLERANCE,
        )
        meta = {
            **self.meta("anneal"),
            "tolerance": MARGINAL_TOLERANCE,
            "within_tolerance": small,
        }
        write_table(table, self.path("marginals.csv"), meta)
        return table

    def oracle_app1(self, Ks=None):
        if self.design.name != "rct2arm":
            raise ConfigError("the closed-form oracle only exists for design rct2arm")
        Ks = Ks or self.config.pipeline.Ks
        table = pd.concat(
            [exact_app1(K, self.design.config).to_frame() for K in sorted(set(Ks))],
            ignore_index=True,
        )
        write_table(table, self.path("oracle-app1.csv"), {"config_digest": self.digest})
        return table

    def run(self):
        """Whole pipeline in one call; intermediates stay on disk"""
        if self.config.pipeline.surrogate != "exact":
            self.train()
        self.fit()
        self.validate()
        self.select()
        return self.report()


def run_pipeline(config, progress=True):
    return Pipeline(config, progress=progress).run()
