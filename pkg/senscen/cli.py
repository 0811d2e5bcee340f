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

import logging
import os
from functools import wraps
from logging import captureWarnings

import numpy as np
import yaml
from click import (
    BadParameter,
    ClickException,
    Path,
    echo,
    get_current_context,
    group,
    option,
    version_option,
)

from senscen import __version__
from senscen.config import RunConfig
from senscen.error import SenscenError, ValidationGateError
from senscen.pipeline import Pipeline, marginals_within
from senscen.util import ensure_dir

logger = logging.getLogger(__name__)


def parse_ks(ctx, param, value):
    if value is None:
        return None
    try:
        ks = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise BadParameter("expected a comma-separated list of integers")
    if not ks or min(ks) < 1:
        raise BadParameter("K values must be positive")
    return ks


def dump(obj):
    echo(yaml.safe_dump(obj, sort_keys=False), nl=False)


def handle_errors(f):
    @wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ValidationGateError as e:
            echo(f"Error: {e}", err=True)
            get_current_context().exit(2)
        except SenscenError as e:
            raise ClickException(str(e))

    return wrapper


def pipeline_options(f):
    """--config plus the flags that override it"""
    decorators = [
        option(
            "--config",
            "-c",
            "config_path",
            required=True,
            type=Path(exists=True, dir_okay=False),
            help="YAML run configuration",
        ),
        option("--seed", type=int, help="Override seeds.master"),
        option("--threads", "-t", type=int, help="Worker processes (0 = all cores)"),
        option("--out-dir", "-o", type=Path(file_okay=False), help="Output directory"),
        option("--force", is_flag=True, help="Bypass the validation gate"),
        option("--no-progress", is_flag=True, help="Hide progress bars"),
    ]
    for decorator in reversed(decorators):
        f = decorator(f)
    return f


def make_pipeline(config_path, seed, threads, out_dir, force, no_progress):
    config = RunConfig.load(config_path).override(
        seed=seed, threads=threads, out_dir=out_dir, force=force or None
    )
    ensure_dir(config.output.dir)
    with open(os.path.join(config.output.dir, "config.yaml"), "w") as op:
        yaml.safe_dump(config.to_dict(), op, sort_keys=True)
    logger.info("config digest %s, output in %s", config.digest(), config.output.dir)
    return Pipeline(config, progress=not no_progress)


@group(context_settings={"help_option_names": ["-h", "--help"]})
@version_option(__version__)
@option("--verbose", "-v", is_flag=True, help="Log debug messages")
def cli(verbose):
    """representative scenarios for clinical trial sensitivity analyses"""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
    )
    captureWarnings(True)


@cli.command(short_help="Monte Carlo OCs at training scenarios")
@pipeline_options
@handle_errors
def train(**kwargs):
    """Simulate the design at Latin hypercube scenarios.

    Writes train-scenarios.csv, train-ocs.csv and train.json to the output
    directory. Reruns with the same configuration reuse these files.
    """
    ts = make_pipeline(**kwargs).train()
    dump({"scenarios": len(ts), "reps": ts.reps, "ocs": list(ts.schema.names)})


@cli.command(short_help="fit the surrogate")
@pipeline_options
@handle_errors
def fit(**kwargs):
    """Fit the configured surrogate to the training set (surrogate.json)"""
    surrogate = make_pipeline(**kwargs).fit()
    summary = {"kind": surrogate.kind}
    summary.update(getattr(surrogate, "record", {}))
    dump(summary)


@cli.command(short_help="validate the surrogate against fresh MC")
@pipeline_options
@handle_errors
def validate(**kwargs):
    """Compare surrogate predictions with independent Monte Carlo estimates.

    Writes the scatter table validation.csv and validation.json. Exits with
    status 2 when any OC's R^2 is below pipeline.validation_gate, unless
    --force is given.
    """
    report = make_pipeline(**kwargs).validate()
    dump(report.summary())


@cli.command(short_help="select K scenarios by simulated annealing")
@pipeline_options
@option("--k", "-k", "K", type=int, help="Number of scenarios (default pipeline.K)")
@handle_errors
def select(K, **kwargs):
    """Run replicate annealing chains; writes trace-<chain>.csv files and
    selection.json"""
    if K is not None and K < 1:
        raise BadParameter("K must be positive", param_hint="--k")
    selection = make_pipeline(**kwargs).select(K)
    dump(
        {
            "K": selection["K"],
            "best_loss": float(selection["best_loss"]),
            "convergence": selection["convergence"],
        }
    )


@cli.command(short_help="best loss as a function of K")
@pipeline_options
@option("--ks", callback=parse_ks, help="Comma-separated K values (default pipeline.Ks)")
@option("--threshold", type=float, help="Report the smallest K with loss <= threshold")
@handle_errors
def sweep(ks, threshold, **kwargs):
    """Anneal for every K and write the plot-ready table sweep.csv"""
    (result, k) = make_pipeline(**kwargs).sweep(ks, threshold)
    dump(
        {
            "losses": {
                int(row.K): float(row.cleaned_loss) for row in result.table.itertuples()
            },
            "min_k": k,
        }
    )


@cli.command("compare-restriction", short_help="full vs restricted candidate space")
@pipeline_options
@option("--ks", callback=parse_ks, help="Comma-separated K values (default pipeline.Ks)")
@handle_errors
def compare_restriction(ks, **kwargs):
    """Best loss per K when candidates range over the full space and over
    the space.restrict assignments; writes restriction.csv"""
    table = make_pipeline(**kwargs).compare_restriction(ks)
    dump(
        {
            int(row.K): {"full": float(row.loss_full), "restricted": float(row.loss_restricted)}
            for row in table.itertuples()
        }
    )


@cli.command("compare-marginals", short_help="per-OC vs joint selections")
@pipeline_options
@option("--ks", callback=parse_ks, help="Comma-separated K values (default pipeline.Ks)")
@handle_errors
def compare_marginals(ks, **kwargs):
    """Marginal loss of each OC under its own optimal set and under the joint
    set; writes marginals.csv"""
    table = make_pipeline(**kwargs).compare_marginals(ks)
    worst = float(np.max(table["relative_difference"]))
    dump(
        {
            "max_relative_difference": worst,
            "rows": len(table),
            "within_tolerance": marginals_within(table),
        }
    )


@cli.command("oracle-app1", short_help="closed-form optimum for rct2arm")
@pipeline_options
@option("--ks", callback=parse_ks, help="Comma-separated K values (default pipeline.Ks)")
@handle_errors
def oracle_app1(ks, **kwargs):
    """Exact optimal scenarios and losses of the two-arm normal trial
    (oracle-app1.csv)"""
    table = make_pipeline(**kwargs).oracle_app1(ks)
    losses = table.groupby("K")["exact_loss"].first()
    dump({int(k): float(v) for (k, v) in losses.items()})


@cli.command(short_help="write the sensitivity report")
@pipeline_options
@handle_errors
def report(**kwargs):
    """Re-estimate the selected scenarios by fresh Monte Carlo and write
    report.csv and report.json"""
    rep = make_pipeline(**kwargs).report()
    dump({"K": len(rep.scenario_set), "loss": float(rep.achieved_loss)})


@cli.command(short_help="train, fit, validate, select and report")
@pipeline_options
@handle_errors
def run(**kwargs):
    """Execute the whole pipeline, keeping every intermediate on disk"""
    rep = make_pipeline(**kwargs).run()
    dump({"K": len(rep.scenario_set), "loss": float(rep.achieved_loss)})
