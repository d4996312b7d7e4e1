"""
Command-line front end of the compounding-error bench.

Subcommands build instances and demonstrations (gen), fit learners (train),
estimate risks (eval), run preset sweeps (sweep) and run the invariant
suite (verify). Every JSON file written embeds the resolved configuration.
"""

import functools
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import click

# Add project root to path for imports
PROJECT_ROOT = Path(__file__).parent.parent.absolute()
sys.path.append(str(PROJECT_ROOT))

from core.bench.builders import build_dataset, build_instance, eval_rng, train_learner
from core.bench.config import LEARNER_KINDS, BenchConfig, load_config
from core.bench.io import (load_dataset, load_instance, load_policy, save_dataset, save_instance, save_policy,
                           write_csv, write_json)
from core.bench.presets import get_preset, preset_names
from core.bench.sweep import run_sweep
from core.bench.verify import run_verification
from core.simkit.risks import evaluate_policy
from core.utils.errors import BenchError, ConfigError
from core.utils.logger import Logger

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_FILE = 4
EXIT_VERIFY = 5

logger = Logger("BenchCLI").logger


def exit_codes(func: Callable) -> Callable:
    """Map failures onto the documented exit codes."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except click.exceptions.Exit:
            raise
        except FileNotFoundError as e:
            click.echo(f"File error: {str(e)}", err=True)
            sys.exit(EXIT_FILE)
        except ConfigError as e:
            click.echo(f"Configuration error: {str(e)}", err=True)
            sys.exit(EXIT_CONFIG)
        except OSError as e:
            click.echo(f"File error: {str(e)}", err=True)
            sys.exit(EXIT_FILE)
        except (BenchError, ValueError, RuntimeError) as e:
            logger.error(f"Run failed: {str(e)}")
            click.echo(f"Runtime error: {str(e)}", err=True)
            sys.exit(EXIT_RUNTIME)
    return wrapper


def common_options(func: Callable) -> Callable:
    func = click.option("--out", type=click.Path(file_okay=False), default=None,
                        help="Output directory (default: $COMPBENCH_OUT or ./runs)")(func)
    func = click.option("--seed", type=int, default=None, help="Master seed")(func)
    func = click.option("--config", "config_path", type=click.Path(), default=None,
                        help="JSON config file")(func)
    return func


def resolve(config_path: Optional[str], seed: Optional[int], out: Optional[str], workers: Optional[int] = None,
            **sections: Dict[str, Any]) -> BenchConfig:
    overrides: Dict[str, Any] = {'seed': seed, 'workers': workers, 'output': {'out': out}}
    overrides.update({name: values for name, values in sections.items() if values})
    return load_config(config_path, overrides)


@click.group()
def cli() -> None:
    """Compounding-error bench for imitation learning."""


@cli.command()
@common_options
@click.option("--n", type=int, default=None, help="Number of demonstrations")
@click.option("--H", "H", type=int, default=None, help="Demonstration length")
@exit_codes
def gen(config_path, seed, out, n, H):
    """Write the configured instance and an expert dataset."""
    config = resolve(config_path, seed, out, data={'n': n, 'H': H})
    root = config.output.root()
    inst = build_instance(config)
    dataset = build_dataset(config, inst)
    inst_path = save_instance(root / "instance.json", inst, config.to_dict())
    data_path = save_dataset(root / "dataset.json", dataset, config.to_dict())
    click.echo(f"Instance {inst.instance_id} -> {inst_path}")
    click.echo(f"Dataset n={dataset.n} H={dataset.H} branches={dataset.branch_counts()} -> {data_path}")


@cli.command()
@common_options
@click.option("--instance", "instance_path", type=click.Path(), required=True)
@click.option("--dataset", "dataset_path", type=click.Path(), required=True)
@click.option("--learner", type=click.Choice(LEARNER_KINDS), default=None)
@click.option("--completion", type=click.Choice(["least_norm", "assume_i", "adversarial"]), default=None)
@click.option("--chunk-len", type=int, default=None)
@exit_codes
def train(config_path, seed, out, instance_path, dataset_path, learner, completion, chunk_len):
    """Fit a learner on a dataset and write the policy and its loss trace."""
    config = resolve(config_path, seed, out,
                     learner={'kind': learner, 'completion': completion, 'chunk_len': chunk_len})
    root = config.output.root()
    inst = load_instance(Path(instance_path))
    dataset = load_dataset(Path(dataset_path))
    result = train_learner(config, inst, dataset)
    policy_path = save_policy(root / "policy.json", result.policy,
                              {**config.to_dict(), 'status': result.status, 'errors': result.errors})
    if result.trace:
        write_csv(root / "training_trace.csv", result.trace_rows(),
                  columns=("iteration", "train_loss", "val_loss", "rollout_cost"))
    click.echo(f"Policy {config.learner.kind} ({result.status}) -> {policy_path}")


@cli.command(name="eval")
@common_options
@click.option("--instance", "instance_path", type=click.Path(), required=True)
@click.option("--dataset", "dataset_path", type=click.Path(), default=None,
              help="Demonstrations to train on when no --policy is given")
@click.option("--policy", "policy_path", type=click.Path(), default=None, help="Trained policy JSON")
@click.option("--learner", type=click.Choice(LEARNER_KINDS), default=None)
@click.option("--m", type=int, default=None, help="Rollouts per estimate")
@click.option("--delta", type=float, default=None, help="Quantile level")
@click.option("--H", "H", type=int, default=None, help="Evaluation horizon")
@click.option("--workers", type=int, default=None)
@exit_codes
def eval_cmd(config_path, seed, out, instance_path, dataset_path, policy_path, learner, m, delta, H, workers):
    """Estimate every risk of a policy and write a JSON report and CSV rows."""
    config = resolve(config_path, seed, out, workers, learner={'kind': learner},
                     evaluation={'m': m, 'delta': delta, 'H': H})
    root = config.output.root()
    inst = load_instance(Path(instance_path))

    if policy_path:
        policy = load_policy(Path(policy_path), inst=inst)
        n = 0
    else:
        dataset = load_dataset(Path(dataset_path)) if dataset_path else None
        if dataset is None and config.learner.kind in ("bc", "mlp", "toy_diffusion"):
            raise FileNotFoundError(f"Learner '{config.learner.kind}' needs --dataset")
        if dataset is None:
            dataset = build_dataset(load_config(None, {**config.to_dict(), 'data': {'n': 0}}), inst)
        policy = train_learner(config, inst, dataset).policy
        n = dataset.n

    report = evaluate_policy(policy, inst, config.eval_H, config.evaluation.m, eval_rng(config),
                             delta=config.evaluation.delta, noise_samples=config.evaluation.noise_samples,
                             max_workers=config.workers, config=config.to_dict())
    status = "blowup" if report.errors else "ok"
    write_json(root / "report.json", report.to_dict())
    write_csv(root / "report.csv", report.rows(n=n, seed=config.seed, status=status))
    click.echo(f"expert_l2={report.expert_l2.value:.4e} (+/- {report.expert_l2.stderr:.1e}) "
               f"cost_risk={report.cost_risk.value:.4e} (+/- {report.cost_risk.stderr:.1e}) "
               f"traj_l1={report.traj_l1.value:.4e} quantile@{report.quantile[0]:g}={report.quantile[1]:.4e}")
    if report.errors:
        click.echo("; ".join(report.errors), err=True)
        sys.exit(EXIT_RUNTIME)


@cli.command()
@common_options
@click.option("--preset", type=click.Choice(preset_names()), required=True)
@click.option("--workers", type=int, default=None)
@click.option("--no-progress", is_flag=True, default=False)
@exit_codes
def sweep(config_path, seed, out, preset, workers, no_progress):
    """Run a preset sweep, resuming from finished cells."""
    config = resolve(config_path, seed, out, workers)
    chosen = get_preset(preset)
    result = run_sweep(chosen, config, config.output.root() / chosen.name, show_progress=not no_progress)
    click.echo(f"{len(result.rows)} rows -> {result.csv_path} ({result.completed} cells ok, "
               f"{len(result.resumed)} resumed, {len(result.failed)} failed)")
    if result.failed:
        sys.exit(EXIT_RUNTIME)


@cli.command()
@common_options
@click.option("--mu", type=float, default=None, help="Pair parameter for the matrix checks")
@click.option("--full", is_flag=True, default=False, help="Include the slow statistical checks")
@exit_codes
def verify(config_path, seed, out, mu, full):
    """Run the invariant suite."""
    config = resolve(config_path, seed, out)
    results = run_verification(config, mu=mu, full=full)
    write_json(config.output.root() / "verify.json",
               {'checks': [r.to_dict() for r in results], 'config': config.to_dict()})
    for r in results:
        click.echo(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.claim} ({r.detail})")
    failed = [r.name for r in results if not r.passed]
    if failed:
        click.echo(f"{len(failed)} checks failed: {', '.join(failed)}", err=True)
        sys.exit(EXIT_VERIFY)


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
