#!/usr/bin/env python3
"""
Layer-wise gradient statistics for timestep-KD and SeAl-KD students
PairShare at erroneous timesteps, RefAlign at weak timesteps, KDRatio at correct timesteps
"""

from dataclasses import replace

import click
import numpy as np

from evaluations.common import SEEDS, held_in, prepare_task, save_results, train_method
from seal_kd.core.diagnostics import run_diagnostics


def layer_means(records, statistic):
    """Mean over layers of the per-layer means, ignoring undefined layers."""
    values = [r["mean"] for r in records
              if r["record"] == "layer_stat" and r["statistic"] == statistic and r["mean"] is not None]
    return float(np.mean(values)) if values else None


def run_seed(seed, epochs, samples, all_timesteps):
    task = prepare_task(seed, epochs=epochs)
    config = task.config
    base = config.distill_config()
    summary = {}
    for method in ("timestep-kd", "seal"):
        distill = replace(base, method=method)
        result = train_method(task, distill)
        records = run_diagnostics(result.net, task.test, task.teacher_test, distill, samples=samples,
                                  seed=seed, encoding=config.network.encoding, all_timesteps=all_timesteps)
        summary[method] = {name: layer_means(records, name) for name in ("pair_share", "ref_align", "kd_ratio")}
        print(f"   • seed {seed} {method:<12} " + ", ".join(
            f"{k}={v:.4f}" if v is not None else f"{k}=n/a" for k, v in summary[method].items()))
    return summary


def _gt(a, b):
    return a is not None and b is not None and a > b


@click.command()
@click.option('--seeds', default=len(SEEDS), help='Number of seeds to run')
@click.option('--epochs', type=int, default=None, help='Override plan.epochs for a quicker pass')
@click.option('--samples', default=5, help='Samples per condition')
@click.option('--all-timesteps', is_flag=True, help='Use every qualifying timestep of each sample')
def main(seeds, epochs, samples, all_timesteps):
    """Directional check of localized, reference-guided and restrained correction"""
    print("=" * 80)
    print("🔬 Gradient-level diagnostics: timestep-kd vs seal")
    print("=" * 80)

    per_seed = {}
    for seed in SEEDS[:seeds]:
        print(f"\n📊 Seed {seed}")
        per_seed[seed] = run_seed(seed, epochs, samples, all_timesteps)

    checks = {
        "pair_share seal > timestep-kd": [_gt(r["seal"]["pair_share"], r["timestep-kd"]["pair_share"])
                                          for r in per_seed.values()],
        "ref_align seal > 0": [_gt(r["seal"]["ref_align"], 0.0) for r in per_seed.values()],
        "kd_ratio seal < timestep-kd": [_gt(r["timestep-kd"]["kd_ratio"], r["seal"]["kd_ratio"])
                                        for r in per_seed.values()],
    }

    print(f"\n{'=' * 80}")
    print("🏆 Directional checks")
    print("=" * 80)
    for name, flags in checks.items():
        print(f"   • {name:<32} {held_in(flags)}")

    save_results("propositions", {
        "seeds": list(per_seed),
        "epochs": epochs,
        "samples": samples,
        "all_timesteps": all_timesteps,
        "per_seed": {str(s): r for s, r in per_seed.items()},
        "checks": {name: [bool(f) for f in flags] for name, flags in checks.items()},
    })


if __name__ == '__main__':
    main()
