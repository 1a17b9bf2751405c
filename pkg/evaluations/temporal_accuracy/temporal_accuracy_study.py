#!/usr/bin/env python3
"""
Per-timestep versus aggregated accuracy of trained students
Shows that single timesteps err even when the time-averaged prediction is right
"""

from dataclasses import replace

import click

from evaluations.common import SEEDS, held_in, prepare_task, save_results, train_method
from seal_kd.core.diagnostics import temporal_accuracy_report
from seal_kd.core.training import predict_temporal


@click.command()
@click.option('--seeds', default=len(SEEDS), help='Number of seeds to run')
@click.option('--epochs', type=int, default=None, help='Override plan.epochs for a quicker pass')
@click.option('--method', default='timestep-kd', help='Objective of the studied student')
def main(seeds, epochs, method):
    """Temporal-accuracy statistics of the reference model"""
    print("=" * 80)
    print(f"⏱️  Temporal accuracy of {method} students")
    print("=" * 80)

    reports = {}
    for seed in SEEDS[:seeds]:
        task = prepare_task(seed, epochs=epochs)
        config = task.config
        result = train_method(task, replace(config.distill_config(), method=method))
        logits = predict_temporal(result.net, task.test.features, config.network.encoding, seed)
        report = temporal_accuracy_report(logits, task.test.labels)
        reports[seed] = report.to_dict()
        per_t = ", ".join(f"{a:.3f}" for a in report.per_timestep_accuracy)
        print(f"   • seed {seed}: per timestep [{per_t}] aggregated {report.aggregated_accuracy:.3f} "
              f"histogram {report.correct_count_histogram}")

    below = [all(a <= r["aggregated_accuracy"] for a in r["per_timestep_accuracy"]) for r in reports.values()]
    erring = [(r["with_erroneous_timestep_fraction"] or 0.0) > 0 for r in reports.values()]

    print(f"\n{'=' * 80}")
    print("🏆 Directional checks")
    print("=" * 80)
    print(f"   • every timestep <= aggregated accuracy   {held_in(below)}")
    print(f"   • finally-correct samples with an erroneous timestep > 0   {held_in(erring)}")

    save_results("temporal_accuracy", {
        "method": method,
        "epochs": epochs,
        "per_seed": {str(s): r for s, r in reports.items()},
        "timesteps_below_aggregate": below,
        "erroneous_timesteps_present": erring,
    })


if __name__ == '__main__':
    main()
