#!/usr/bin/env python3
"""
Objective and variant ablation on the reference task
Trains every method plus the ELA / STA variants per seed and compares aggregated test accuracy
"""

from dataclasses import replace

import click
import numpy as np

from evaluations.common import SEEDS, final_accuracy, held_in, prepare_task, save_results, train_method

# (label, distill overrides)
METHOD_RUNS = [
    ("timestep-kd", {"method": "timestep-kd"}),
    ("ela", {"method": "ela"}),
    ("sta", {"method": "sta"}),
    ("seal", {"method": "seal"}),
]
ELA_VARIANT_RUNS = [(f"seal/ela-{v}", {"method": "seal", "ela_variant": v}) for v in ("S", "A", "AS", "Both")]
STA_VARIANT_RUNS = [("uta", {"method": "uta"})] + [
    (f"seal/sta-{v}", {"method": "seal", "sta_variant": v}) for v in ("no-conf", "no-sim", "dist")
]


def run_seed(seed: int, runs, epochs):
    task = prepare_task(seed, epochs=epochs)
    base = task.config.distill_config()
    accuracies = {}
    for label, overrides in runs:
        result = train_method(task, replace(base, **overrides))
        accuracies[label] = final_accuracy(result)
        print(f"   • seed {seed} {label:<18} test accuracy {accuracies[label]:.4f}")
    return accuracies


@click.command()
@click.option('--seeds', default=len(SEEDS), help='Number of seeds to run')
@click.option('--epochs', type=int, default=None, help='Override plan.epochs for a quicker pass')
@click.option('--variants/--no-variants', default=True, help='Also run the ELA and STA variant tables')
def main(seeds, epochs, variants):
    """Directional ablation: seal >= {ela, sta} >= timestep-kd"""
    runs = METHOD_RUNS + (ELA_VARIANT_RUNS + STA_VARIANT_RUNS if variants else [])
    print("=" * 80)
    print("🧪 Objective ablation on the reference task")
    print("=" * 80)

    per_seed = {}
    for seed in SEEDS[:seeds]:
        print(f"\n📊 Seed {seed}")
        per_seed[seed] = run_seed(seed, runs, epochs)

    labels = [label for label, _ in runs]
    means = {label: float(np.mean([per_seed[s][label] for s in per_seed])) for label in labels}

    print(f"\n{'=' * 80}")
    print("📈 Mean aggregated test accuracy")
    print("=" * 80)
    for label in labels:
        print(f"   {label:<18} {means[label]:.4f}")

    gaps = [per_seed[s]["seal"] - per_seed[s]["timestep-kd"] > 0 for s in per_seed]
    ordering = {
        "seal >= ela": means["seal"] >= means["ela"],
        "seal >= sta": means["seal"] >= means["sta"],
        "ela >= timestep-kd": means["ela"] >= means["timestep-kd"],
        "sta >= timestep-kd": means["sta"] >= means["timestep-kd"],
    }
    print("\n🏆 Directional checks:")
    for name, holds in ordering.items():
        print(f"   • {name:<20} {'✅' if holds else '❌'}")
    print(f"   • seal beats timestep-kd in {held_in(gaps)}")

    save_results("ablation", {
        "seeds": list(per_seed),
        "epochs": epochs,
        "per_seed": {str(s): acc for s, acc in per_seed.items()},
        "mean_accuracy": means,
        "ordering": ordering,
        "seal_gap_seeds": int(sum(gaps)),
    })


if __name__ == '__main__':
    main()
