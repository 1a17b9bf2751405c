#!/usr/bin/env python3
"""
Sensitivity of SeAl-KD to the ELA weight alpha and the STA weight beta at T = 4
One axis is swept while the other stays at its default
"""

from dataclasses import replace

import click
import numpy as np

from evaluations.common import SEEDS, final_accuracy, prepare_task, save_results, train_method

ALPHAS = (0.2, 0.4, 0.6, 0.8, 1.0)
BETAS = (0.05, 0.1, 0.15, 0.2, 0.3)


@click.command()
@click.option('--seeds', default=3, help='Number of seeds to average')
@click.option('--epochs', type=int, default=None, help='Override plan.epochs for a quicker pass')
def main(seeds, epochs):
    """Sweep alpha and beta around the defaults"""
    print("=" * 80)
    print("🎛️  Weight sensitivity of seal")
    print("=" * 80)

    grid = [("alpha_ela", a) for a in ALPHAS] + [("beta_sta", b) for b in BETAS]
    scores = {f"{name}={value}": [] for name, value in grid}
    for seed in SEEDS[:seeds]:
        task = prepare_task(seed, epochs=epochs)
        base = replace(task.config.distill_config(), method="seal")
        for name, value in grid:
            accuracy = final_accuracy(train_method(task, replace(base, **{name: value})))
            scores[f"{name}={value}"].append(accuracy)
            print(f"   • seed {seed} {name}={value:<5} test accuracy {accuracy:.4f}")

    means = {key: float(np.mean(values)) for key, values in scores.items()}
    spread = {axis: float(np.ptp([means[k] for k in means if k.startswith(axis)])) for axis in ("alpha_ela", "beta_sta")}

    print(f"\n{'=' * 80}")
    print("📈 Mean test accuracy")
    print("=" * 80)
    for key, value in means.items():
        print(f"   {key:<16} {value:.4f}")
    for axis, width in spread.items():
        print(f"   • {axis} range of mean accuracy: {width:.4f}")

    save_results("sensitivity", {"epochs": epochs, "seeds": seeds, "scores": scores,
                                 "mean_accuracy": means, "spread": spread})


if __name__ == '__main__':
    main()
