#!/usr/bin/env python3
"""
seal-kd CLI - data generation, teacher/student training, evaluation,
proposition diagnostics and energy reports driven by one config file
"""

import logging
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np

from seal_kd.config import ConfigError, ConfigManager, ConfigValidator, RunConfig
from seal_kd.config.config_manager import describe_config_keys
from seal_kd.core.data import Dataset, gen_synthetic, load_csv, write_csv
from seal_kd.core.diagnostics import export_logit_heatmap, run_diagnostics, temporal_accuracy_report
from seal_kd.core.energy import energy_report
from seal_kd.core.losses import ELA_VARIANTS, METHODS, STA_VARIANTS, TeacherLogits
from seal_kd.core.snn import CheckpointError, SpikingNet, encode_input, load_checkpoint, save_checkpoint
from seal_kd.core.teacher import export_teacher_logits, import_teacher_logits, load_teacher, save_teacher, train_teacher
from seal_kd.core.training import accuracy_summary, predict_temporal, train_student
from seal_kd.utils.io_utils import OutputTransaction, read_json, write_json, write_jsonl
from seal_kd.utils.seeding import stream

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

EPILOG = "\b\nConfig keys (JSON or YAML):\n" + "\n".join(f"  {line}" for line in describe_config_keys()) + (
    "\n\b\nOutputs: train.csv test.csv manifest.json | teacher_checkpoint.json "
    "teacher_logits_{train,test}.jsonl teacher_metrics.jsonl | student_checkpoint.json metrics.jsonl "
    "run_config.json | eval_{split}.json | diagnostics.jsonl heatmap.csv | energy.json"
)


@click.group(epilog=EPILOG)
@click.option('--config', '-c', default='configs/examples/reference_task.json', help='Configuration file path')
@click.option('--verbose', '-v', is_flag=True, help='Enable verbose logging')
@click.option('--seed', type=int, default=None, help='Override the run seed')
@click.option('--method', type=click.Choice(METHODS), default=None, help='Override distill.method')
@click.option('--ela-variant', type=click.Choice(ELA_VARIANTS), default=None, help='Override distill.ela_variant')
@click.option('--sta-variant', type=click.Choice(STA_VARIANTS), default=None, help='Override distill.sta_variant')
@click.option('--out', '-o', default=None, help='Override output.directory')
@click.pass_context
def cli(ctx, config, verbose, seed, method, ela_variant, sta_variant, out):
    """Selective-alignment distillation for spiking networks"""
    ctx.ensure_object(dict)
    ctx.obj['config_path'] = config
    ctx.obj['overrides'] = dict(seed=seed, method=method, ela_variant=ela_variant,
                                sta_variant=sta_variant, out=out)

    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)


def _load(ctx) -> RunConfig:
    manager = ConfigManager(ctx.obj['config_path'])
    config = manager.apply_overrides(manager.load_config(), **ctx.obj['overrides'])
    validator = ConfigValidator()
    if not validator.validate(config):
        raise ConfigError(validator.errors)
    return config


def _fail(action: str, error: Exception):
    logger.debug("Command failed", exc_info=error)
    click.echo(f"❌ {action} failed: {error}")
    sys.exit(1)


def _load_split(config: RunConfig, split: str) -> Dataset:
    path = config.data_dir / f"{split}.csv"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found (run gen-data first)")
    manifest = config.data_dir / "manifest.json"
    classes = read_json(manifest)["classes"] if manifest.exists() else None
    return load_csv(path, split=split, classes=classes)


def _load_teacher_logits(config: RunConfig, dataset: Dataset) -> Optional[TeacherLogits]:
    distill = config.distill_config()
    if not distill.uses_teacher:
        return None
    path = config.data_dir / f"teacher_logits_{dataset.split}.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"method '{distill.method}' needs teacher logits but {path} "
                                f"does not exist (run train-teacher first)")
    return import_teacher_logits(path, classes=dataset.classes, count=dataset.size)


def _load_student(config: RunConfig, dataset: Dataset) -> SpikingNet:
    path = config.output_dir / "student_checkpoint.json"
    net = load_checkpoint(path)
    expected = (dataset.dim, tuple(config.network.hidden), dataset.classes, config.network.timesteps)
    found = (net.input_dim, net.hidden_widths, net.classes, net.timesteps)
    if found != expected:
        raise CheckpointError(f"checkpoint {path} has (inputs, hidden, classes, T) = {found}, "
                              f"config and data expect {expected}")
    return net


@cli.command()
@click.pass_context
def validate(ctx):
    """Validate the run configuration"""
    try:
        manager = ConfigManager(ctx.obj['config_path'])
        config = manager.apply_overrides(manager.load_config(), **ctx.obj['overrides'])
        validator = ConfigValidator()
        is_valid = validator.validate(config)
        click.echo(validator.get_validation_report())
        if not is_valid:
            sys.exit(1)
    except Exception as e:
        _fail("Validation", e)


@cli.command('gen-data')
@click.pass_context
def gen_data(ctx):
    """Generate or import the train/test datasets"""
    try:
        config = _load(ctx)
        if config.data.source == "synthetic":
            spec = config.synthetic_spec()
            train, test = gen_synthetic(spec)
            origin = {"spec": {"classes": spec.classes, "dim": spec.dim, "samples_per_class": spec.samples_per_class,
                               "test_samples_per_class": spec.test_samples_per_class, "spread": spec.spread,
                               "seed": spec.seed}}
        else:
            train = load_csv(config.data.train_csv, split="train")
            test = load_csv(config.data.test_csv, split="test")
            classes = max(train.classes, test.classes)
            train = Dataset(train.features, train.labels, "train", classes)
            test = Dataset(test.features, test.labels, "test", classes)
            origin = {"train_csv": config.data.train_csv, "test_csv": config.data.test_csv}
        if train.dim != test.dim:
            raise ConfigError([f"train has {train.dim} features but test has {test.dim}"])

        manifest = {
            "format": "seal-kd/dataset",
            "source": config.data.source,
            "seed": config.seed,
            "classes": train.classes,
            "dim": train.dim,
            "splits": {ds.split: {"samples": ds.size, "class_counts": ds.class_counts()} for ds in (train, test)},
            **origin,
        }
        with OutputTransaction(config.data_dir) as tx:
            write_csv(train, tx.path_for("train.csv"))
            write_csv(test, tx.path_for("test.csv"))
            write_json(tx.path_for("manifest.json"), manifest)
        click.echo(f"✅ Wrote {train.size} train / {test.size} test samples to {config.data_dir}")
    except Exception as e:
        _fail("gen-data", e)


@cli.command('train-teacher')
@click.pass_context
def train_teacher_cmd(ctx):
    """Train the MLP teacher and export its logits"""
    try:
        config = _load(ctx)
        train = _load_split(config, "train")
        test = _load_split(config, "test")
        net, train_logits = train_teacher(train, config.teacher_plan(), config.teacher.hidden)
        test_logits = net.logits(test.features)
        summary = {
            "record": "teacher",
            "widths": list(net.widths),
            "train_accuracy": float((np.argmax(train_logits.numpy(), axis=1) == train.labels).mean()),
            "test_accuracy": float((np.argmax(test_logits, axis=1) == test.labels).mean()),
        }
        with OutputTransaction(config.data_dir) as tx:
            save_teacher(net, tx.path_for("teacher_checkpoint.json"))
            export_teacher_logits(train_logits, tx.path_for("teacher_logits_train.jsonl"))
            export_teacher_logits(test_logits, tx.path_for("teacher_logits_test.jsonl"))
            write_jsonl(tx.path_for("teacher_metrics.jsonl"), [summary])
        click.echo(f"✅ Teacher trained: train accuracy {summary['train_accuracy']:.4f}, "
                   f"test accuracy {summary['test_accuracy']:.4f}")
    except Exception as e:
        _fail("train-teacher", e)


@cli.command('train-student')
@click.pass_context
def train_student_cmd(ctx):
    """Train the spiking student with the configured objective"""
    try:
        config = _load(ctx)
        train = _load_split(config, "train")
        test = _load_split(config, "test")
        teacher = _load_teacher_logits(config, train)
        plan = config.student_plan()

        with OutputTransaction(config.output_dir) as tx:
            def on_checkpoint(epoch, net, record):
                if epoch != plan.epochs:
                    save_checkpoint(net, tx.path_for(f"student_epoch_{epoch:04d}.json"))

            result = train_student(train, teacher, config.net_spec(), plan, config.distill_config(),
                                   eval_dataset=test, on_checkpoint=on_checkpoint)
            save_checkpoint(result.net, tx.path_for("student_checkpoint.json"))
            write_jsonl(tx.path_for("metrics.jsonl"), result.metrics)
            ConfigManager().save_config(config, str(tx.path_for("run_config.json")))

        final = result.metrics[-1] if result.metrics else {}
        click.echo(f"✅ Student trained with method={config.distill.method}: "
                   f"test aggregated accuracy {final.get('test_aggregated_accuracy')}")
    except Exception as e:
        _fail("train-student", e)


@cli.command('eval')
@click.option('--split', type=click.Choice(['train', 'test']), default='test', help='Split to evaluate')
@click.pass_context
def eval_cmd(ctx, split):
    """Per-timestep and aggregated accuracy of the student"""
    try:
        config = _load(ctx)
        dataset = _load_split(config, split)
        net = _load_student(config, dataset)
        logits = predict_temporal(net, dataset.features, config.network.encoding, config.seed)
        report = {"split": split, **accuracy_summary(logits, dataset.labels),
                  "temporal_accuracy": temporal_accuracy_report(logits, dataset.labels).to_dict()}
        with OutputTransaction(config.output_dir) as tx:
            write_json(tx.path_for(f"eval_{split}.json"), report)
        click.echo(f"✅ {split} aggregated accuracy {report['aggregated_accuracy']:.4f}, per timestep "
                   f"{[round(a, 4) for a in report['per_timestep_accuracy']]}")
    except Exception as e:
        _fail("eval", e)


@cli.command()
@click.pass_context
def diagnose(ctx):
    """Layer-wise gradient statistics and temporal-accuracy report"""
    try:
        config = _load(ctx)
        settings = config.diagnostics
        dataset = _load_split(config, settings.split)
        net = _load_student(config, dataset)
        teacher = _load_teacher_logits(config, dataset)
        records = run_diagnostics(net, dataset, teacher, config.distill_config(), samples=settings.samples,
                                  seed=config.seed, encoding=config.network.encoding,
                                  all_timesteps=settings.all_timesteps)

        with OutputTransaction(config.output_dir) as tx:
            write_jsonl(tx.path_for("diagnostics.jsonl"), records)
            if settings.heatmap_sample >= 0:
                index = settings.heatmap_sample
                if index >= dataset.size:
                    raise IndexError(f"diagnostics.heatmap_sample {index} is outside the {dataset.size}-sample split")
                logits = predict_temporal(net, dataset.features[index:index + 1],
                                          config.network.encoding, config.seed)
                export_logit_heatmap(logits[0], tx.path_for("heatmap.csv"))
        click.echo(f"✅ Wrote {len(records)} diagnostic records to {config.output_dir / 'diagnostics.jsonl'}")
    except Exception as e:
        _fail("diagnose", e)


@cli.command()
@click.pass_context
def energy(ctx):
    """Synaptic-operation energy of the student"""
    try:
        config = _load(ctx)
        split = config.energy.split
        dataset = _load_split(config, split)
        net = _load_student(config, dataset)
        encoded = encode_input(dataset.features, config.network.encoding, net.timesteps,
                               stream(config.seed, "encode-energy"))
        teacher_path = config.data_dir / "teacher_checkpoint.json"
        teacher_widths = load_teacher(teacher_path).widths if teacher_path.exists() else None
        report = energy_report(net, encoded, config.energy_model(), teacher_widths)
        report["split"] = split

        with OutputTransaction(config.output_dir) as tx:
            write_json(tx.path_for("energy.json"), report)
        click.echo(f"✅ {report['sop_pj']:.1f} pJ per sample ({report['acs']:.1f} ACs, "
                   f"{report['macs']:.0f} MACs, fire rate {report['fire_rate']:.4f})")
    except Exception as e:
        _fail("energy", e)


def main():
    """Main entry point"""
    cli(obj={})


if __name__ == '__main__':
    main()
