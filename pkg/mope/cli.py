"""
Command-line entry point.

    mope gen-data | train-gate | train-denoiser | train-classifier |
         finetune-mope | eval | denoise | route | analyze  [options]

Exit codes: 0 success, 1 configuration or usage error, 2 runtime or training
failure, 3 I/O failure.
"""

import argparse
import logging
import os
import sys

import numpy as np
import pandas as pd

from mope import complexity, evalkit, ops, plots, settings
from mope.config import COMMANDS, DEFAULTS, NOISY_EXPERT_CHOICES, load_config
from mope.distortion import DistortionConfig, distort, pair_stream
from mope.exceptions import ConfigError, MopeError
from mope.graph import Model, Network, build_model, load_weights, save_weights
from mope.items import DecisionItem, EvalItem, FidelityItem
from mope.networks import catalog
from mope.pipelines import (
    ClassifierHistory,
    DatabasePipeline,
    DecisionLog,
    EvalTable,
    FidelityTable,
    GateHistory,
    LossHistory,
)
from mope.ppm import read_ppm, write_ppm
from mope.router import Expert, Mope, MopeConfig
from mope.synth import SynthConfig, generate, labeled_batches, load_dataset, save_dataset
from mope.training import (
    augmented_batches,
    classifier_config,
    denoiser_config,
    finetune_config,
    finetune_downstream,
    gate_config,
    train_classifier,
    train_denoiser,
    train_gate,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3

GATE_FILE = "gate.mope"
DENOISER_FILE = "denoiser.mope"
DISCRIMINATOR_FILE = "discriminator.mope"
CLASSIFIER_FILES = {
    "clean-only": "classifier_clean.mope",
    "augmented": "classifier_augmented.mope",
    "mope-avg": "classifier_mope_avg.mope",
    "mope-denoise": "classifier_mope_denoise.mope",
}


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with the configuration-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_options(parser):
    parser.add_argument("--config", help="INI file with [common] and per-command sections")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--image", help="input PPM image (denoise, route)")
    parser.add_argument("--output", help="output PPM image (denoise, route)")
    parser.add_argument("--tracking-counts", help="per-frame CSV (frame,fn,fp,id,g) for MOTA (eval)")
    for key, default in DEFAULTS.items():
        flag = "--" + key.replace("_", "-")
        kwargs = {"dest": key, "default": None}
        if key == "noisy_expert":
            kwargs["choices"] = NOISY_EXPERT_CHOICES
        elif isinstance(default, tuple):
            kwargs["metavar"] = "N,N"
        elif not isinstance(default, str):
            kwargs["type"] = type(default)
        parser.add_argument(flag, **kwargs)


def build_parser():
    parser = ArgumentParser(prog="mope", description="Mixture of pre-processing experts")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for command in COMMANDS:
        _add_options(sub.add_parser(command))
    return parser


def _load_model(spec, directory, filename):
    network = Network(spec)
    params = load_weights(os.path.join(directory, filename), network)
    return Model(network, params)


def _distortion(cfg):
    return DistortionConfig(cfg.max_sigma, cfg.lowres_factors, cfg.seed)


def _rng(cfg, offset=0):
    return np.random.default_rng([cfg.seed, offset])


def _train_cfg(cfg, factory, **extra):
    return factory(
        iterations=cfg.iterations,
        batch_size=cfg.batch_size,
        learning_rate=cfg.lr,
        lambda_sim=cfg.lambda_sim,
        seed=cfg.seed,
        log_every=cfg.log_every,
        **extra,
    )


def _dataset(cfg):
    dataset = load_dataset(cfg.dataset_dir)
    if len(dataset) and int(dataset.labels.max()) >= cfg.num_classes:
        raise ConfigError(
            f"dataset has labels up to {int(dataset.labels.max())} but num_classes is {cfg.num_classes}"
        )
    return dataset


def cmd_gen_data(cfg, args, registry):
    synth_cfg = SynthConfig(cfg.num_classes, cfg.image_size, cfg.samples_per_class, cfg.seed)
    dataset = generate(synth_cfg, workers=max(1, cfg.workers))
    save_dataset(dataset, cfg.dataset_dir)
    print(f"Wrote {len(dataset)} images to {cfg.dataset_dir}")


def cmd_train_gate(cfg, args, registry):
    images, _ = _dataset(cfg).train
    gate = build_model(catalog().gating, cfg.seed)
    stream = pair_stream(images, _distortion(cfg), cfg.batch_size, _rng(cfg))
    history_path = os.path.join(cfg.out_dir, "gate_history.csv")
    with GateHistory(history_path) as history:
        result = train_gate(gate, stream, _train_cfg(cfg, gate_config), pipelines=(history,))
    save_weights(gate.params, os.path.join(cfg.out_dir, GATE_FILE))
    plots.write_figure(plots.history_figure(result.history, "Gate training"), history_path[:-4] + ".html")


def cmd_train_denoiser(cfg, args, registry):
    images, _ = _dataset(cfg).train
    models = catalog()
    generator = build_model(models.denoiser, cfg.seed)
    discriminator = build_model(models.discriminator, cfg.seed + 1)
    stream = pair_stream(images, _distortion(cfg), cfg.batch_size, _rng(cfg))
    history_path = os.path.join(cfg.out_dir, "denoiser_history.csv")
    with LossHistory(history_path) as history:
        result = train_denoiser(
            generator, discriminator, stream,
            _train_cfg(cfg, denoiser_config, adv_warmup=cfg.adv_warmup),
            pipelines=(history,),
        )
    save_weights(generator.params, os.path.join(cfg.out_dir, DENOISER_FILE))
    save_weights(discriminator.params, os.path.join(cfg.out_dir, DISCRIMINATOR_FILE))
    plots.write_figure(plots.history_figure(result.history, "Denoiser training"), history_path[:-4] + ".html")


def cmd_train_classifier(cfg, args, registry):
    images, labels = _dataset(cfg).train
    spec = catalog(cfg.num_classes).classifier
    train_cfg = _train_cfg(cfg, classifier_config)
    streams = {
        "clean-only": labeled_batches(images, labels, cfg.batch_size, _rng(cfg, 1)),
        # each drawn image contributes a clean and a distorted copy
        "augmented": augmented_batches(images, labels, _distortion(cfg), max(1, cfg.batch_size // 2), _rng(cfg, 2)),
    }
    for name, stream in streams.items():
        model = build_model(spec, cfg.seed)
        filename = CLASSIFIER_FILES[name]
        with ClassifierHistory(os.path.join(cfg.out_dir, filename[:-5] + "_history.csv")) as history:
            train_classifier(model, stream, train_cfg, pipelines=(history,), desc=name)
        save_weights(model.params, os.path.join(cfg.out_dir, filename))


def cmd_finetune_mope(cfg, args, registry):
    images, labels = _dataset(cfg).train
    models = catalog(cfg.num_classes)
    gate = _load_model(models.gating, cfg.weights_dir, GATE_FILE)
    denoiser = _load_model(models.denoiser, cfg.weights_dir, DENOISER_FILE)
    base = _load_model(models.classifier, cfg.weights_dir, CLASSIFIER_FILES["clean-only"])
    train_cfg = _train_cfg(cfg, finetune_config)
    for expert in (Expert.AVERAGE_FILTER, Expert.DENOISER):
        name = "mope-avg" if expert == Expert.AVERAGE_FILTER else "mope-denoise"
        mope = Mope(gate, denoiser, MopeConfig(cfg.threshold, expert))
        classifier = Model(base.network, base.params.copy())
        stream = augmented_batches(images, labels, _distortion(cfg), max(1, cfg.batch_size // 2), _rng(cfg, 3))
        filename = CLASSIFIER_FILES[name]
        with ClassifierHistory(os.path.join(cfg.out_dir, filename[:-5] + "_history.csv")) as history:
            finetune_downstream(classifier, mope, stream, train_cfg, pipelines=(history,))
        save_weights(classifier.params, os.path.join(cfg.out_dir, filename))


def _conditions(cfg, images):
    sigma_name = f"sigma={cfg.sigma:g}"
    return {
        "clean": images,
        "lowres": distort(images, 0.0, cfg.eval_lowres_factor),
        sigma_name: distort(images, cfg.sigma, 1, _rng(cfg, 4)),
    }


def _maybe_load(spec, directory, filename):
    path = os.path.join(directory, filename)
    if not os.path.exists(path):
        logger.warning("%s not found, skipping", path)
        return None
    return _load_model(spec, directory, filename)


def _forced(expert, denoiser):
    """Pre-processing applied to every image without a gate."""
    if expert == Expert.AVERAGE_FILTER:
        return ops.box_filter3
    return denoiser


def _eval_rows(cfg, gate, denoiser):
    """(row name, classifier key, preprocess callable or None) for every model the weights allow."""
    rows = [("clean-only", "clean-only", None), ("augmented", "augmented", None)]
    if gate is not None:
        avg = Mope(gate, denoiser, MopeConfig(cfg.threshold, Expert.AVERAGE_FILTER))
        rows.append(("mope-avg", "mope-avg", lambda batch: avg.preprocess_batch(batch)[0]))
        if denoiser is not None:
            full = Mope(gate, denoiser, MopeConfig(cfg.threshold, Expert.DENOISER))
            rows.append(("mope-denoise", "mope-denoise", lambda batch: full.preprocess_batch(batch)[0]))
    rows.append(("clean-only+avg-always", "clean-only", _forced(Expert.AVERAGE_FILTER, denoiser)))
    if denoiser is not None:
        rows.append(("clean-only+denoise-always", "clean-only", _forced(Expert.DENOISER, denoiser)))
    return rows


def _gate_outputs(cfg, gate, images, noisy, ids):
    router = Mope(gate, None, MopeConfig(cfg.threshold, Expert.AVERAGE_FILTER))
    _, clean_decisions = router.preprocess_batch(images)
    _, noisy_decisions = router.preprocess_batch(noisy)
    report = evalkit.gate_report(clean_decisions + noisy_decisions, [True] * len(ids) + [False] * len(ids))
    frame = report.as_frame()
    frame["accuracy"] = report.accuracy
    frame.to_csv(os.path.join(cfg.out_dir, "gate_report.csv"))
    with DecisionLog(os.path.join(cfg.out_dir, "decisions.csv")) as log:
        for suffix, decisions in (("clean", clean_decisions), ("noisy", noisy_decisions)):
            for image_id, decision in zip(ids, decisions):
                log.process_item(DecisionItem(f"{image_id}-{suffix}", decision.score, decision.chosen_expert.value))
    return report


def cmd_eval(cfg, args, registry):
    dataset = _dataset(cfg)
    images, labels = dataset.heldout
    ids = [i for i, split in zip(dataset.ids, dataset.split) if split == "heldout"]
    models = catalog(cfg.num_classes)
    wdir = cfg.weights_dir
    gate = _maybe_load(models.gating, wdir, GATE_FILE)
    denoiser = _maybe_load(models.denoiser, wdir, DENOISER_FILE)
    conditions = _conditions(cfg, images)
    noisy = conditions[f"sigma={cfg.sigma:g}"]

    rows = _eval_rows(cfg, gate, denoiser)
    eval_items = []
    with EvalTable(os.path.join(cfg.out_dir, "eval_table.csv")) as table:
        for row_name, key, preprocess in rows:
            classifier = _maybe_load(models.classifier, wdir, CLASSIFIER_FILES[key])
            if classifier is None:
                continue
            for condition, condition_images in conditions.items():
                accuracy = evalkit.evaluate_classifier(classifier, condition_images, labels, preprocess=preprocess)
                item = EvalItem(row_name, condition, accuracy)
                eval_items.append(item)
                table.process_item(item)
                registry.process_item(item)
    if not eval_items:
        raise FileNotFoundError(f"no classifier weights found in {wdir}")

    with FidelityTable(os.path.join(cfg.out_dir, "fidelity.csv")) as fidelity:
        routes = {"noisy": noisy, "average_filter": ops.box_filter3(noisy)}
        if denoiser is not None:
            routes["denoiser"] = evalkit.map_batches(denoiser, noisy)
        for route, output in routes.items():
            item = FidelityItem(route, evalkit.mse(output, images), evalkit.psnr(output, images))
            fidelity.process_item(item)
            registry.process_item(item)

    if gate is not None:
        report = _gate_outputs(cfg, gate, images, noisy, ids)
        print(f"Gate accuracy (clean vs sigma={cfg.sigma:g}): {report.accuracy:.3f}")

    if args.tracking_counts:
        value = evalkit.mota(evalkit.load_tracking_counts(args.tracking_counts))
        pd.DataFrame([{"metric": "mota", "value": value}]).to_csv(os.path.join(cfg.out_dir, "mota.csv"), index=False)
        print(f"MOTA: {value:.4f}")

    frame = pd.DataFrame([item.as_row() for item in eval_items], columns=EvalItem.field_names())
    plots.write_figure(plots.eval_figure(frame), os.path.join(cfg.out_dir, "eval_table.html"))
    order = list(dict.fromkeys(frame["model"]))
    pivot = frame.pivot(index="model", columns="condition", values="accuracy")
    print(pivot.reindex(index=order, columns=list(conditions)).to_string())


def _require_image(args):
    if not args.image:
        raise ConfigError("--image is required")
    return read_ppm(args.image)


def _output_path(cfg, args, suffix):
    if args.output:
        return args.output
    stem = os.path.splitext(os.path.basename(args.image))[0]
    return os.path.join(cfg.out_dir, f"{stem}_{suffix}.ppm")


def cmd_denoise(cfg, args, registry):
    image = _require_image(args)
    denoiser = _load_model(catalog().denoiser, cfg.weights_dir, DENOISER_FILE)
    path = _output_path(cfg, args, "denoised")
    write_ppm(path, denoiser(image))
    print(f"Wrote {path}")


def cmd_route(cfg, args, registry):
    image = _require_image(args)
    models = catalog()
    expert = Expert.parse(cfg.noisy_expert)
    gate = _load_model(models.gating, cfg.weights_dir, GATE_FILE)
    denoiser = _load_model(models.denoiser, cfg.weights_dir, DENOISER_FILE) if expert == Expert.DENOISER else None
    mope = Mope(gate, denoiser, MopeConfig(cfg.threshold, expert))
    decision = mope.decide(image)
    path = _output_path(cfg, args, "routed")
    write_ppm(path, mope.run_expert(decision.chosen_expert, image))
    image_id = os.path.splitext(os.path.basename(args.image))[0]
    with DecisionLog(os.path.join(cfg.out_dir, "decisions.csv")) as log:
        log.process_item(DecisionItem(image_id, decision.score, decision.chosen_expert.value))
    print(f"score={decision.score:.4f} expert={decision.chosen_expert.value} "
          f"patches=[{decision.patch_min:.3f}, {decision.patch_max:.3f}]")
    print(f"Wrote {path}")


def cmd_analyze(cfg, args, registry):
    models = catalog()
    specs = (models.denoiser, models.gating)
    for spec in specs:
        report = complexity.count_flops(spec, cfg.input_size)
        report.to_csv(os.path.join(cfg.out_dir, f"complexity_{spec.name}.csv"))
        print(report.format())
        print()
    table = complexity.summary_table(specs, cfg.input_size)
    table.to_csv(os.path.join(cfg.out_dir, "summary.csv"), index=False)
    print(table.to_string(index=False))
    print(f"# {complexity.CONVENTION}")
    print(complexity.discrepancy_note(table))
    cost = complexity.overhead(specs, cfg.input_size, cfg.reference_params_mb, cfg.reference_gflop)
    print(f"Overhead vs reference detector ({cfg.reference_params_mb:g} MB, {cfg.reference_gflop:g} GFLOP): "
          f"{cost['params_pct']:.2f}% params, {cost['gflop_pct']:.2f}% GFLOP")
    print(f"Gating receptive field: {complexity.receptive_field(models.gating)}")


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train-gate": cmd_train_gate,
    "train-denoiser": cmd_train_denoiser,
    "train-classifier": cmd_train_classifier,
    "finetune-mope": cmd_finetune_mope,
    "eval": cmd_eval,
    "denoise": cmd_denoise,
    "route": cmd_route,
    "analyze": cmd_analyze,
}


def run(args):
    overrides = {key: getattr(args, key) for key in DEFAULTS}
    cfg = load_config(args.command, args.config, overrides)
    os.makedirs(cfg.out_dir, exist_ok=True)
    cfg.write_snapshot()
    logger.info("Running %s (seed %d) into %s", args.command, cfg.seed, cfg.out_dir)
    with DatabasePipeline(cfg.out_dir, args.command, cfg.values, cfg.seed) as registry:
        HANDLERS[args.command](cfg, args, registry)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=settings.LOG_FORMAT)
    try:
        run(args)
    except ConfigError as exc:
        print(f"mope: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"mope: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MopeError, ValueError, RuntimeError) as exc:
        print(f"mope: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
