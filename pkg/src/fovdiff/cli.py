"""Command-line interface tying the engine together.

Subcommands: ``simulate`` builds a phantom truncation dataset, ``train``
fits the MLP noise predictor, ``sample`` generates unconditionally,
``inpaint`` completes truncated grids, ``evaluate`` produces the SAT
agreement report, and ``benchmark`` runs the whole pipeline end to end.

Progress goes to stderr; machine-readable results go to files and stdout.
Exit codes: 0 success, 2 validation failure, 1 any other error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    RunConfig,
    default_config,
    make_denoiser,
    parse_config,
)
from .gridio import GridFormatError, read_grid, write_grid
from .metrics import (
    evaluate_dataset,
    records_to_csv,
    render_report_svg,
    report_to_json,
)
from .mlp import save_checkpoint, train as train_mlp
from .phantom import build_dataset, generate_phantom, load_manifest
from .samplers import KnownRegion, SamplerRun, repaint_ddim, repaint_ddpm, sample

__all__ = ["main"]

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "DIFG_SEED"


def _load_config(args) -> RunConfig:
    config = parse_config(args.config) if args.config else default_config()
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            config = config.with_seed(int(env_seed))
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR}: expected an integer") from exc
    return config


def _sample_seeds(seed: int, n: int, stream: int) -> list[int]:
    """Derive n per-sample seeds; distinct streams never collide."""
    state = np.random.SeedSequence([seed, stream]).generate_state(n, dtype=np.uint64)
    return [int(s) for s in state]


def _inpaint_task(task) -> str:
    config, dataset_dir, out_dir, sample_id, seed = task
    schedule = config.make_schedule()
    trajectory = config.make_trajectory()
    denoiser = make_denoiser(config)
    dataset_dir = Path(dataset_dir)
    truncated = read_grid(dataset_dir / f"{sample_id}_truncated.difg").astype(np.float64)
    mask = read_grid(dataset_dir / f"{sample_id}_mask.difg").astype(np.float64)
    run = SamplerRun(
        denoiser=denoiser,
        schedule=schedule,
        trajectory=trajectory,
        rng=np.random.default_rng(seed),
        resample_count=config.sampler.U,
        known=KnownRegion(image=truncated, mask=mask),
    )
    if config.sampler.variant == "repaint_ddim":
        completed = repaint_ddim(run)
    else:
        completed = repaint_ddpm(run)
    write_grid(Path(out_dir) / f"{sample_id}_completed.difg", completed.astype(np.float32))
    return sample_id


def _inpaint_batch(config: RunConfig, dataset_dir, out_dir, workers: int) -> int:
    manifest = load_manifest(dataset_dir)
    ids = sorted(entry["id"] for entry in manifest["samples"])
    seeds = _sample_seeds(config.sampler.seed, len(ids), stream=2)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    tasks = [
        (config, str(dataset_dir), str(out_dir), sample_id, seed)
        for sample_id, seed in zip(ids, seeds)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for sample_id in pool.map(_inpaint_task, tasks):
                logger.info("completed %s", sample_id)
    else:
        for task in tasks:
            logger.info("completed %s", _inpaint_task(task))
    return len(ids)


def _require_variant(config: RunConfig, allowed: tuple[str, ...], command: str):
    if config.sampler.variant not in allowed:
        raise ConfigError(
            f"sampler.variant: {command} requires one of {', '.join(allowed)}, "
            f"got {config.sampler.variant!r}"
        )


def _cmd_simulate(args) -> int:
    config = _load_config(args)
    manifest = build_dataset(
        args.out,
        n=args.n,
        phantom_config=config.make_phantom_config(),
        truncation_config=config.make_truncation_config(),
        seed=config.sampler.seed,
        fill=config.data.fill,
        split=args.split,
        workers=args.workers,
    )
    logger.info(
        "wrote %d samples to %s", len(manifest["samples"]), Path(args.out) / args.split
    )
    return 0


def _cmd_train(args) -> int:
    config = _load_config(args)
    dataset_dir = Path(args.data)
    manifest = load_manifest(dataset_dir)
    if dataset_dir.is_file():
        dataset_dir = dataset_dir.parent
    images = [
        read_grid(dataset_dir / f"{entry['id']}_image.difg")
        for entry in sorted(manifest["samples"], key=lambda s: s["id"])
    ]
    schedule = config.make_schedule()
    params = train_mlp(images, config.train, schedule)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, params)
    logger.info("saved checkpoint to %s", out)
    return 0


def _cmd_sample(args) -> int:
    config = _load_config(args)
    _require_variant(config, ("ddpm", "ddim"), "sample")
    schedule = config.make_schedule()
    trajectory = config.make_trajectory()
    denoiser = make_denoiser(config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    shape = (config.data.height, config.data.width)
    for i, seed in enumerate(_sample_seeds(config.sampler.seed, args.n, stream=1)):
        run = SamplerRun(
            denoiser=denoiser,
            schedule=schedule,
            trajectory=trajectory,
            rng=np.random.default_rng(seed),
            shape=shape,
        )
        grid = sample(run, config.sampler.variant)
        path = out_dir / f"sample_{i:04d}.difg"
        write_grid(path, grid.astype(np.float32))
        logger.info("wrote %s", path)
    return 0


def _cmd_inpaint(args) -> int:
    config = _load_config(args)
    _require_variant(config, ("repaint_ddim", "repaint_ddpm"), "inpaint")
    if args.dataset is not None:
        n = _inpaint_batch(config, args.dataset, args.out, args.workers)
        logger.info("completed %d samples into %s", n, args.out)
        return 0

    if args.image is None or args.mask is None:
        raise ConfigError("inpaint needs either --dataset or both --image and --mask")
    truncated = read_grid(args.image).astype(np.float64)
    mask = read_grid(args.mask).astype(np.float64)
    run = SamplerRun(
        denoiser=make_denoiser(config),
        schedule=config.make_schedule(),
        trajectory=config.make_trajectory(),
        rng=np.random.default_rng(config.sampler.seed),
        resample_count=config.sampler.U,
        known=KnownRegion(image=truncated, mask=mask),
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    hook = None
    if config.output.dump_every > 0:
        every = config.output.dump_every
        counter = {"i": 0}

        def hook(level, grid):
            counter["i"] += 1
            if counter["i"] % every == 0:
                dump = out.with_name(f"{out.stem}_level{level:04d}.difg")
                write_grid(dump, grid.astype(np.float32))

    if config.sampler.variant == "repaint_ddim":
        completed = repaint_ddim(run, step_hook=hook)
    else:
        completed = repaint_ddpm(run, step_hook=hook)
    write_grid(out, completed.astype(np.float32))
    logger.info("wrote %s", out)
    return 0


def _write_report(report, prefix: Path, plot: bool) -> None:
    prefix.parent.mkdir(parents=True, exist_ok=True)
    prefix.with_suffix(".json").write_text(report_to_json(report))
    prefix.with_suffix(".csv").write_text(records_to_csv(report.records))
    if plot:
        prefix.with_suffix(".svg").write_text(render_report_svg(report))


def _summary(report) -> dict:
    overall = report.overall
    summary = {
        "samples": overall.count,
        "truncated_mae": overall.truncated_mae,
        "completed_mae": overall.completed_mae,
    }
    if overall.truncated_mae and overall.completed_mae is not None:
        summary["mae_reduction"] = 1.0 - overall.completed_mae / overall.truncated_mae
    return summary


def _cmd_evaluate(args) -> int:
    report = evaluate_dataset(args.dataset, args.completed)
    _write_report(report, Path(args.out), args.plot)
    print(json.dumps(_summary(report), sort_keys=True))
    if report.missing:
        for sample_id in report.missing:
            logger.error("missing completed image for %s", sample_id)
        return 1
    return 0


def _cmd_benchmark(args) -> int:
    config = _load_config(args)
    _require_variant(config, ("repaint_ddim", "repaint_ddpm"), "benchmark")
    out = Path(args.out)
    data_root = out / "data"
    phantom_config = config.make_phantom_config()

    logger.info("simulating %d evaluation phantoms", args.n)
    build_dataset(
        data_root,
        n=args.n,
        phantom_config=phantom_config,
        truncation_config=config.make_truncation_config(),
        seed=config.sampler.seed,
        fill=config.data.fill,
        split="eval",
        workers=args.workers,
    )

    logger.info(
        "training the noise predictor on %d clean phantoms (%d iterations)",
        args.train_n,
        config.train.iterations,
    )
    train_seeds = _sample_seeds(config.train.seed, args.train_n, stream=7)
    images = [
        generate_phantom(np.random.default_rng(s), phantom_config).image
        for s in train_seeds
    ]
    schedule = config.make_schedule()
    params = train_mlp(images, config.train, schedule)
    checkpoint = out / "model.rpdm"
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(checkpoint, params)

    inpaint_config = dataclasses.replace(
        config,
        denoiser=dataclasses.replace(
            config.denoiser, kind="mlp", checkpoint=str(checkpoint)
        ),
    )
    logger.info("completing %d truncated phantoms", args.n)
    _inpaint_batch(inpaint_config, data_root / "eval", out / "completed", args.workers)

    report = evaluate_dataset(data_root / "eval", out / "completed")
    _write_report(report, out / "report", plot=True)
    print(json.dumps(_summary(report), sort_keys=True))
    return 1 if report.missing else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fovdiff",
        description="Diffusion-based field-of-view completion engine",
    )
    parser.add_argument("-c", "--config", help="run-config file (defaults apply if omitted)")
    parser.add_argument("--workers", type=int, default=1, help="parallel workers for per-sample batches")
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a phantom truncation dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--split", default="test")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="train the MLP noise predictor on a dataset split")
    p.add_argument("--data", required=True, help="dataset split directory")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sample", help="unconditional generation (ddpm or ddim)")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=1)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("inpaint", help="complete truncated grids with a repaint sampler")
    p.add_argument("--image", help="truncated input grid")
    p.add_argument("--mask", help="FOV mask grid")
    p.add_argument("--dataset", help="dataset split directory (batch mode)")
    p.add_argument("--out", required=True, help="output grid path or directory")
    p.set_defaults(func=_cmd_inpaint)

    p = sub.add_parser("evaluate", help="produce the SAT agreement report")
    p.add_argument("--dataset", required=True, help="dataset split directory")
    p.add_argument("--completed", required=True, help="directory of completed grids")
    p.add_argument("--out", required=True, help="report path prefix")
    p.add_argument("--plot", action="store_true", help="also emit an SVG summary")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("benchmark", help="simulate, train, inpaint, and evaluate")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=50, help="evaluation phantoms")
    p.add_argument("--train-n", type=int, default=256, help="training phantoms")
    p.set_defaults(func=_cmd_benchmark)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(message)s",
        force=True,
    )
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, GridFormatError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
