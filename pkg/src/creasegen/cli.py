"""Command-line entry points: `creasegen` (synthesis) and `creaseval` (metrics).

Exit codes: 0 success, 1 validation/protocol error, 2 I/O error.
"""

from __future__ import annotations

import csv
import dataclasses
import sys

import click
import numpy as np

from . import __version__, metrics, pipeline
from .geometry import Hand
from .renderer import load_png, save_png
from .roi import LandmarkPair, extract_roi

EXIT_VALIDATION = 1
EXIT_IO = 2


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.version_option(__version__)
def creasegen():
    """Deterministic synthetic palmprint-crease dataset generator."""


@creasegen.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override master_seed.")
@click.option("--workers", type=int, default=None, help="Override worker count.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Override output_dir.")
def generate(config_path, seed, workers, out_dir):
    """Generate the full dataset plus its manifest."""
    try:
        config = pipeline.load_config(config_path)
    except (OSError, ValueError) as exc:
        _fail(EXIT_VALIDATION, str(exc))
    overrides = {}
    if seed is not None:
        overrides["master_seed"] = seed
    if workers is not None:
        overrides["workers"] = workers
    if out_dir is not None:
        overrides["output_dir"] = out_dir
    if overrides:
        config = dataclasses.replace(config, **overrides)
    try:
        manifest = pipeline.generate_dataset(config)
    except pipeline.ConfigValidationError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    click.echo(f"wrote {len(manifest.records)} images under {config.output_dir} "
               f"(config {manifest.config_hash[:12]}, seed {manifest.master_seed})")


@creasegen.command()
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
def verify(manifest_path):
    """Recompute checksums for every file listed in a manifest."""
    try:
        report = pipeline.verify_manifest(manifest_path)
    except (OSError, ValueError) as exc:
        _fail(EXIT_IO, str(exc))
    for path in report.missing:
        click.echo(f"missing: {path}")
    for path in report.corrupt:
        click.echo(f"corrupt: {path}")
    click.echo(f"checked {report.checked} records: "
               f"{len(report.missing)} missing, {len(report.corrupt)} corrupt")
    if not report.ok:
        sys.exit(EXIT_VALIDATION)


@creasegen.command()
@click.option("--identity", "identity_id", required=True, type=int)
@click.option("--sample", "sample_id", required=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Config file; defaults apply when omitted.")
@click.option("--seed", type=int, default=None, help="Override master_seed.")
def preview(identity_id, sample_id, out_path, config_path, seed):
    """Render a single sample for inspection."""
    try:
        config = pipeline.load_config(config_path) if config_path else pipeline.GenConfig()
        if seed is not None:
            config = dataclasses.replace(config, master_seed=seed)
        violations = pipeline.validate_config(config)
        if violations:
            raise pipeline.ConfigValidationError(violations)
        canvas = pipeline.render_one(config, identity_id, sample_id)
        save_png(canvas, out_path, config.png_compress_level)
    except pipeline.ConfigValidationError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except (OSError, ValueError) as exc:
        _fail(EXIT_IO, str(exc))
    click.echo(f"wrote {out_path}")


def _roi_one(image_path, ax, ay, bx, by, hand, size, out_path):
    image = load_png(image_path)
    lm = LandmarkPair(a=(ax, ay), b=(bx, by), hand=Hand(hand))
    save_png(extract_roi(image, lm, size), out_path)


@creasegen.command()
@click.option("--image", "image_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--ax", type=float)
@click.option("--ay", type=float)
@click.option("--bx", type=float)
@click.option("--by", type=float)
@click.option("--hand", type=click.Choice(["left", "right"]), default="left")
@click.option("--out", "out_path", type=click.Path(dir_okay=False))
@click.option("--size", type=int, default=224, show_default=True)
@click.option("--csv", "csv_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Batch mode: CSV rows of path,ax,ay,bx,by,hand.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None,
              help="Output directory for batch mode.")
def roi(image_path, ax, ay, bx, by, hand, out_path, size, csv_path, out_dir):
    """Extract the palm ROI from landmark pairs (single image or CSV batch)."""
    import os

    try:
        if csv_path:
            if not out_dir:
                _fail(EXIT_VALIDATION, "--csv requires --out-dir")
            os.makedirs(out_dir, exist_ok=True)
            with open(csv_path, newline="", encoding="utf-8") as fh:
                for row_no, row in enumerate(csv.reader(fh), start=1):
                    if not row or row[0].startswith("#"):
                        continue
                    if len(row) != 6:
                        _fail(EXIT_VALIDATION, f"{csv_path}:{row_no}: expected 6 columns")
                    path, rax, ray, rbx, rby, rhand = (c.strip() for c in row)
                    dest = os.path.join(out_dir, os.path.basename(path))
                    _roi_one(path, float(rax), float(ray), float(rbx), float(rby),
                             rhand, size, dest)
            click.echo(f"wrote ROIs to {out_dir}")
        else:
            required = {"--image": image_path, "--ax": ax, "--ay": ay,
                        "--bx": bx, "--by": by, "--out": out_path}
            missing = [k for k, v in required.items() if v is None]
            if missing:
                _fail(EXIT_VALIDATION, f"missing options: {', '.join(missing)}")
            _roi_one(image_path, ax, ay, bx, by, hand, size, out_path)
            click.echo(f"wrote {out_path}")
    except ValueError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except OSError as exc:
        _fail(EXIT_IO, str(exc))


@click.group()
@click.version_option(__version__)
def creaseval():
    """Verification/identification metrics over embedding files."""


def _load_table(path):
    try:
        return metrics.load_embeddings(path)
    except metrics.EmbeddingFormatError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except OSError as exc:
        _fail(EXIT_IO, str(exc))


def _scores(table, pairs_pos, pairs_neg, seed):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    try:
        return metrics.build_pairs(table, pairs_pos, pairs_neg, rng)
    except (metrics.CapacityError, metrics.ProtocolError, ValueError) as exc:
        _fail(EXIT_VALIDATION, str(exc))


@creaseval.command()
@click.option("--embeddings", "path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--far", "fars", required=True,
              help="Comma-separated target FARs, e.g. 1e-3,1e-4.")
@click.option("--pairs-pos", type=int, default=10000, show_default=True)
@click.option("--pairs-neg", type=int, default=10000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def tar(path, fars, pairs_pos, pairs_neg, seed):
    """TAR at one or more target FARs (CSV on stdout)."""
    table = _load_table(path)
    scores = _scores(table, pairs_pos, pairs_neg, seed)
    click.echo("far,tar,threshold,achieved_far,under_resolved")
    for far_text in fars.split(","):
        result = metrics.tar_at_far(scores, float(far_text))
        click.echo(f"{far_text},{result.tar:.6f},{result.threshold:.6f},"
                   f"{result.achieved_far:.2e},{int(result.under_resolved)}")


@creaseval.command(name="eer")
@click.option("--embeddings", "path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--pairs-pos", type=int, default=10000, show_default=True)
@click.option("--pairs-neg", type=int, default=10000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def eer_cmd(path, pairs_pos, pairs_neg, seed):
    """Equal error rate over sampled pairs."""
    table = _load_table(path)
    scores = _scores(table, pairs_pos, pairs_neg, seed)
    value, threshold = metrics.eer(scores)
    click.echo(f"eer={value:.6f} threshold={threshold:.6f}")


@creaseval.command()
@click.option("--embeddings", "path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
def top1(path, seed):
    """Closed-set top-1 accuracy with a seeded registry."""
    table = _load_table(path)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    try:
        acc = metrics.top1_accuracy(table, rng)
    except metrics.ProtocolError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    click.echo(f"top1={acc:.6f}")


@creaseval.command()
@click.option("--embeddings", "path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--points", type=int, default=20, show_default=True)
@click.option("--pairs-pos", type=int, default=10000, show_default=True)
@click.option("--pairs-neg", type=int, default=10000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def roc(path, out_path, points, pairs_pos, pairs_neg, seed):
    """Export a FAR-ascending ROC curve as CSV."""
    table = _load_table(path)
    scores = _scores(table, pairs_pos, pairs_neg, seed)
    curve = metrics.roc_curve(scores, points)
    try:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("far,tar\n")
            for far_value, tar_value in curve:
                fh.write(f"{far_value:.8e},{tar_value:.6f}\n")
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    click.echo(f"wrote {out_path}")


@creaseval.command()
@click.option("--ids", "ids_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="File with one identity label per line.")
@click.option("--ratio", required=True, help="train:test parts, e.g. 1:3.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-train", type=click.Path(dir_okay=False), default=None)
@click.option("--out-test", type=click.Path(dir_okay=False), default=None)
def split(ids_path, ratio, seed, out_train, out_test):
    """Disjoint open-set identity split; TSV to stdout or to files."""
    try:
        with open(ids_path, encoding="utf-8") as fh:
            identities = [line.strip() for line in fh if line.strip()]
        parts = ratio.split(":")
        if len(parts) != 2:
            raise ValueError(f"ratio must look like 1:3, got {ratio!r}")
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        spec = metrics.open_set_split(identities, (int(parts[0]), int(parts[1])), rng)
    except ValueError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    if out_train or out_test:
        if not (out_train and out_test):
            _fail(EXIT_VALIDATION, "--out-train and --out-test must be given together")
        for dest, ids in ((out_train, spec.train), (out_test, spec.test)):
            with open(dest, "w", encoding="utf-8", newline="\n") as fh:
                fh.writelines(f"{label}\n" for label in ids)
        click.echo(f"wrote {len(spec.train)} train / {len(spec.test)} test identities")
    else:
        for label in spec.train:
            click.echo(f"train\t{label}")
        for label in spec.test:
            click.echo(f"test\t{label}")
