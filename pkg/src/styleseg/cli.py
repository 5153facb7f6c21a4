"""Command-line pipeline driver.

Subcommands cover the full workflow: synth-data, train-diffae,
train-style, stylize, train-seg, evaluate, report. Every command takes
--config/--seed/--out (plus repeatable --set key=value overrides),
writes its resolved configuration into the output directory, and is
byte-deterministic given the same inputs and seed.

Exit codes: 0 success, 1 user or input error, 2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np
import torch

from . import checkpoints, config as cfgmod
from .data import Sample, generate_synthetic, images_array, load_dataset, load_image, masks_array, save_images
from .diffusion import train_diffae
from .embedding import train_embedding
from .metrics import CSV_COLUMNS, MetricReport, evaluate_all, write_mean_csv, write_report_csv
from .segmentation import predict_mask, train_segmenter
from .style import stylize_images, train_style_mapper


def _write_history_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([f"{v:.10f}" if isinstance(v, float) else v for v in row])


def _image_size(cfg) -> int:
    return int(cfg.get("data.image_size"))


def cmd_synth_data(cfg, out: Path) -> None:
    source, target = generate_synthetic(cfgmod.synth_config(cfg))
    src_manifest = save_images(source, out / "source")
    tgt_manifest = save_images(target, out / "target")
    print(f"wrote {len(source)} source samples ({src_manifest.checksum[:12]}) to {out / 'source'}")
    print(f"wrote {len(target)} target samples ({tgt_manifest.checksum[:12]}) to {out / 'target'}")


def _load_corpus(cfg, key: str) -> np.ndarray:
    """Images from one or more comma-separated dataset roots."""
    raw = str(cfg.get(key))
    if not raw:
        raise ValueError(f"config key {key} must be set for this command")
    samples = []
    for part in raw.split(","):
        samples.extend(load_dataset(part.strip(), expected_size=_image_size(cfg)))
    return images_array(samples)


def cmd_train_diffae(cfg, out: Path) -> None:
    images = _load_corpus(cfg, "paths.images")
    model, history = train_diffae(torch.as_tensor(images), cfgmod.diffae_config(cfg))
    checkpoints.save_diffae(model, out / "diffae.npz")
    _write_history_csv(out / "history.csv", ("step", "loss"), list(enumerate(history)))
    print(f"trained diffusion autoencoder on {len(images)} images; final loss {history[-1]:.6f}")
    print(f"checkpoint: {out / 'diffae.npz'}")


def _load_or_train_diffae(cfg, out: Path):
    path = cfg.path("paths.diffae")
    if path is not None and path.exists():
        return checkpoints.load_diffae(path)
    if not bool(cfg.get("style.train_diffae_if_missing")):
        raise FileNotFoundError(
            f"source model checkpoint not found: {path if path is not None else '(paths.diffae unset)'}"
        )
    images = _load_corpus(cfg, "paths.images")
    model, _ = train_diffae(torch.as_tensor(images), cfgmod.diffae_config(cfg))
    checkpoints.save_diffae(model, out / "diffae.npz")
    return model


def cmd_train_style(cfg, out: Path) -> None:
    size = _image_size(cfg)
    x_source = torch.as_tensor(load_image(cfg.path("paths.source_image", required=True), size))
    y_target = torch.as_tensor(load_image(cfg.path("paths.target_image", required=True), size))
    source_model = _load_or_train_diffae(cfg, out)
    embedding = None
    corpus_dir = cfg.path("paths.embed_corpus")
    if corpus_dir is not None:
        corpus = load_dataset(corpus_dir, expected_size=size)
        embedding = train_embedding(torch.as_tensor(images_array(corpus)), cfgmod.embed_config(cfg))
    mapper = train_style_mapper(x_source, y_target, source_model, cfgmod.style_config(cfg), embedding=embedding)
    checkpoints.save_mapper(mapper, out / "mapper.npz")
    rows = [
        (i, rec["adv"], rec["cycle"], rec["spn"], rec["total"])
        for i, rec in enumerate(mapper.loss_history)
    ]
    _write_history_csv(out / "history.csv", ("iteration", "adv", "cycle", "spn", "total"), rows)
    first, last = mapper.loss_history[0]["total"], mapper.loss_history[-1]["total"]
    print(f"trained style mapper for {len(rows)} iterations; total loss {first:.6f} -> {last:.6f}")
    print(f"checkpoint: {out / 'mapper.npz'}")


def _load_mapper(cfg):
    source_model = checkpoints.load_diffae(cfg.path("paths.diffae", required=True))
    return checkpoints.load_mapper(cfg.path("paths.mapper", required=True), source_model)


def cmd_stylize(cfg, out: Path) -> None:
    mapper = _load_mapper(cfg)
    samples = load_dataset(cfg.path("paths.input_dir", required=True), expected_size=_image_size(cfg))
    images = torch.as_tensor(images_array(samples))
    styled = stylize_images(images, mapper, batch_size=int(cfg.get("stylize.batch_size")))
    styled_samples = [
        Sample(id=s.id, image=np.asarray(img), mask=s.mask, domain_tag=s.domain_tag)
        for s, img in zip(samples, styled)
    ]
    manifest = save_images(styled_samples, out)
    print(f"stylized {len(styled_samples)} images ({manifest.checksum[:12]}) to {out}")


def cmd_train_seg(cfg, out: Path) -> None:
    samples = load_dataset(cfg.path("paths.train_dir", required=True), expected_size=_image_size(cfg))
    images = torch.as_tensor(images_array(samples))
    masks = torch.as_tensor(masks_array(samples))
    model, history = train_segmenter(images, masks, cfgmod.seg_config(cfg))
    checkpoints.save_segmenter(model, cfgmod.seg_config(cfg), out / "segmenter.npz")
    _write_history_csv(out / "history.csv", ("epoch", "loss"), list(enumerate(history)))
    print(f"trained segmenter on {len(samples)} samples; final epoch loss {history[-1]:.6f}")
    print(f"checkpoint: {out / 'segmenter.npz'}")


def cmd_evaluate(cfg, out: Path) -> None:
    model, _ = checkpoints.load_segmenter(cfg.path("paths.segmenter", required=True))
    samples = load_dataset(cfg.path("paths.test_dir", required=True), expected_size=_image_size(cfg))
    missing = [s.id for s in samples if s.mask is None]
    if missing:
        raise ValueError(f"test samples without masks: {missing[:5]}")
    threshold = float(cfg.get("eval.threshold"))
    pred_dir = out / "predictions"
    pred_dir.mkdir(parents=True, exist_ok=True)
    ids, reports = [], []
    from PIL import Image

    for s in samples:
        prob = model.predict_prob(torch.as_tensor(s.image))
        reports.append(evaluate_all(prob, s.mask, threshold=threshold))
        ids.append(s.id)
        quant = np.clip(np.round(prob * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(quant, mode="L").save(pred_dir / f"{s.id}.png")
    write_report_csv(out / "per_sample.csv", ids, reports)
    mean = MetricReport.mean(reports)
    write_mean_csv(out / "mean.csv", mean)
    print(f"evaluated {len(ids)} samples; mean dice {mean.dice:.4f}, mae {mean.mae:.4f}")


def _read_eval_csv(path: Path) -> MetricReport:
    """Mean or per-sample evaluation CSV -> mean MetricReport."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header = tuple(rows[0])
    if header == CSV_COLUMNS:
        data_rows = rows[1:]
        offset = 0
    elif header == ("id",) + CSV_COLUMNS:
        data_rows = rows[1:]
        offset = 1
    else:
        raise ValueError(f"{path}: unexpected CSV columns {header}, want {CSV_COLUMNS}")
    if not data_rows:
        raise ValueError(f"{path}: no data rows")
    reports = [MetricReport(*[float(v) for v in row[offset:]]) for row in data_rows]
    return MetricReport.mean(reports)


def cmd_report(cfg, out: Path) -> None:
    raw = str(cfg.get("paths.eval_csvs"))
    if not raw:
        raise ValueError("config key paths.eval_csvs must be set for this command")
    paths = [Path(p.strip()) for p in raw.split(",")]
    for p in paths:
        if not p.is_file():
            raise FileNotFoundError(f"evaluation CSV not found: {p}")
    names_raw = str(cfg.get("report.names"))
    if names_raw:
        names = [n.strip() for n in names_raw.split(",")]
        if len(names) != len(paths):
            raise ValueError(f"report.names lists {len(names)} names for {len(paths)} CSVs")
    else:
        names = [p.parent.name or p.stem for p in paths]
    reports = [_read_eval_csv(p) for p in paths]

    with open(out / "comparison.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("name",) + CSV_COLUMNS)
        for name, rep in zip(names, reports):
            writer.writerow([name] + [f"{v:.10f}" for v in rep.values()])

    widths = [max(len("name"), *(len(n) for n in names))] + [12] * len(CSV_COLUMNS)
    lines = ["  ".join(h.ljust(w) for h, w in zip(("name",) + CSV_COLUMNS, widths))]
    for name, rep in zip(names, reports):
        cells = [name.ljust(widths[0])] + [f"{v:.4f}".ljust(12) for v in rep.values()]
        lines.append("  ".join(cells))
    (out / "comparison.txt").write_text("\n".join(line.rstrip() for line in lines) + "\n")

    radar_columns = ("name", "dice", "iou", "specificity", "fbw", "s_alpha", "e_phi_max", "one_minus_mae")
    with open(out / "radar.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(radar_columns)
        for name, rep in zip(names, reports):
            axes = list(rep.values())[:-1] + [1.0 - rep.mae]
            writer.writerow([name] + [f"{v:.10f}" for v in axes])
    print(f"compared {len(names)} runs; wrote comparison.csv, comparison.txt, radar.csv to {out}")


_COMMANDS = {
    "synth-data": (cmd_synth_data, "generate the paired synthetic source/target datasets"),
    "train-diffae": (cmd_train_diffae, "train the diffusion autoencoder on an image directory"),
    "train-style": (cmd_train_style, "fit the one-shot source-to-target style mapper"),
    "stylize": (cmd_stylize, "apply a trained style mapper to an image directory"),
    "train-seg": (cmd_train_seg, "train the segmentation network on a labeled directory"),
    "evaluate": (cmd_evaluate, "run a segmenter over a labeled test directory and write metric CSVs"),
    "report": (cmd_report, "combine evaluation CSVs into comparison and radar-axis tables"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="key=value config file")
    common.add_argument("--seed", type=int, default=None, help="override the seed config key")
    common.add_argument("--out", default=None, help="output directory (default runs/<command>)")
    common.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key"
    )
    parser = argparse.ArgumentParser(prog="styleseg", description="structure-preserving stylization pipeline")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text) in _COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        code = e.code if isinstance(e.code, int) else 1
        return 0 if code == 0 else 1
    try:
        cfg = cfgmod.load_config(args.config, args.set, args.seed)
        out = Path(args.out) if args.out else Path("runs") / args.command
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(cfg.serialize())
        _COMMANDS[args.command][0](cfg, out)
        return 0
    except (ValueError, KeyError, FileNotFoundError, NotADirectoryError, IsADirectoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
