"""``rodkit`` command line: simulate, annotate, train, infer, eval, plot.

Exit codes: 0 success, 2 configuration or I/O error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path


from . import dataset as ds
from .config import PipelineConfig, load_config
from .evaluate import cfar_baseline, format_table, split_report
from .exceptions import ConfigError, NumericalError
from .io import load_checkpoint, read_jsonl, save_checkpoint, write_jsonl, write_pgm, write_ppm
from .plotting import confmap_image, detection_overlay, ramap_image
from .postproc import Detection
from .radar import DIFFICULTIES

log = logging.getLogger("rodkit")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def resolve_jobs(value) -> int:
    """``--jobs`` if given, else ``RODKIT_JOBS``, else 1."""
    if value is None:
        env = os.environ.get("RODKIT_JOBS", "").strip()
        if not env:
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"RODKIT_JOBS must be an integer, got {env!r}") from None
    if value < 1:
        raise ConfigError("--jobs must be >= 1")
    return value


def _map(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*items)))


def _guard_output(path: Path, force: bool):
    if path.exists() and not force:
        raise ConfigError(f"{path} exists; pass --force to overwrite")


# -- simulate -------------------------------------------------------------------

def _simulate_one(pcfg: PipelineConfig, out: str, seed: int, force: bool):
    seq = ds.simulate_sequence(pcfg, seed, name=f"seq_{seed:06d}")
    ds.write_sequence(out, seq, pcfg, force=force)
    return seq.difficulty


def cmd_simulate(args, pcfg: PipelineConfig) -> int:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".rodkit_write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"cannot write to {out}: {exc}") from exc
    seeds = [args.seed + i for i in range(args.sequences)]
    for s in seeds:
        d = out / f"seq_{s:06d}"
        if d.exists() and not args.force:
            raise ConfigError(f"{d} exists; pass --force to overwrite")
    diffs = _map(_simulate_one, [(pcfg, str(out), s, True) for s in seeds], args.jobs)
    for name in DIFFICULTIES:
        print(f"{name:<7} {diffs.count(name)}")
    return EXIT_OK


# -- annotate -------------------------------------------------------------------

def _annotate_one(pcfg: PipelineConfig, seq_dir: str, mode: str):
    meta = ds.read_meta(seq_dir)
    truth = read_jsonl(Path(seq_dir) / "truth.jsonl")
    if mode == "co":
        annos = ds.co_annotations(pcfg, truth, meta["seed"])
    else:
        if not (Path(seq_dir) / "ramaps.bin").is_file():
            raise ConfigError(f"{seq_dir}: missing ramaps.bin (needed for crf mode)")
        seq = ds.load_sequence(seq_dir)
        annos = ds.crf_annotations(pcfg, seq.ramaps, truth, meta["seed"])
    write_jsonl(Path(seq_dir) / f"annotations_{mode}.jsonl", [a.to_record() for a in annos])
    return len(annos)


def cmd_annotate(args, pcfg: PipelineConfig) -> int:
    dirs = ds.sequence_dirs(args.data)
    for d in dirs:
        ds.read_meta(d, pcfg)
        _guard_output(d / f"annotations_{args.mode}.jsonl", args.force)
    counts = _map(_annotate_one, [(pcfg, str(d), args.mode) for d in dirs], args.jobs)
    print(f"{args.mode}: {sum(counts)} annotations over {len(dirs)} sequences")
    return EXIT_OK


# -- train ------------------------------------------------------------------------

def cmd_train(args, pcfg: PipelineConfig) -> int:
    out = Path(args.out)
    _guard_output(out, args.force)
    spec = replace(pcfg.model, variant=args.variant) if args.variant else pcfg.model
    tcfg = pcfg.train
    if args.epochs is not None:
        tcfg = replace(tcfg, epochs=args.epochs)
    if args.lr is not None:
        tcfg = replace(tcfg, learning_rate=args.lr)
    pcfg = replace(pcfg, model=spec, train=tcfg)
    ramaps, confmaps = [], []
    for d in ds.sequence_dirs(args.data):
        seq = ds.load_sequence(d, pcfg)
        ramaps.append(seq.ramaps)
        confmaps.append(ds.confmap_sequence(pcfg, ds.load_annotations(d, args.supervision),
                                            seq.num_frames))
    if not ramaps:
        raise ConfigError(f"no sequences under {args.data}")
    print(f"training {spec.variant} on {len(ramaps)} sequences ({args.supervision} supervision)")
    model, losses = ds.fit_model(
        pcfg, ramaps, confmaps, args.train_stride,
        on_epoch=lambda e, l, m: print(f"epoch {e:3d}  loss {l:.3f}", flush=True))
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, model)
    write_jsonl(str(out) + ".loss.jsonl", [{"epoch": i, "loss": l} for i, l in enumerate(losses)])
    return EXIT_OK


# -- infer --------------------------------------------------------------------------

def _infer_all(model, pcfg, seqs, stride):
    dets, frames, total_ms = {}, {}, 0.0
    for seq in seqs:
        d, ms = ds.detect_sequence(model, pcfg, seq.ramaps, stride)
        total_ms += ms * seq.num_frames
        dets[seq.name] = d
        frames.setdefault(seq.difficulty, []).extend(zip(d, ds.truth_frames(seq)))
    n = sum(s.num_frames for s in seqs)
    return dets, frames, total_ms / max(n, 1)


def performance_table(model, pcfg: PipelineConfig, seqs):
    """Rows of ``(stride, ap, ms_per_frame)`` for strides tau, tau/2 and tau/4."""
    tau = model.spec.snippet_len
    rows = []
    for stride in sorted({tau, max(tau // 2, 1), max(tau // 4, 1)}, reverse=True):
        _, frames, ms = _infer_all(model, pcfg, seqs, stride)
        rows.append((stride, split_report(frames).ap, ms))
    return rows


def format_performance(rows) -> str:
    lines = ["stride      AP   ms/frame", "-" * 25]
    for stride, ap, ms in rows:
        ap_s = "    -" if ap is None else f"{100 * ap:6.2f}"
        lines.append(f"{stride:6d}  {ap_s}  {ms:9.2f}")
    return "\n".join(lines)


def cmd_infer(args, pcfg: PipelineConfig) -> int:
    out = Path(args.out)
    _guard_output(out, args.force)
    model = load_checkpoint(args.ckpt)
    pcfg = replace(pcfg, model=model.spec)
    seqs = [ds.load_sequence(d, pcfg) for d in ds.sequence_dirs(args.data)]
    stride = args.stride or pcfg.stride
    dets, _, ms = _infer_all(model, pcfg, seqs, stride)
    records = []
    for name, per_frame in dets.items():
        for frame in per_frame:
            for d in frame:
                records.append({"sequence": name, **d.to_record()})
    write_jsonl(out, records)
    print(f"{len(records)} detections, stride {stride}, {ms:.2f} ms/frame")
    if args.perf:
        table = format_performance(performance_table(model, pcfg, seqs))
        Path(str(out) + ".perf.txt").write_text(table + "\n")
        print(table)
    return EXIT_OK


# -- eval ----------------------------------------------------------------------------

def cmd_eval(args, pcfg: PipelineConfig) -> int:
    report = Path(args.report)
    _guard_output(report.with_suffix(".json"), args.force)
    by_seq: dict = {}
    for rec in read_jsonl(args.dets):
        by_seq.setdefault(rec.get("sequence"), []).append(Detection.from_record(rec))
    frames, base = {}, {}
    for d in ds.sequence_dirs(args.data):
        seq = ds.load_sequence(d, pcfg)
        truth = ds.truth_frames(seq)
        dets = ds.group_by_frame(by_seq.get(seq.name, []), seq.num_frames)
        frames.setdefault(seq.difficulty, []).extend(zip(dets, truth))
        if args.baseline:
            a = pcfg.annotate
            b = cfar_baseline(seq.ramaps, pcfg.radar, truth, a.cfar_guard, a.cfar_train,
                              a.cfar_scale)
            base.setdefault(seq.difficulty, []).extend(zip(b, truth))
    rows = {"pipeline": split_report(frames)}
    if args.baseline:
        rows["cfar_baseline"] = split_report(base)
    report.parent.mkdir(parents=True, exist_ok=True)
    report.with_suffix(".json").write_text(
        json.dumps({k: v.to_dict() for k, v in rows.items()}, indent=2))
    table = format_table(rows)
    report.with_suffix(".txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


# -- plot ----------------------------------------------------------------------------

def cmd_plot(args, pcfg: PipelineConfig) -> int:
    out = Path(args.out)
    _guard_output(out, args.force)
    dirs = ds.sequence_dirs(args.data)
    names = [d.name for d in dirs]
    if args.sequence is None:
        seq_dir = dirs[0] if dirs else None
    elif args.sequence in names:
        seq_dir = dirs[names.index(args.sequence)]
    else:
        seq_dir = None
    if seq_dir is None:
        raise ConfigError(f"sequence {args.sequence!r} not found under {args.data}")
    seq = ds.load_sequence(seq_dir)
    if not 0 <= args.frame < seq.num_frames:
        raise ConfigError(f"frame {args.frame} outside 0..{seq.num_frames - 1}")
    cells = seq.ramaps[args.frame]
    if args.what == "ramap":
        write_pgm(out, ramap_image(cells))
    elif args.what == "confmap":
        if args.ckpt:
            model = load_checkpoint(args.ckpt)
            conf = ds.predict_confmaps(model, replace(pcfg, model=model.spec), seq.ramaps)
        else:
            annos = ds.load_annotations(seq_dir, args.supervision)
            conf = ds.confmap_sequence(pcfg, annos, seq.num_frames)
        write_ppm(out, confmap_image(conf[args.frame]))
    else:
        if args.dets:
            dets = [Detection.from_record(r) for r in read_jsonl(args.dets)
                    if r.get("sequence") in (None, seq.name) and r["frame"] == args.frame]
        else:
            dets = [d for d in ds.truth_frames(seq)[args.frame]]
        write_ppm(out, detection_overlay(cells, dets, pcfg.radar))
    return EXIT_OK


# -- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rodkit", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="INI file with [section] blocks")
    p.add_argument("--jobs", type=int, default=None,
                   help="worker processes (default: $RODKIT_JOBS or 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write synthetic sequences")
    s.add_argument("--out", required=True)
    s.add_argument("--sequences", type=int, default=30)
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("annotate", help="camera-only or fused annotations")
    s.add_argument("--data", required=True)
    s.add_argument("--mode", choices=("co", "crf"), required=True)

    s = sub.add_parser("train", help="train a RODNet variant")
    s.add_argument("--data", required=True)
    s.add_argument("--supervision", choices=ds.SUPERVISIONS, default="crf")
    s.add_argument("--variant", type=str.lower, choices=("cdc", "hg", "hgwi"), default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--lr", type=float, default=None)
    s.add_argument("--train-stride", type=int, default=None,
                   help="window step for training snippets (default: snippet length)")

    s = sub.add_parser("infer", help="detect objects with a checkpoint")
    s.add_argument("--data", required=True)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--stride", type=int, default=None)
    s.add_argument("--out", default="detections.jsonl")
    s.add_argument("--perf", action="store_true",
                   help="also report AP and latency for strides tau, tau/2, tau/4")

    s = sub.add_parser("eval", help="score detections against ground truth")
    s.add_argument("--data", required=True)
    s.add_argument("--dets", required=True)
    s.add_argument("--report", required=True, help="output prefix; .json and .txt are written")
    s.add_argument("--baseline", action="store_true", help="add the CFAR baseline row")

    s = sub.add_parser("plot", help="render a frame as a portable pixmap")
    s.add_argument("--data", required=True)
    s.add_argument("--sequence", default=None)
    s.add_argument("--what", choices=("ramap", "confmap", "dets"), required=True)
    s.add_argument("--frame", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--ckpt", default=None)
    s.add_argument("--dets", default=None)
    s.add_argument("--supervision", choices=ds.SUPERVISIONS, default="crf")

    for name, sp in sub.choices.items():
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")
    return p


COMMANDS = {"simulate": cmd_simulate, "annotate": cmd_annotate, "train": cmd_train,
            "infer": cmd_infer, "eval": cmd_eval, "plot": cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.jobs = resolve_jobs(args.jobs)
        pcfg = load_config(args.config)
        return COMMANDS[args.command](args, pcfg)
    except NumericalError as exc:
        print(f"rodkit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, OSError, ValueError, KeyError) as exc:
        print(f"rodkit: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
