"""Sequence generation, annotation, training-set assembly and inference.

A dataset is a directory of per-sequence subdirectories::

    seq_0000/ramaps.bin             complex RAMaps, one per frame
    seq_0000/truth.jsonl            ground-truth objects per frame
    seq_0000/annotations_co.jsonl   camera-only annotations
    seq_0000/annotations_crf.jsonl  camera-radar fusion annotations
    seq_0000/meta.json              difficulty, seed and data hash
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .crf import Annotation, crf_annotate_frame, gen_confmap, simulate_co_annotations
from .evaluate import group_by_frame, truths_from_records
from .exceptions import ConfigError
from .io import read_jsonl, read_ramaps, write_jsonl, write_ramaps
from .nn.estimator import InputNorm, ramap_to_input
from .nn.model import build_model, forward
from .nn.train import train
from .postproc import Detection, OlsParams, find_peaks, l_nms, merge_confmaps, window_starts
from .radar import DIFFICULTIES, random_scene, synth_sequence

SUPERVISIONS = ("co", "crf", "gt")


@dataclass
class Sequence:
    name: str
    ramaps: np.ndarray
    truth: list
    difficulty: str
    seed: int

    @property
    def num_frames(self) -> int:
        return len(self.ramaps)


def difficulty_for_seed(seed: int) -> str:
    return DIFFICULTIES[int(np.random.default_rng([seed, 1]).integers(len(DIFFICULTIES)))]


def simulate_sequence(pcfg: PipelineConfig, seed: int, difficulty: str | None = None,
                      name: str | None = None) -> Sequence:
    difficulty = difficulty or difficulty_for_seed(seed)
    scene = random_scene(pcfg.radar, difficulty, np.random.default_rng(seed),
                         pcfg.simulate.settings())
    ramaps = synth_sequence(scene, pcfg.radar, rng_seed=seed).astype(np.complex64)
    return Sequence(name or f"seq_{seed}", ramaps, scene.truth(pcfg.radar), difficulty, seed)


def co_annotations(pcfg: PipelineConfig, truth, seed: int) -> list[Annotation]:
    cams = simulate_co_annotations(truth, pcfg.annotate.co_noise, rng_seed=seed)
    return [Annotation(c.class_id, c.range_m, c.azimuth_rad, c.depth_confidence,
                       c.frame_index, "CO") for c in cams]


def crf_annotations(pcfg: PipelineConfig, ramaps, truth, seed: int) -> list[Annotation]:
    a = pcfg.annotate
    cams = simulate_co_annotations(truth, a.co_noise, rng_seed=seed)
    per_frame = group_by_frame(cams, len(ramaps))
    out = []
    for f, frame in enumerate(ramaps):
        out += crf_annotate_frame(frame, per_frame[f], pcfg.classes, pcfg.radar,
                                  guard=a.cfar_guard, train=a.cfar_train, scale=a.cfar_scale,
                                  min_confidence=a.min_confidence,
                                  interpret_as_std=a.interpret_as_std, frame_index=f)
    return out


# -- on-disk layout -------------------------------------------------------------

def write_sequence(root, seq: Sequence, pcfg: PipelineConfig, force: bool = False) -> Path:
    d = Path(root) / seq.name
    if d.exists() and any(d.iterdir()) and not force:
        raise FileExistsError(f"{d} exists; pass force=True to overwrite")
    d.mkdir(parents=True, exist_ok=True)
    write_ramaps(d / "ramaps.bin", seq.ramaps)
    write_jsonl(d / "truth.jsonl", seq.truth)
    meta = {"difficulty": seq.difficulty, "seed": seq.seed, "num_frames": seq.num_frames,
            "config_hash": pcfg.data_hash()}
    (d / "meta.json").write_text(json.dumps(meta, indent=2))
    return d


def sequence_dirs(root) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"dataset directory {root} does not exist")
    return sorted(p for p in root.iterdir() if (p / "meta.json").is_file())


def read_meta(seq_dir, pcfg: PipelineConfig | None = None) -> dict:
    meta = json.loads((Path(seq_dir) / "meta.json").read_text())
    if pcfg is not None and meta.get("config_hash") != pcfg.data_hash():
        raise ConfigError(f"{seq_dir}: config hash {meta.get('config_hash')} does not match "
                          f"the loaded configuration ({pcfg.data_hash()})")
    return meta


def load_sequence(seq_dir, pcfg: PipelineConfig | None = None) -> Sequence:
    seq_dir = Path(seq_dir)
    meta = read_meta(seq_dir, pcfg)
    if not (seq_dir / "ramaps.bin").is_file():
        raise ConfigError(f"{seq_dir}: missing ramaps.bin")
    return Sequence(seq_dir.name, read_ramaps(seq_dir / "ramaps.bin"),
                    read_jsonl(seq_dir / "truth.jsonl"), meta["difficulty"], meta["seed"])


def load_annotations(seq_dir, supervision: str) -> list[Annotation]:
    if supervision == "gt":
        return [Annotation(r["class"], r["range_m"], r["azimuth_rad"], 1.0, r["frame"], "GT")
                for r in read_jsonl(Path(seq_dir) / "truth.jsonl")]
    path = Path(seq_dir) / f"annotations_{supervision}.jsonl"
    if not path.is_file():
        raise ConfigError(f"{path} missing; run annotate --mode {supervision} first")
    return [Annotation.from_record(r) for r in read_jsonl(path)]


# -- training pairs and inference ---------------------------------------------------

def confmap_sequence(pcfg: PipelineConfig, annos, n_frames: int) -> np.ndarray:
    """ConfMaps for every frame, ``(n_frames, C, R, A)``."""
    per_frame = group_by_frame(annos, n_frames)
    return np.stack([gen_confmap(a, pcfg.classes, pcfg.radar) for a in per_frame])


def snippet_pairs(pcfg: PipelineConfig, ramaps, confmaps, stride: int | None = None,
                  norm=None):
    """Network inputs ``(n, 2, tau, R, A)`` and targets ``(n, C, tau, R, A)``.

    ``norm`` is an :class:`InputNorm` (required for ``dataset-std``); the
    config's mode is used when it is omitted.
    """
    tau = pcfg.model.snippet_len
    norm = norm or pcfg.train.normalization
    xs, ys = [], []
    for s in window_starts(len(ramaps), tau, stride or tau):
        xs.append(ramap_to_input(ramaps[s: s + tau], norm))
        ys.append(np.moveaxis(confmaps[s: s + tau], 0, 1)[None])
    return np.concatenate(xs).astype(np.float32), np.concatenate(ys).astype(np.float32)


def fit_model(pcfg: PipelineConfig, ramap_seqs, confmap_seqs, stride: int | None = None,
              on_epoch=None):
    """Fit the input normalization, cut snippets, train a fresh model.

    ``ramap_seqs`` and ``confmap_seqs`` are parallel lists of per-sequence
    arrays ``(n_frames, R, A)`` and ``(n_frames, C, R, A)``. Returns
    ``(model, losses)``; the fitted normalization is attached to the model.
    """
    norm = InputNorm.fit(ramap_seqs, pcfg.train.normalization)
    xs, ys = [], []
    for z, cm in zip(ramap_seqs, confmap_seqs):
        x, y = snippet_pairs(pcfg, z, cm, stride, norm)
        xs.append(x)
        ys.append(y)
    if not xs:
        raise ConfigError("no training sequences")
    model = build_model(pcfg.model, pcfg.train.rng_seed, head_prior=pcfg.head_prior)
    model.input_norm = norm
    return train(model, np.concatenate(xs), np.concatenate(ys), pcfg.train, on_epoch)


def predict_confmaps(model, pcfg: PipelineConfig, ramaps, stride: int | None = None,
                     batch_size: int = 4) -> np.ndarray:
    """Sliding-window prediction merged to ``(n_frames, C, R, A)``."""
    tau = model.spec.snippet_len
    starts = window_starts(len(ramaps), tau, stride or pcfg.stride)
    norm = model.input_norm or pcfg.train.normalization
    x = np.concatenate([ramap_to_input(ramaps[s: s + tau], norm) for s in starts])
    dtype = next(iter(model.tensors.values())).dtype
    windows = []
    for i in range(0, len(starts), batch_size):
        probs, _ = forward(model, x[i: i + batch_size].astype(dtype))
        for s, p in zip(starts[i: i + batch_size], probs):
            windows.append((s, np.moveaxis(p, 1, 0)))
    return merge_confmaps(windows, len(ramaps))


def detect_sequence(model, pcfg: PipelineConfig, ramaps, stride: int | None = None):
    """Detections per frame and the wall-clock milliseconds spent per frame."""
    t0 = time.perf_counter()
    conf = predict_confmaps(model, pcfg, ramaps, stride)
    params = OlsParams.from_class_params(pcfg.classes)
    out = []
    for f, c in enumerate(conf):
        peaks = find_peaks(c, pcfg.radar, pcfg.postproc.min_confidence, f)
        out.append(l_nms(peaks, params, pcfg.postproc.ols_threshold))
    ms = 1000 * (time.perf_counter() - t0) / len(ramaps)
    return out, ms


def truth_frames(seq: Sequence) -> list[list[Detection]]:
    return group_by_frame(truths_from_records(seq.truth), seq.num_frames)
