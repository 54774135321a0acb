"""OLS-based matching and AP/AR over the 0.5:0.05:0.9 threshold sweep."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .postproc import Detection, OlsParams, bev_distance, ols
from .radar import CLASSES, DIFFICULTIES, RadarConfig, cfar_detect

log = logging.getLogger(__name__)

OLS_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(9))


@dataclass
class MatchResult:
    pairs: list = field(default_factory=list)  # (detection, truth, ols)
    false_positives: list = field(default_factory=list)
    false_negatives: list = field(default_factory=list)

    @property
    def tp(self) -> int:
        return len(self.pairs)


def match_frame(dets, truths, params: OlsParams, threshold: float) -> MatchResult:
    """Greedy matching: detections by descending confidence each claim the
    unclaimed same-class truth with highest OLS, if that OLS >= threshold."""
    order = sorted(range(len(dets)), key=lambda i: -dets[i].confidence)
    claimed = [False] * len(truths)
    res = MatchResult()
    for i in order:
        d = dets[i]
        best, best_j = -1.0, -1
        for j, t in enumerate(truths):
            if claimed[j] or t.class_id != d.class_id:
                continue
            o = ols(d, t, params)
            if o > best:
                best, best_j = o, j
        if best_j >= 0 and best >= threshold:
            claimed[best_j] = True
            res.pairs.append((d, truths[best_j], best))
        else:
            res.false_positives.append(d)
    res.false_negatives = [t for j, t in enumerate(truths) if not claimed[j]]
    return res


def average_precision(scored, n_truth: int) -> float | None:
    """All-point interpolated AP from ``(confidence, is_tp)`` pairs.

    Detections with equal confidence form one step of the PR curve, which
    keeps the result independent of input order.
    """
    if n_truth == 0:
        return None
    if not scored:
        return 0.0
    conf = np.array([c for c, _ in scored], dtype=float)
    tp = np.array([t for _, t in scored], dtype=float)
    order = np.argsort(-conf, kind="stable")
    conf, tp = conf[order], tp[order]
    ctp = np.cumsum(tp)
    cfp = np.cumsum(1.0 - tp)
    # last index of each block of equal confidence
    ends = np.flatnonzero(np.r_[conf[1:] != conf[:-1], True])
    recall = ctp[ends] / n_truth
    precision = ctp[ends] / (ctp[ends] + cfp[ends])
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - prev) * envelope))


@dataclass
class EvalReport:
    ap: float | None
    ar: float | None
    per_threshold: dict  # threshold -> {"ap", "ar", "tp", "fp", "n_truth"}
    per_class: dict = field(default_factory=dict)  # class -> {"ap", "ar"}
    per_split: dict = field(default_factory=dict)  # split -> EvalReport

    def to_dict(self) -> dict:
        return {
            "ap": self.ap,
            "ar": self.ar,
            "per_threshold": {f"{t:.2f}": v for t, v in self.per_threshold.items()},
            "per_class": self.per_class,
            "per_split": {k: v.to_dict() for k, v in self.per_split.items()},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _mean_or_none(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def _sweep(frames, params, thresholds):
    per_t = {}
    for t in thresholds:
        scored, n_truth, fp = [], 0, 0
        for dets, truths in frames:
            m = match_frame(dets, truths, params, t)
            scored += [(d.confidence, True) for d, _, _ in m.pairs]
            scored += [(d.confidence, False) for d in m.false_positives]
            n_truth += len(truths)
            fp += len(m.false_positives)
        tp = sum(1 for _, hit in scored if hit)
        per_t[t] = {
            "ap": average_precision(scored, n_truth),
            "ar": tp / n_truth if n_truth else None,
            "tp": tp,
            "fp": fp,
            "n_truth": n_truth,
        }
    return per_t


def ap_ar_sweep(frames, params: OlsParams | None = None,
                thresholds=OLS_THRESHOLDS, per_class: bool = True) -> EvalReport:
    """AP and AR averaged over OLS thresholds.

    ``frames`` is a sequence of ``(detections, truths)`` pairs, one per frame.
    AP pools all classes into one PR curve; AR is the recall of the full
    detection set. Both are ``None`` when there is no ground truth at all.
    """
    params = params or OlsParams()
    frames = [(list(d), list(t)) for d, t in frames]
    if not frames:
        raise ValueError("ap_ar_sweep needs at least one frame")
    per_t = _sweep(frames, params, thresholds)
    if per_t[thresholds[0]]["n_truth"] == 0:
        log.warning("no ground truth objects: AP/AR undefined")
    rep = EvalReport(_mean_or_none(v["ap"] for v in per_t.values()),
                     _mean_or_none(v["ar"] for v in per_t.values()), per_t)
    if per_class:
        for cls in CLASSES:
            sub = [([d for d in ds if d.class_id == cls], [t for t in ts if t.class_id == cls])
                   for ds, ts in frames]
            pt = _sweep(sub, params, thresholds)
            rep.per_class[cls] = {"ap": _mean_or_none(v["ap"] for v in pt.values()),
                                  "ar": _mean_or_none(v["ar"] for v in pt.values())}
    return rep


def split_report(frames_by_split: dict, params: OlsParams | None = None,
                 thresholds=OLS_THRESHOLDS) -> EvalReport:
    """Overall report with independent per-difficulty sweeps in ``per_split``.

    ``frames_by_split`` maps a difficulty name to its ``(detections, truths)`` frames.
    Empty splits are left out.
    """
    all_frames = []
    reports = {}
    for split, frames in frames_by_split.items():
        frames = list(frames)
        if not frames:
            log.info("split %r is empty; omitted", split)
            continue
        reports[split] = ap_ar_sweep(frames, params, thresholds)
        all_frames += frames
    overall = ap_ar_sweep(all_frames, params, thresholds)
    overall.per_split = {k: reports[k] for k in sorted(reports, key=_split_rank)}
    return overall


def _split_rank(name):
    return DIFFICULTIES.index(name) if name in DIFFICULTIES else len(DIFFICULTIES)


def cfar_baseline(ramaps, cfg: RadarConfig, truths_per_frame=None, guard=2, train=4,
                  scale=3.0, fallback_class: str = "car") -> list[list[Detection]]:
    """CFAR peaks labelled by an oracle classifier: the class of the nearest truth.

    Confidence is ``1 - noise_floor / magnitude`` with the frame's median
    magnitude as noise floor. Frames without truth use ``fallback_class``.
    """
    out = []
    rng_c, az_c = cfg.range_centers(), cfg.azimuth_centers()
    for f, frame in enumerate(np.asarray(ramaps)):
        floor = float(np.median(np.abs(frame)))
        truths = list(truths_per_frame[f]) if truths_per_frame is not None else []
        dets = []
        for r, b, mag in cfar_detect(frame, guard, train, scale):
            probe = Detection(fallback_class, float(rng_c[r]), float(az_c[b]))
            cls = (min(truths, key=lambda t: bev_distance(probe, t)).class_id
                   if truths else fallback_class)
            conf = 1.0 - floor / mag if mag > 0 else 0.0
            dets.append(Detection(cls, probe.range_m, probe.azimuth_rad,
                                  float(min(max(conf, 0.0), 1.0)), f))
        out.append(dets)
    return out


def format_table(rows: dict, splits=("overall",) + DIFFICULTIES) -> str:
    """Aligned text table: one row per method, AP/AR columns per split (percent).

    ``rows`` maps a method name to an :class:`EvalReport` (with ``per_split``).
    """
    def cell(v):
        return "   -  " if v is None else f"{100 * v:6.2f}"

    name_w = max([len("Method")] + [len(k) for k in rows])
    head1 = " " * name_w + " |" + "|".join(f" {s.capitalize():^13} " for s in splits)
    head2 = "Method".ljust(name_w) + " |" + "|".join("   AP     AR   " for _ in splits)
    lines = [head1, head2, "-" * len(head2)]
    for name, rep in rows.items():
        parts = []
        for s in splits:
            r = rep if s == "overall" else rep.per_split.get(s)
            ap, ar = (r.ap, r.ar) if r is not None else (None, None)
            parts.append(f" {cell(ap)} {cell(ar)} ")
        lines.append(name.ljust(name_w) + " |" + "|".join(parts))
    return "\n".join(lines)


def truths_from_records(records) -> list[Detection]:
    return [Detection(r["class"], float(r["range_m"]), float(r["azimuth_rad"]), 1.0,
                      int(r["frame"])) for r in records]


def group_by_frame(items, n_frames: int) -> list[list]:
    out = [[] for _ in range(n_frames)]
    for it in items:
        f = it.frame_index
        if 0 <= f < n_frames:
            out[f].append(it)
    return out


def localization_errors(truths, annos, params: OlsParams | None = None,
                        min_ols: float = 0.5) -> np.ndarray:
    """Absolute range errors of matched truth objects.

    Each truth is paired with the same-class annotation of its frame that has
    the highest OLS with it; pairs below ``min_ols`` count as misses and are
    left out (the fraction matched is ``len(result) / len(truths)``).
    """
    params = params or OlsParams()
    by_frame: dict = {}
    for a in annos:
        by_frame.setdefault(a.frame_index, []).append(a)
    errs = []
    for t in truths:
        cands = [a for a in by_frame.get(t.frame_index, []) if a.class_id == t.class_id]
        if not cands:
            continue
        scores = [ols(a, t, params) for a in cands]
        best = int(np.argmax(scores))
        if scores[best] >= min_ols:
            errs.append(abs(cands[best].range_m - t.range_m))
    return np.asarray(errs)
