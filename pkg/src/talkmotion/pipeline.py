"""End-to-end orchestration behind the command-line tool.

Every stage is seeded from ``cfg.run.seed`` and writes its artifacts into
a run directory; ``manifest.json`` lists each artifact with its SHA-256 so
two runs can be compared file by file.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from . import io as tio
from .config import RunConfig
from .dpse import DualPathSpeechEncoder
from .exceptions import AlignmentError
from .io import AudioClip, MotionSequence, TranscriptTokens, decompose_pose
from .kel import (expression_variation, extract_targets, gaussian_smooth, keyframe_threshold,
                  pose_variation)
from .keypredictor import KeyframePredictor
from .metrics import beat_align_score, diversity
from .motiongen import ConditionBundle, DualPathMotionGenerator
from .plot import Panel, keyframe_svg
from .prosody import ProsodySeq, extract_prosody

log = logging.getLogger(__name__)

PATHS = ("head", "expr")
PROSODY_COLUMNS = ("f0_hz", "energy", "f0_norm", "energy_norm")


def check_alignment(clip: AudioClip, m: MotionSequence) -> None:
    expected = clip.duration * m.frame_rate
    if abs(expected - m.n_frames) > 1.0:
        raise AlignmentError(
            f"audio lasts {clip.duration:.4f} s ({expected:.2f} frames at {m.frame_rate:g} fps) "
            f"but the motion has {m.n_frames} frames")


# --- model factories -------------------------------------------------------------


def make_encoder(cfg: RunConfig) -> DualPathSpeechEncoder:
    return DualPathSpeechEncoder.from_config(cfg.dpse, random_state=cfg.run.seed).fit()


def make_keypredictor(cfg: RunConfig, path: str) -> KeyframePredictor:
    kp, tr = cfg.keypredictor, cfg.keypredictor_training
    return KeyframePredictor(
        layers=kp.layers, heads=kp.heads, dim=kp.dim, feature_dim=cfg.dpse.fused_dim,
        vocab_size=kp.vocab_size, max_len=kp.max_len, w0=kp.w0, w1=kp.w1,
        learning_rate=tr.learning_rate, warmup_steps=tr.warmup_steps,
        weight_decay=tr.weight_decay, steps=tr.steps, batch_size=tr.batch_size,
        threshold=tr.threshold, random_state=cfg.run.seed + 1 + PATHS.index(path))


def make_generator(cfg: RunConfig) -> DualPathMotionGenerator:
    g, lw = cfg.generator, cfg.loss
    return DualPathMotionGenerator(
        dim=g.dim, layers=g.layers, heads=g.heads, cond_dim=cfg.dpse.fused_dim,
        vocab_size=cfg.keypredictor.vocab_size, diffusion_steps=cfg.noise.steps,
        noise_offset=cfg.noise.offset, lambda_mr=lw.lambda_mr, lambda_bce=lw.lambda_bce,
        lambda_diff=lw.lambda_diff, lambda1=lw.lambda1, lambda2=lw.lambda2,
        resolutions=g.resolutions, learning_rate=g.learning_rate, warmup_steps=g.warmup_steps,
        weight_decay=g.weight_decay, steps=g.steps, random_state=cfg.run.seed)


# --- single-stage helpers ---------------------------------------------------------


def prosody_table(p: ProsodySeq) -> np.ndarray:
    return np.column_stack([p.f0, p.energy, p.normalized])


def keyframe_panels(m: MotionSequence, cfg: RunConfig):
    policy = cfg.keyframes
    k_h, k_e = extract_targets(m, policy)
    panels = []
    for title, v, k in (("head pose variation", pose_variation(decompose_pose(m)), k_h),
                        ("expression variation", expression_variation(m), k_e)):
        panels.append(Panel(title, v, gaussian_smooth(v, policy.gaussian_sigma),
                            keyframe_threshold(v, policy), k.indices))
    return panels


def extract_keyframes(m: MotionSequence, cfg: RunConfig, out_dir, svg_path=None):
    """Write ``keyframes_head.csv`` and ``keyframes_expr.csv`` (plus an optional SVG)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    k_h, k_e = extract_targets(m, cfg.keyframes)
    paths = [out_dir / "keyframes_head.csv", out_dir / "keyframes_expr.csv"]
    tio.write_keyframes_csv(paths[0], k_h)
    tio.write_keyframes_csv(paths[1], k_e)
    if svg_path is not None:
        Path(svg_path).write_text(keyframe_svg(keyframe_panels(m, cfg)))
        paths.append(Path(svg_path))
    return paths


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --- full pipeline --------------------------------------------------------------------


class PipelineResult(dict):
    """Maps artifact names to paths; ``metrics`` holds the metric report."""


def train_stages(clip: AudioClip, motion: MotionSequence, tokens: TranscriptTokens,
                 cfg: RunConfig, out: Path):
    """Prosody, encoder features, keyframe targets, keyframe predictors and generator."""
    files = {}
    prosody = extract_prosody(clip)
    files["prosody"] = out / "prosody.csv"
    tio.write_matrix_csv(files["prosody"], PROSODY_COLUMNS, prosody_table(prosody))

    encoder = make_encoder(cfg)
    f_h, f_e = encoder.encode(clip, motion.n_frames, prosody)
    feats = {"head": f_h, "expr": f_e}

    targets = dict(zip(PATHS, extract_targets(motion, cfg.keyframes)))
    for p in PATHS:
        files[f"keyframes_{p}_target"] = out / f"keyframes_{p}_target.csv"
        tio.write_keyframes_csv(files[f"keyframes_{p}_target"], targets[p])
    if cfg.run.plots:
        files["keyframes_plot"] = out / "keyframes.svg"
        files["keyframes_plot"].write_text(keyframe_svg(keyframe_panels(motion, cfg)))

    predictors, bce = {}, {}
    for p in PATHS:
        log.info("training keyframe predictor (%s)", p)
        kp = make_keypredictor(cfg, p).fit([(feats[p], tokens)], [targets[p]])
        bce[p] = kp.loss([(feats[p], tokens)], [targets[p]])
        files[f"keypredictor_{p}"] = out / f"keypredictor_{p}.json"
        kp.save(files[f"keypredictor_{p}"])
        predictors[p] = kp

    log.info("training motion generator")
    gt_conds = {p: ConditionBundle(feats[p], targets[p], tokens) for p in PATHS}
    gen = make_generator(cfg).fit([(gt_conds["head"], gt_conds["expr"])], [motion],
                                  bce_values=(bce["head"], bce["expr"]))
    files["generator"] = out / "generator.json"
    gen.save(files["generator"])
    return files, dict(feats=feats, targets=targets, predictors=predictors, bce=bce,
                       generator=gen, gt_conds=gt_conds)


def sample_motion(gen: DualPathMotionGenerator, predictors, feats, tokens, seed, frame_rate):
    """Predict keyframes free-running per path, then run the deterministic sampler."""
    flags = {p: predictors[p].predict_proba_free_running(feats[p], tokens)[1] for p in PATHS}
    conds = {p: ConditionBundle(feats[p], flags[p], tokens) for p in PATHS}
    return gen.sample(conds["head"], conds["expr"], seed=seed, frame_rate=frame_rate), flags


def loss_report(gen, motion, gt_conds, bce, seed):
    """Generator loss components summed over both paths."""
    total = {"rec": 0.0, "vel": 0.0, "mr": 0.0, "bce": 0.0, "total": 0.0}
    arrays = {"head": motion.head_pose, "expr": motion.expression}
    for p in PATHS:
        parts = gen.evaluate_losses(p, arrays[p], gt_conds[p], bce[p], seed)
        for k in total:
            total[k] += parts[k]
    return total


def evaluate(generated: MotionSequence, clip: AudioClip, cfg: RunConfig, reference=None):
    report = {"diversity": diversity([generated]),
              "beat_align": beat_align_score(generated, clip, cfg.beat)}
    if reference is not None:
        report["reference"] = {"diversity": diversity([reference]),
                               "beat_align": beat_align_score(reference, clip, cfg.beat)}
    return report


def run_pipeline(audio_path, motion_path, tokens_path, cfg: RunConfig, out_dir=None):
    """Train every stage on one clip, sample, score and write a manifest."""
    out = Path(out_dir if out_dir is not None else cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    clip = tio.read_wav(audio_path)
    motion = tio.read_motion_csv(motion_path)
    tokens = tio.read_tokens(tokens_path, cfg.keypredictor.vocab_size)
    check_alignment(clip, motion)

    files, st = train_stages(clip, motion, tokens, cfg, out)
    sampled, flags = sample_motion(st["generator"], st["predictors"], st["feats"], tokens,
                                   cfg.run.seed, motion.frame_rate)
    for p in PATHS:
        files[f"keyframes_{p}_pred"] = out / f"keyframes_{p}_pred.csv"
        tio.write_keyframes_csv(files[f"keyframes_{p}_pred"], flags[p])
    files["sampled_motion"] = out / "sampled_motion.csv"
    tio.write_motion_csv(files["sampled_motion"], sampled)

    metrics = evaluate(sampled, clip, cfg)
    metrics["losses"] = loss_report(st["generator"], motion, st["gt_conds"], st["bce"],
                                    cfg.run.seed)
    files["metrics"] = out / "metrics.json"
    _write_json(files["metrics"], metrics)
    files["config"] = out / "config.toml"
    files["config"].write_text(cfg.to_toml())

    manifest = {
        "inputs": {name: {"path": Path(p).name, "sha256": sha256(p)}
                   for name, p in (("audio", audio_path), ("motion", motion_path),
                                   ("tokens", tokens_path))},
        "outputs": {name: {"path": p.name, "sha256": sha256(p)} for name, p in files.items()},
        "config": cfg.to_dict(),
    }
    files["manifest"] = out / "manifest.json"
    _write_json(files["manifest"], manifest)
    result = PipelineResult(files)
    result.metrics = metrics
    return result

