"""``talkmotion`` command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(missing or malformed input), 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import config as tconfig
from . import io as tio
from . import pipeline
from .exceptions import ConfigurationError, DataError, DimensionError, NumericError
from .frontend import FrontendConfig, frontend_features
from .keypredictor import KeyframePredictor
from .motiongen import DualPathMotionGenerator
from .prosody import extract_prosody

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> tconfig.RunConfig:
    cfg = tconfig.load(args.config) if args.config else tconfig.RunConfig()
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    return cfg.with_overrides(overrides) if overrides else cfg


# --- commands ------------------------------------------------------------------


def cmd_extract_keyframes(args):
    cfg = _config(args)
    m = tio.read_motion_csv(args.motion)
    for p in pipeline.extract_keyframes(m, cfg, args.out, args.svg):
        print(p)


def cmd_prosody(args):
    p = extract_prosody(tio.read_wav(args.audio))
    tio.write_matrix_csv(args.out, pipeline.PROSODY_COLUMNS, pipeline.prosody_table(p))


def cmd_features(args):
    cfg = _config(args)
    feats = frontend_features(tio.read_wav(args.audio), FrontendConfig(n_mels=cfg.dpse.n_mels))
    tio.write_matrix_csv(args.out, [f"mel{i}" for i in range(feats.shape[1])], feats)


def _encode(cfg, clip, frames):
    if frames < 1:
        raise UsageError("--frames must be >= 1")
    return pipeline.make_encoder(cfg).encode(clip, frames)


def cmd_encode(args):
    cfg = _config(args)
    clip = tio.read_wav(args.audio)
    f_h, f_e = _encode(cfg, clip, args.frames)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = [f"d{i}" for i in range(f_h.shape[1])]
    tio.write_matrix_csv(out / "features_head.csv", cols, f_h)
    tio.write_matrix_csv(out / "features_expr.csv", cols, f_e)


def cmd_predict_keyframes(args):
    kp = KeyframePredictor.load(args.checkpoint)
    feats = tio.read_matrix_csv(args.features)
    tokens = tio.read_tokens(args.tokens, kp.vocab_size)
    _, flags = kp.predict_proba_free_running(feats, tokens)
    tio.write_keyframes_csv(args.out, flags)


def cmd_train(args):
    cfg = _config(args)
    clip = tio.read_wav(args.audio)
    motion = tio.read_motion_csv(args.motion)
    tokens = tio.read_tokens(args.tokens, cfg.keypredictor.vocab_size)
    pipeline.check_alignment(clip, motion)
    out = Path(args.out or cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files, _ = pipeline.train_stages(clip, motion, tokens, cfg, out)
    for p in files.values():
        print(p)


def cmd_sample(args):
    cfg = _config(args)
    clip = tio.read_wav(args.audio)
    gen = DualPathMotionGenerator.load(args.generator)
    predictors = {"head": KeyframePredictor.load(args.keypredictor_head),
                  "expr": KeyframePredictor.load(args.keypredictor_expr)}
    tokens = tio.read_tokens(args.tokens, gen.vocab_size)
    frames = args.frames or int(round(clip.duration * cfg.run.frame_rate))
    f_h, f_e = _encode(cfg, clip, frames)
    motion, _ = pipeline.sample_motion(gen, predictors, {"head": f_h, "expr": f_e}, tokens,
                                       cfg.run.seed, cfg.run.frame_rate)
    tio.write_motion_csv(args.out, motion)


def cmd_evaluate(args):
    cfg = _config(args)
    generated = tio.read_motion_csv(args.generated)
    ref = tio.read_motion_csv(args.reference) if args.reference else None
    report = pipeline.evaluate(generated, tio.read_wav(args.audio), cfg, ref)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)


def cmd_pipeline(args):
    cfg = _config(args)
    result = pipeline.run_pipeline(args.audio, args.motion, args.tokens, cfg, args.out)
    print(json.dumps(result.metrics, indent=2, sort_keys=True))


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--seed", type=int, help="shorthand for --set run.seed=N")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="talkmotion", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract-keyframes", parents=[common], help="keyframe targets from motion")
    p.add_argument("motion")
    p.add_argument("-o", "--out", default=".", help="output directory")
    p.add_argument("--svg", help="also write a variation plot here")
    p.set_defaults(func=cmd_extract_keyframes)

    p = sub.add_parser("prosody", parents=[common], help="per-frame f0 and energy")
    p.add_argument("audio")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_prosody)

    p = sub.add_parser("features", parents=[common], help="log-mel frontend features")
    p.add_argument("audio")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("encode", parents=[common], help="head and expression speech features")
    p.add_argument("audio")
    p.add_argument("--frames", type=int, required=True, help="motion frame count T")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("predict-keyframes", parents=[common], help="run a keyframe predictor")
    p.add_argument("checkpoint")
    p.add_argument("features", help="matrix CSV of per-frame features")
    p.add_argument("tokens")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_predict_keyframes)

    p = sub.add_parser("train", parents=[common], help="train predictors and generator")
    p.add_argument("audio")
    p.add_argument("motion")
    p.add_argument("tokens")
    p.add_argument("-o", "--out", help="run directory (default: run.out_dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", parents=[common], help="generate motion from speech")
    p.add_argument("audio")
    p.add_argument("tokens")
    p.add_argument("--generator", required=True)
    p.add_argument("--keypredictor-head", required=True)
    p.add_argument("--keypredictor-expr", required=True)
    p.add_argument("--frames", type=int, help="default: audio duration x frame rate")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("evaluate", parents=[common], help="diversity and beat alignment")
    p.add_argument("generated")
    p.add_argument("audio")
    p.add_argument("--reference", help="ground-truth motion CSV to score alongside")
    p.add_argument("-o", "--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", parents=[common], help="train, sample and score one clip")
    p.add_argument("audio")
    p.add_argument("motion")
    p.add_argument("tokens")
    p.add_argument("-o", "--out", help="run directory (default: run.out_dir)")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, ConfigurationError) as e:
        print(f"talkmotion: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DimensionError) as e:
        print(f"talkmotion: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        name = e.filename if e.filename is not None else ""
        print(f"talkmotion: data error: {name}: {e.strerror or e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as e:
        print(f"talkmotion: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
