"""Keyframe-aware speech-to-motion toolkit: keyframe extraction, prosody,
dual-path speech encoding, keyframe prediction and diffusion-based motion
generation for head-pose and expression coefficients."""

from .config import RunConfig
from .dpse import DpseConfig, DualPathSpeechEncoder
from .exceptions import (AlignmentError, ConfigurationError, DataError, DimensionError,
                         FormatError, NumericError, ParseError, StructureError, TalkMotionError,
                         UnsupportedFormatError)
from .frontend import FrontendConfig, SpeechFrontend, fixed_projection, frontend_features
from .io import (AudioClip, KeyframeSeq, MotionSequence, PoseDecomposition, TranscriptTokens,
                 decompose_pose, read_keyframes_csv, read_motion_csv, read_tokens, read_wav,
                 write_keyframes_csv, write_motion_csv, write_tokens, write_wav)
from .kel import (KeyframeExtractor, KeyframePolicy, extract_targets, relative_rotation_angle,
                  select_keyframes)
from .keypredictor import KeyframePredictor, KeyPredictorConfig, class_weights, weighted_bce
from .metrics import BeatConfig, audio_beats, beat_align, diversity, motion_beats
from .motiongen import (ConditionBundle, DualPathMotionGenerator, LossWeights, NoiseSchedule,
                        loss_mr_stft, loss_rec, loss_vel, total_loss)
from .prosody import ProsodyExtractor, ProsodySeq, estimate_f0, extract_prosody

__version__ = "0.1.0"

__all__ = [
    "AlignmentError", "AudioClip", "BeatConfig", "ConditionBundle", "ConfigurationError",
    "DataError", "DimensionError", "DpseConfig", "DualPathMotionGenerator",
    "DualPathSpeechEncoder", "FormatError", "FrontendConfig", "KeyPredictorConfig",
    "KeyframeExtractor", "KeyframePolicy", "KeyframePredictor", "KeyframeSeq", "LossWeights",
    "MotionSequence", "NoiseSchedule", "NumericError", "ParseError", "PoseDecomposition",
    "ProsodyExtractor", "ProsodySeq", "RunConfig", "SpeechFrontend", "StructureError",
    "TalkMotionError", "TranscriptTokens", "UnsupportedFormatError", "audio_beats",
    "beat_align", "class_weights", "decompose_pose", "diversity", "estimate_f0",
    "extract_prosody", "extract_targets", "fixed_projection", "frontend_features",
    "loss_mr_stft", "loss_rec", "loss_vel", "motion_beats", "read_keyframes_csv",
    "read_motion_csv", "read_tokens", "read_wav", "relative_rotation_angle", "select_keyframes",
    "total_loss", "weighted_bce", "write_keyframes_csv", "write_motion_csv", "write_tokens",
    "write_wav",
]
