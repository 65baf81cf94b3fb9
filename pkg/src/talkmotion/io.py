"""Data model and file formats for motion, audio, transcripts and keyframes.

Motion CSV layout::

    # fps=25
    frame,h0,...,h8,e0,...,e49
    0,0.0,...

Values are written with 17 significant digits so a write/read cycle is
lossless for float64.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (
    DataError,
    FormatError,
    ParseError,
    StructureError,
    UnsupportedFormatError,
)

N_POSE = 9
N_EXPR = 50
SAMPLE_RATE = 16000
DEFAULT_FPS = 25.0

MOTION_COLUMNS = (
    ["frame"] + [f"h{i}" for i in range(N_POSE)] + [f"e{i}" for i in range(N_EXPR)]
)


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MotionSequence:
    """Per-frame head pose (T x 9) and expression (T x 50) coefficients."""

    head_pose: np.ndarray
    expression: np.ndarray
    frame_rate: float = DEFAULT_FPS

    def __post_init__(self):
        h = _frozen(self.head_pose)
        e = _frozen(self.expression)
        if h.ndim != 2 or h.shape[1] != N_POSE:
            raise DataError(f"head_pose must be T x {N_POSE}, got {h.shape}")
        if e.ndim != 2 or e.shape[1] != N_EXPR:
            raise DataError(f"expression must be T x {N_EXPR}, got {e.shape}")
        if h.shape[0] != e.shape[0] or h.shape[0] < 1:
            raise DataError(
                f"head_pose and expression need the same T >= 1, got {h.shape[0]} and {e.shape[0]}"
            )
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(e))):
            raise DataError("motion coefficients must be finite")
        if not (self.frame_rate > 0 and np.isfinite(self.frame_rate)):
            raise DataError(f"frame_rate must be positive, got {self.frame_rate}")
        object.__setattr__(self, "head_pose", h)
        object.__setattr__(self, "expression", e)
        object.__setattr__(self, "frame_rate", float(self.frame_rate))

    @property
    def n_frames(self) -> int:
        return self.head_pose.shape[0]

    @classmethod
    def zeros(cls, n_frames, frame_rate=DEFAULT_FPS):
        return cls(np.zeros((n_frames, N_POSE)), np.zeros((n_frames, N_EXPR)), frame_rate)


@dataclass(frozen=True)
class PoseDecomposition:
    rotation: np.ndarray
    neck: np.ndarray
    camera: np.ndarray
    combined_nc: np.ndarray


def decompose_pose(m: MotionSequence) -> PoseDecomposition:
    """Split head pose into rotation (0-2), neck (3-5) and camera (6-8) blocks."""
    h = m.head_pose
    neck = h[:, 3:6]
    camera = h[:, 6:9]
    return PoseDecomposition(
        rotation=_frozen(h[:, 0:3]),
        neck=_frozen(neck),
        camera=_frozen(camera),
        combined_nc=_frozen(np.concatenate([neck, camera], axis=1)),
    )


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise UnsupportedFormatError(
                f"sample rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}"
            )
        s = _frozen(self.samples)
        if s.ndim != 1:
            raise DataError("audio samples must be one-dimensional")
        if s.size and not (np.all(np.isfinite(s)) and np.max(np.abs(s)) <= 1.0):
            raise DataError("audio samples must be finite and within [-1, 1]")
        object.__setattr__(self, "samples", s)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class TranscriptTokens:
    tokens: np.ndarray
    vocab_size: int

    def __post_init__(self):
        t = _frozen(self.tokens, dtype=np.int64).reshape(-1)
        if self.vocab_size < 1:
            raise DataError("vocab_size must be >= 1")
        if t.size and (t.min() < 0 or t.max() >= self.vocab_size):
            raise DataError(f"token ids must lie in [0, {self.vocab_size})")
        object.__setattr__(self, "tokens", t)

    def __len__(self):
        return int(self.tokens.size)


@dataclass(frozen=True)
class KeyframeSeq:
    flags: np.ndarray = field()

    def __post_init__(self):
        f = np.asarray(self.flags).reshape(-1)
        if f.size and not np.all((f == 0) | (f == 1)):
            raise DataError("keyframe flags must be 0 or 1")
        object.__setattr__(self, "flags", _frozen(f, dtype=np.int8))

    def __len__(self):
        return int(self.flags.size)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.flags)


# --- motion CSV -----------------------------------------------------------


def write_motion_csv(path, m: MotionSequence) -> None:
    lines = [f"# fps={m.frame_rate!r}", ",".join(MOTION_COLUMNS)]
    data = np.concatenate([m.head_pose, m.expression], axis=1)
    for t, row in enumerate(data):
        lines.append(str(t) + "," + ",".join(format(v, ".17g") for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_motion_csv(path) -> MotionSequence:
    path = Path(path)
    fps = DEFAULT_FPS
    header = None
    rows = []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("fps="):
                    try:
                        fps = float(body[4:])
                    except ValueError:
                        raise ParseError(f"{path}:{lineno}: bad fps value {body[4:]!r}", row=lineno)
                continue
            cells = [c.strip() for c in line.split(",")]
            if header is None:
                header = cells
                _check_motion_header(path, header)
                continue
            if len(cells) != len(MOTION_COLUMNS):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(MOTION_COLUMNS)} cells, got {len(cells)}",
                    row=lineno,
                )
            try:
                frame = int(cells[0])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: column 'frame' is not an integer: {cells[0]!r}",
                                 row=lineno, column="frame")
            values = []
            for name, cell in zip(MOTION_COLUMNS[1:], cells[1:]):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: column {name!r} is not numeric: {cell!r}",
                                     row=lineno, column=name)
            rows.append((frame, values))
    if header is None:
        raise FormatError(f"{path}: missing header row")
    if not rows:
        raise StructureError(f"{path}: no frames")
    rows.sort(key=lambda r: r[0])
    frames = np.array([r[0] for r in rows])
    if np.any(np.diff(frames) != 1):
        bad = int(np.flatnonzero(np.diff(frames) != 1)[0])
        raise StructureError(
            f"{path}: frame indices not contiguous between {frames[bad]} and {frames[bad + 1]}"
        )
    data = np.array([r[1] for r in rows], dtype=np.float64)
    return MotionSequence(data[:, :N_POSE], data[:, N_POSE:], fps)


def _check_motion_header(path, header):
    if header == MOTION_COLUMNS:
        return
    missing = [c for c in MOTION_COLUMNS if c not in header]
    if missing:
        raise FormatError(f"{path}: header is missing column(s) {', '.join(missing)}")
    extra = [c for c in header if c not in MOTION_COLUMNS]
    if extra:
        raise FormatError(f"{path}: unexpected column(s) {', '.join(extra)}")
    raise FormatError(f"{path}: header columns out of order")


# --- WAV ----------------------------------------------------------------------


def read_wav(path) -> AudioClip:
    """Read a PCM16 mono 16 kHz file; anything else is rejected, never resampled."""
    try:
        with wave.open(str(path), "rb") as w:
            channels, width, rate = w.getnchannels(), w.getsampwidth(), w.getframerate()
            if channels != 1:
                raise UnsupportedFormatError(f"{path}: expected mono, got {channels} channels")
            if width != 2:
                raise UnsupportedFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
            if rate != SAMPLE_RATE:
                raise UnsupportedFormatError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz")
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise UnsupportedFormatError(f"{path}: {exc}") from exc
    ints = np.frombuffer(raw, dtype="<i2")
    return AudioClip(ints.astype(np.float64) / 32768.0)


def write_wav(path, clip: AudioClip) -> None:
    ints = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate)
        w.writeframes(ints.tobytes())


# --- transcripts and keyframes --------------------------------------------------


def read_tokens(path, vocab_size: int) -> TranscriptTokens:
    ids = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            ids.append(int(line))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: token is not an integer: {line!r}", row=lineno)
    return TranscriptTokens(np.array(ids, dtype=np.int64), vocab_size)


def write_tokens(path, tokens: TranscriptTokens) -> None:
    Path(path).write_text("".join(f"{int(t)}\n" for t in tokens.tokens))


def write_keyframes_csv(path, k: KeyframeSeq) -> None:
    body = "".join(f"{t},{int(f)}\n" for t, f in enumerate(k.flags))
    Path(path).write_text("frame,flag\n" + body)


def read_keyframes_csv(path) -> KeyframeSeq:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "frame,flag":
        raise FormatError(f"{path}: header must be 'frame,flag'")
    flags = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            frame, flag = (int(c) for c in line.split(","))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: expected two integer cells, got {line!r}",
                             row=lineno)
        if flag not in (0, 1):
            raise ParseError(f"{path}:{lineno}: flag must be 0 or 1, got {flag}",
                             row=lineno, column="flag")
        if frame != len(flags):
            raise StructureError(f"{path}:{lineno}: expected frame {len(flags)}, got {frame}")
        flags.append(flag)
    return KeyframeSeq(np.array(flags))


def write_matrix_csv(path, columns, matrix) -> None:
    """Dump a frame-indexed matrix as CSV with a leading ``frame`` column."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    lines = [",".join(["frame"] + list(columns))]
    for t, row in enumerate(matrix):
        lines.append(str(t) + "," + ",".join(format(v, ".17g") for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise FormatError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[0] != "frame":
        raise FormatError(f"{path}: first column must be 'frame'")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        try:
            rows.append([float(c) for c in cells[1:]])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric cell", row=lineno)
    return np.array(rows, dtype=np.float64).reshape(len(rows), len(header) - 1)
