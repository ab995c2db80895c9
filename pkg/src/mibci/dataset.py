"""Trial containers, the ``.mitrials`` file format, and synthetic sessions.

A trial set holds cue-aligned multichannel EEG trials with one label per
trial out of the four motor-imagery classes (1=left hand, 2=right hand,
3=feet, 4=tongue) plus a per-trial artifact flag.  The on-disk format is a
small binary container: a magic string, a little-endian ``u32`` header
length, a UTF-8 JSON header, then the raw ``float32`` sample payload in
trial-major, channel-major, sample-minor order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from .errors import DataError

MAGIC = b"MIBCI1\n"
CLASSES = (1, 2, 3, 4)

DEFAULT_FS = 250.0
DEFAULT_N_CHANNELS = 22
DEFAULT_N_SAMPLES = 1125

# Class geometry of the synthetic generator is drawn from fixed keys so that
# sessions generated from different user seeds share the same class structure
# and can serve as train/test pairs.
_STRUCT_KEY = 0x4D49_5343
_N_OSC = 6


@dataclass(frozen=True)
class TrialSet:
    """Immutable set of labelled EEG trials sharing one sampling geometry.

    Parameters
    ----------
    fs : float
        Sampling rate in Hz.
    trials : ndarray, shape (n_trials, n_channels, n_samples)
        Trial data, stored as float32.
    labels : ndarray, shape (n_trials,)
        Class label per trial, values in {1, 2, 3, 4}.
    artifact_flags : ndarray, shape (n_trials,)
        True where the trial was marked as an artifact.
    subject_id : str
        Free-form identifier of the recording.
    """

    fs: float
    trials: np.ndarray
    labels: np.ndarray
    artifact_flags: np.ndarray
    subject_id: str = ""

    def __post_init__(self):
        trials = np.ascontiguousarray(self.trials, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        flags = np.ascontiguousarray(self.artifact_flags, dtype=bool)
        if trials.ndim != 3:
            raise DataError("trials must have shape (n_trials, n_channels, n_samples)")
        if labels.shape != (trials.shape[0],):
            raise DataError("labels length does not match the number of trials")
        if flags.shape != (trials.shape[0],):
            raise DataError("artifact_flags length does not match the number of trials")
        if labels.size and not np.isin(labels, CLASSES).all():
            raise DataError("unknown label value; labels must lie in {1, 2, 3, 4}")
        if not self.fs > 0:
            raise DataError("fs must be positive")
        for arr in (trials, labels, flags):
            arr.setflags(write=False)
        object.__setattr__(self, "trials", trials)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "artifact_flags", flags)
        object.__setattr__(self, "fs", float(self.fs))

    @property
    def n_trials(self):
        return self.trials.shape[0]

    @property
    def n_channels(self):
        return self.trials.shape[1]

    @property
    def n_samples(self):
        return self.trials.shape[2]

    @property
    def duration(self):
        """Trial length in seconds."""
        return self.n_samples / self.fs

    def class_counts(self):
        """Trial count per class id, including zero counts."""
        return {c: int(np.sum(self.labels == c)) for c in CLASSES}


@dataclass(frozen=True)
class ClassBalanceReport:
    """Before/after class counts produced by artifact exclusion."""

    counts_before: dict
    counts_after: dict
    excluded_fraction: float


def load_trials(path):
    """Read a ``.mitrials`` container.

    Parameters
    ----------
    path : str or Path

    Returns
    -------
    TrialSet

    Raises
    ------
    DataError
        On a bad magic string, malformed header, header/payload disagreement,
        or unknown label values.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 4 or blob[: len(MAGIC)] != MAGIC:
        raise DataError(f"{path}: not a .mitrials file (bad magic)")
    off = len(MAGIC)
    (header_len,) = struct.unpack_from("<I", blob, off)
    off += 4
    if off + header_len > len(blob):
        raise DataError(f"{path}: truncated header")
    try:
        header = json.loads(blob[off : off + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: malformed header ({exc})") from exc
    off += header_len

    try:
        fs = float(header["fs"])
        n_channels = int(header["n_channels"])
        n_samples = int(header["n_samples"])
        labels = np.asarray(header["labels"], dtype=np.int64)
        flags = np.asarray(header["artifacts"], dtype=bool)
        subject_id = str(header.get("subject_id", ""))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed header ({exc})") from exc

    if labels.ndim != 1 or flags.shape != labels.shape:
        raise DataError(f"{path}: labels/artifacts lists disagree in length")
    n_trials = labels.size
    expected = 4 * n_trials * n_channels * n_samples
    payload = blob[off:]
    if len(payload) != expected:
        raise DataError(
            f"{path}: payload length mismatch "
            f"(expected {expected} bytes, found {len(payload)})"
        )
    trials = np.frombuffer(payload, dtype="<f4").reshape(n_trials, n_channels, n_samples)
    return TrialSet(fs=fs, trials=trials, labels=labels,
                    artifact_flags=flags, subject_id=subject_id)


def store_trials(ts, path):
    """Write a ``TrialSet`` so that ``load_trials`` restores it bit-exactly."""
    header = {
        "fs": ts.fs,
        "n_channels": ts.n_channels,
        "n_samples": ts.n_samples,
        "subject_id": ts.subject_id,
        "labels": [int(v) for v in ts.labels],
        "artifacts": [bool(v) for v in ts.artifact_flags],
    }
    raw = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(np.ascontiguousarray(ts.trials, dtype="<f4").tobytes())


def exclude_artifacts(ts):
    """Drop flagged trials, keeping every class populated.

    Parameters
    ----------
    ts : TrialSet

    Returns
    -------
    (TrialSet, ClassBalanceReport)
        The filtered set (artifact flags all False) and the class-count
        bookkeeping.  Applying the function twice is a no-op.

    Raises
    ------
    DataError
        If exclusion would remove every trial of a class that was present.
    """
    keep = ~ts.artifact_flags
    before = ts.class_counts()
    kept_labels = ts.labels[keep]
    after = {c: int(np.sum(kept_labels == c)) for c in CLASSES}
    for c in CLASSES:
        if before[c] > 0 and after[c] == 0:
            raise DataError(f"class emptied by exclusion (class {c})")
    excluded = 0.0 if ts.n_trials == 0 else 1.0 - keep.sum() / ts.n_trials
    out = TrialSet(
        fs=ts.fs,
        trials=ts.trials[keep],
        labels=kept_labels,
        artifact_flags=np.zeros(int(keep.sum()), dtype=bool),
        subject_id=ts.subject_id,
    )
    report = ClassBalanceReport(counts_before=before, counts_after=after,
                                excluded_fraction=float(excluded))
    return out, report


def _class_structure(cls):
    """Oscillator frequencies and channel mixing for one class."""
    rng = Generator(Philox(_STRUCT_KEY + cls))
    freqs = rng.uniform(8.0, 30.0, _N_OSC)
    mix = rng.normal(0.0, 1.0, (DEFAULT_N_CHANNELS, _N_OSC))
    mix /= np.linalg.norm(mix, axis=0, keepdims=True)
    return freqs, mix


def synth_trials(seed, n_per_class=72, snr_db=10.0, subject_id="synthetic"):
    """Generate a labelled synthetic session with class-dependent structure.

    Each class projects a small bank of band-limited oscillators (8-30 Hz)
    through a class-specific channel mixing matrix; white Gaussian noise is
    added at the requested SNR.  The class structure is fixed, so sessions
    generated from different seeds are exchangeable train/test material,
    while phases, amplitude jitter, and noise follow the counter-based
    generator seeded with ``seed``.

    Parameters
    ----------
    seed : int
        Seed of the per-session randomness.
    n_per_class : int
        Trials per class, at least 2.
    snr_db : float
        Signal-to-noise ratio in dB (10*log10 of the power ratio).
    subject_id : str

    Returns
    -------
    TrialSet
    """
    if n_per_class < 2:
        raise DataError("n_per_class must be at least 2")
    rng = Generator(Philox(int(seed)))
    structures = {c: _class_structure(c) for c in CLASSES}
    n_trials = 4 * n_per_class
    labels = np.tile(np.asarray(CLASSES, dtype=np.int64), n_per_class)
    t = np.arange(DEFAULT_N_SAMPLES) / DEFAULT_FS
    trials = np.empty((n_trials, DEFAULT_N_CHANNELS, DEFAULT_N_SAMPLES), dtype=np.float32)
    power_ratio = 10.0 ** (snr_db / 10.0)
    for i, lab in enumerate(labels):
        freqs, mix = structures[int(lab)]
        amps = rng.uniform(0.7, 1.3, _N_OSC)
        jitter = rng.uniform(-0.25, 0.25, _N_OSC)
        phases = rng.uniform(0.0, 2.0 * np.pi, _N_OSC)
        osc = amps[:, None] * np.sin(
            2.0 * np.pi * (freqs + jitter)[:, None] * t[None, :] + phases[:, None]
        )
        rhythmic = mix @ osc
        # class-independent broadband background keeps every frequency band
        # away from rank deficiency, like ongoing activity under the rhythms
        background = rng.normal(0.0, 1.0, rhythmic.shape)
        p_rhythm = np.mean(rhythmic**2)
        background *= np.sqrt(0.5 * p_rhythm / np.mean(background**2))
        clean = rhythmic + background
        noise = rng.normal(0.0, 1.0, clean.shape)
        p_sig = np.mean(clean**2)
        p_noise = np.mean(noise**2)
        sigma = np.sqrt(p_sig / (power_ratio * p_noise))
        trials[i] = (clean + sigma * noise).astype(np.float32)
    return TrialSet(
        fs=DEFAULT_FS,
        trials=trials,
        labels=labels,
        artifact_flags=np.zeros(n_trials, dtype=bool),
        subject_id=subject_id,
    )
