"""Experiment orchestration from configuration to benchmark report.

A configuration names a feature family (CSP log-variance or Riemannian
tangent space), a temporal window scheme, a frequency band scheme, and the
SVM kernel.  Training filters each trial over its full duration once per
band, estimates the per-leaf state (spatial filters or tangent references),
extracts one feature block per (window, band) leaf in window-major,
band-minor order, selects the regularization constant by cross-validation,
and fits the final SVM.  Trained models serialize to a self-contained
binary file.
"""

from __future__ import annotations

import json
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from time import perf_counter

import numpy as np

from . import csp as csp_mod
from . import dsp, riemann, spd
from . import svm as svm_mod
from .dataset import CLASSES, TrialSet, exclude_artifacts, load_trials
from .errors import ConfigError, DataError, MibciError, NumericError

FEATURES = ("csp", "riemann")
WINDOW_SCHEMES = ("t11", "t1", "t1t2t5")
BAND_SCHEMES = ("b43", "b80")
KERNELS = ("linear", "rbf", "poly")
MEAN_BY_LETTER = {"g": "geometric", "u": "arithmetic", "i": "identity"}

#: CSP filters kept per side of the eigenvalue spectrum in each class pair.
N_PER_SIDE = 2

MODEL_MAGIC = b"MIMODEL1"


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description.

    ``mean`` selects the tangent-space reference ("g" geometric, "u"
    arithmetic, "i" identity) and is required exactly when
    ``feature == "riemann"``.
    """

    feature: str
    windows: str
    bands: str
    kernel: str
    mean: str | None = None
    c_grid: tuple | None = None
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.feature not in FEATURES:
            raise ConfigError(f"unknown feature family {self.feature!r}")
        if self.windows not in WINDOW_SCHEMES:
            raise ConfigError(f"unknown window scheme {self.windows!r}")
        if self.bands not in BAND_SCHEMES:
            raise ConfigError(f"unknown band scheme {self.bands!r}")
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.feature == "riemann":
            if self.mean not in MEAN_BY_LETTER:
                raise ConfigError(
                    "riemann features require mean in {'g', 'u', 'i'}")
        elif self.mean is not None:
            raise ConfigError("mean is only meaningful for riemann features")
        if self.c_grid is not None:
            grid = tuple(float(c) for c in self.c_grid)
            if not grid or any(c <= 0.0 for c in grid):
                raise ConfigError("c_grid must be a non-empty list of positive values")
            object.__setattr__(self, "c_grid", grid)
        if int(self.folds) < 2:
            raise ConfigError("folds must be at least 2")
        object.__setattr__(self, "folds", int(self.folds))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def mean_kind(self):
        return None if self.mean is None else MEAN_BY_LETTER[self.mean]

    def to_dict(self):
        return {
            "feature": self.feature, "windows": self.windows,
            "bands": self.bands, "kernel": self.kernel, "mean": self.mean,
            "c_grid": None if self.c_grid is None else list(self.c_grid),
            "folds": self.folds, "seed": self.seed,
        }


def leaf_bands(scheme):
    """Bands that form leaves of the multiscale tree.

    The full-range band of the "b80" family stays in the designed
    filterbank but spans the whole analysis range, so it contributes no
    leaf of its own.
    """
    full = dsp.BandSpec(*dsp.ANALYSIS_BAND)
    return [b for b in dsp.default_bands(scheme) if b != full]


@dataclass
class FeatureExtractor:
    """Trained multiscale state: one leaf per (window, band) combination.

    Leaves are ordered window-major, band-minor; ``banks`` (CSP) follows
    that order, ``refs`` (Riemannian) holds one reference per band.
    """

    kind: str
    fs: float
    n_channels: int
    n_samples: int
    windows: list
    bands: list
    banks: list | None = None
    refs: list | None = None

    @property
    def n_leaves(self):
        return len(self.windows) * len(self.bands)

    @property
    def leaf_len(self):
        if self.kind == "csp":
            return 2 * N_PER_SIDE * len(csp_mod.PAIR_ORDER)
        return self.n_channels * (self.n_channels + 1) // 2

    @property
    def feature_dim(self):
        return self.n_leaves * self.leaf_len


def feature_dim(config, n_channels=22):
    """Feature vector width implied by a configuration, without training."""
    nw = len(dsp.default_windows(config.windows))
    nb = len(leaf_bands(config.bands))
    if config.feature == "csp":
        leaf = 2 * N_PER_SIDE * len(csp_mod.PAIR_ORDER)
    else:
        leaf = n_channels * (n_channels + 1) // 2
    return nw * nb * leaf


@dataclass
class TrainedModel:
    """Feature extractor plus classifier, ready to evaluate or serialize."""

    config: ExperimentConfig
    extractor: FeatureExtractor
    svm: svm_mod.SvmModel
    cv: svm_mod.CvReport | None
    train_time_s: float

    def __post_init__(self):
        if self.svm.n_features is not None \
                and self.svm.n_features != self.extractor.feature_dim:
            raise NumericError(
                f"feature dimension mismatch: extractor {self.extractor.feature_dim}, "
                f"classifier {self.svm.n_features}")

    @property
    def feature_dim(self):
        return self.extractor.feature_dim


def _window_ranges(extractor, n_samples):
    ranges = []
    for w in extractor.windows:
        i0, i1 = dsp.window_sample_range(w, extractor.fs)
        if i0 < 0 or i1 > n_samples:
            raise ConfigError(
                f"window [{w.t_start}, {w.t_end}] s reaches outside the "
                f"{n_samples}-sample trial")
        if i1 - i0 < extractor.n_channels + 1:
            raise ConfigError(
                f"window [{w.t_start}, {w.t_end}] s is too short to estimate "
                f"a {extractor.n_channels}-channel covariance")
        ranges.append((i0, i1))
    return ranges


def _design(band, fs):
    try:
        return dsp.design_butter_bandpass(band, fs)
    except ValueError as exc:
        raise ConfigError(f"band [{band.f_lo}, {band.f_hi}] Hz: {exc}") from exc


def _run_band_jobs(job, n_bands, n_jobs):
    if n_jobs is None or n_jobs <= 1:
        for bi in range(n_bands):
            job(bi)
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            list(pool.map(job, range(n_bands)))


def _check_compatible(extractor, ts):
    if ts.n_channels != extractor.n_channels:
        raise DataError(
            f"trial set has {ts.n_channels} channels, model expects "
            f"{extractor.n_channels}")
    if ts.fs != extractor.fs:
        raise DataError(
            f"trial set sampled at {ts.fs} Hz, model expects {extractor.fs} Hz")


def extract_features(state, ts, n_jobs=1):
    """Feature matrix of a trial set under a trained extractor.

    Parameters
    ----------
    state : TrainedModel or FeatureExtractor
    ts : TrialSet
    n_jobs : int
        Worker threads fanned out over frequency bands.  Results are
        bit-identical for any worker count: each band job writes a disjoint
        column block of a preallocated matrix.

    Returns
    -------
    ndarray, shape (n_trials, feature_dim)
    """
    ex = state.extractor if isinstance(state, TrainedModel) else state
    _check_compatible(ex, ts)
    ranges = _window_ranges(ex, ts.n_samples)
    X = np.asarray(ts.trials, dtype=np.float64)
    nb = len(ex.bands)
    L = ex.leaf_len
    out = np.empty((ts.n_trials, ex.feature_dim))

    def job(bi):
        cascade = _design(ex.bands[bi], ex.fs)
        Xf = dsp.filter_forward(cascade, X)
        for wi, (i0, i1) in enumerate(ranges):
            Xw = Xf[..., i0:i1]
            leaf = wi * nb + bi
            try:
                if ex.kind == "csp":
                    block = _csp_block(ex.banks[leaf], Xw)
                else:
                    block = riemann.riemann_features_batch(
                        spd.covariances(Xw), ex.refs[bi])
            except NumericError as exc:
                raise NumericError(
                    f"leaf (window {wi}, band {bi}): {exc}",
                    residual=exc.residual) from exc
            out[:, leaf * L:(leaf + 1) * L] = block

    _run_band_jobs(job, nb, n_jobs)
    return out


def _csp_block(bank, Xw):
    P = np.matmul(bank.filters.T[None], Xw)
    powers = np.einsum("tfs,tfs->tf", P, P)
    total = powers.sum(axis=1)
    if not np.isfinite(total).all() or np.any(powers <= 0.0):
        raise NumericError("degenerate window: spatially filtered variance "
                           "is zero or non-finite")
    return np.log(powers / total[:, None])


def _train_csp_banks(ex, ts, ranges, n_jobs):
    class_idx = {}
    for c in CLASSES:
        idx = np.flatnonzero(ts.labels == c)
        if idx.size == 0:
            raise DataError(f"training set has no trials of class {c}")
        class_idx[c] = idx
    X = np.asarray(ts.trials, dtype=np.float64)
    nb = len(ex.bands)
    banks = [None] * ex.n_leaves

    def job(bi):
        cascade = _design(ex.bands[bi], ex.fs)
        Xf = dsp.filter_forward(cascade, X)
        for wi, (i0, i1) in enumerate(ranges):
            covs = spd.covariances(Xf[..., i0:i1])
            by_class = {c: covs[class_idx[c]] for c in CLASSES}
            banks[wi * nb + bi] = csp_mod.train_csp_from_covariances(
                by_class, n_per_side=N_PER_SIDE, window_index=wi, band_index=bi)

    _run_band_jobs(job, nb, n_jobs)
    ex.banks = banks


def _train_riemann_refs(ex, ts, ranges, kind, n_jobs):
    X = np.asarray(ts.trials, dtype=np.float64)
    nb = len(ex.bands)
    refs = [None] * nb

    if kind == "identity":
        for bi in range(nb):
            refs[bi] = riemann.fit_reference(
                np.eye(ex.n_channels)[None], "identity", band_index=bi)
        ex.refs = refs
        return

    def job(bi):
        cascade = _design(ex.bands[bi], ex.fs)
        Xf = dsp.filter_forward(cascade, X)
        pool = np.concatenate(
            [spd.covariances(Xf[..., i0:i1]) for i0, i1 in ranges])
        refs[bi] = riemann.fit_reference(pool, kind, band_index=bi)

    _run_band_jobs(job, nb, n_jobs)
    ex.refs = refs


def fit(config, train, n_jobs=1):
    """Train the full pipeline on one session.

    Wall-clock training time (feature extraction, cross-validation, final
    classifier; no file I/O) is recorded on the returned model.

    Parameters
    ----------
    config : ExperimentConfig
    train : TrialSet
    n_jobs : int

    Returns
    -------
    TrainedModel
    """
    t0 = perf_counter()
    ex = FeatureExtractor(
        kind=config.feature, fs=train.fs, n_channels=train.n_channels,
        n_samples=train.n_samples,
        windows=dsp.default_windows(config.windows),
        bands=leaf_bands(config.bands),
    )
    ranges = _window_ranges(ex, train.n_samples)
    if config.feature == "csp":
        _train_csp_banks(ex, train, ranges, n_jobs)
    else:
        _train_riemann_refs(ex, train, ranges, config.mean_kind, n_jobs)
    F = extract_features(ex, train, n_jobs=n_jobs)
    cv = svm_mod.grid_search_cv(
        F, train.labels, kernel=config.kernel, grid=config.c_grid,
        k_folds=config.folds, seed=config.seed)
    classifier = svm_mod.train_svm(
        F, train.labels, kernel=config.kernel, C=cv.selected_c)
    train_time = perf_counter() - t0
    return TrainedModel(config=config, extractor=ex, svm=classifier, cv=cv,
                        train_time_s=train_time)


@dataclass(frozen=True)
class SubjectResult:
    """Evaluation outcome of one subject."""

    subject_id: str
    accuracy: float
    n_correct: int
    n_total: int
    train_time_s: float
    test_time_s: float
    confusion: np.ndarray

    def to_dict(self):
        return {
            "subject_id": self.subject_id,
            "accuracy_pct": self.accuracy,
            "n_correct": self.n_correct,
            "n_total": self.n_total,
            "train_time_s": self.train_time_s,
            "test_time_s": self.test_time_s,
            "confusion": self.confusion.tolist(),
        }


@dataclass(frozen=True)
class RunReport:
    """Per-subject results plus aggregate accuracy and timing.

    Accuracies are percentages; the spread is the population standard
    deviation across subjects.
    """

    results: tuple
    failures: tuple = ()

    def _acc(self):
        return np.asarray([r.accuracy for r in self.results])

    @property
    def mean_accuracy(self):
        return float(self._acc().mean())

    @property
    def std_accuracy(self):
        return float(self._acc().std())

    @property
    def mean_train_time_s(self):
        return float(np.mean([r.train_time_s for r in self.results]))

    @property
    def mean_test_time_s(self):
        return float(np.mean([r.test_time_s for r in self.results]))

    def to_dict(self):
        return {
            "subjects": [r.to_dict() for r in self.results],
            "summary": {
                "mean_accuracy_pct": self.mean_accuracy,
                "std_accuracy_pct": self.std_accuracy,
                "mean_train_time_s": self.mean_train_time_s,
                "mean_test_time_s": self.mean_test_time_s,
            },
            "failures": [{"subject_id": s, "error": e} for s, e in self.failures],
        }


def evaluate(model, test, n_jobs=1):
    """Evaluate a frozen model on held-out trials.

    Nothing is re-estimated: standardization statistics, spatial filters,
    and tangent references all come from training.  Wall-clock testing time
    covers feature extraction and prediction.

    Returns
    -------
    RunReport with a single subject row.
    """
    t0 = perf_counter()
    F = extract_features(model, test, n_jobs=n_jobs)
    pred = svm_mod.predict(model.svm, F)
    test_time = perf_counter() - t0
    correct = int(np.sum(pred == test.labels))
    confusion = np.zeros((len(CLASSES), len(CLASSES)), dtype=np.int64)
    for t, p in zip(test.labels, pred):
        confusion[t - 1, p - 1] += 1
    row = SubjectResult(
        subject_id=test.subject_id,
        accuracy=100.0 * correct / test.n_trials,
        n_correct=correct, n_total=test.n_trials,
        train_time_s=model.train_time_s, test_time_s=test_time,
        confusion=confusion,
    )
    return RunReport(results=(row,))


def discover_subjects(data_dir):
    """Pair ``*T.mitrials`` training files with ``*E.mitrials`` test files."""
    data_dir = Path(data_dir)
    pairs = []
    for train_path in sorted(data_dir.glob("*T.mitrials")):
        test_path = train_path.with_name(train_path.name[:-len("T.mitrials")]
                                         + "E.mitrials")
        if test_path.exists():
            pairs.append((train_path, test_path))
    return pairs


def run_benchmark(config, subject_pairs, n_jobs=1):
    """Train and evaluate one subject per (train file, test file) pair.

    Flagged trials are excluded on both sides before training.  A subject
    that fails raises a warning and is reported in ``failures``; the run
    errors only when every subject fails.

    Returns
    -------
    RunReport
    """
    subject_pairs = list(subject_pairs)
    if not subject_pairs:
        raise DataError("no subjects to benchmark")
    results = []
    failures = []
    for train_path, test_path in subject_pairs:
        try:
            train, _ = exclude_artifacts(load_trials(train_path))
            test, _ = exclude_artifacts(load_trials(test_path))
            model = fit(config, train, n_jobs=n_jobs)
            report = evaluate(model, test, n_jobs=n_jobs)
            results.extend(report.results)
        except (MibciError, OSError) as exc:
            subject = Path(train_path).stem
            warnings.warn(f"subject {subject} failed: {exc}", RuntimeWarning,
                          stacklevel=2)
            failures.append((subject, str(exc)))
    if not results:
        raise DataError("all subjects failed during the benchmark")
    return RunReport(results=tuple(results), failures=tuple(failures))


def _model_header(model):
    ex = model.extractor
    clf = model.svm
    header = {
        "format_version": 1,
        "config": model.config.to_dict(),
        "fs": ex.fs,
        "n_channels": ex.n_channels,
        "n_samples": ex.n_samples,
        "windows": [[w.t_start, w.t_end] for w in ex.windows],
        "bands": [[b.f_lo, b.f_hi] for b in ex.bands],
        "n_per_side": N_PER_SIDE,
        "train_time_s": model.train_time_s,
        "classes": [int(c) for c in clf.classes],
        "svm": {
            "kernel": clf.kernel, "C": clf.C, "gamma": clf.gamma,
            "degree": clf.degree, "coef0": clf.coef0,
            "gaps": [float(g) for g in clf.gaps],
        },
    }
    if model.cv is not None:
        header["cv"] = {
            "c_grid": [float(c) for c in model.cv.c_grid],
            "fold_accuracy": model.cv.fold_accuracy.tolist(),
            "mean_accuracy": model.cv.mean_accuracy.tolist(),
            "selected_c": model.cv.selected_c,
            "selected_index": model.cv.selected_index,
        }
    return header


def save_model(model, path):
    """Serialize a trained model to a self-contained binary file.

    Layout: magic string, little-endian ``u32`` header length, UTF-8 JSON
    header declaring the blocks, then the raw float64 little-endian block
    payloads in declared order.
    """
    blocks = []
    ex = model.extractor
    clf = model.svm
    if ex.kind == "csp":
        blocks.append(("csp_filters",
                       np.stack([b.filters for b in ex.banks])))
    else:
        blocks.append(("riemann_refs", np.stack([r.ref for r in ex.refs])))
    blocks.append(("feature_mean", clf.feature_mean))
    blocks.append(("feature_std", clf.feature_std))
    if clf.kernel == "linear":
        blocks.append(("svm_weights", clf.weights))
    else:
        blocks.append(("svm_dual_coef", clf.dual_coef))
        blocks.append(("svm_support_vectors", clf.support_vectors))
    blocks.append(("svm_bias", clf.bias))

    header = _model_header(model)
    header["blocks"] = [{"name": n, "shape": list(np.shape(a))}
                        for n, a in blocks]
    raw = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path):
    """Restore a model written by :func:`save_model`.

    Reloading is exact: the restored model reproduces the original
    predictions bit for bit.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MODEL_MAGIC) + 4 or blob[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise DataError(f"{path}: not a model file (bad magic)")
    off = len(MODEL_MAGIC)
    (header_len,) = struct.unpack_from("<I", blob, off)
    off += 4
    try:
        header = json.loads(blob[off : off + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: malformed header ({exc})") from exc
    off += header_len
    if header.get("format_version") != 1:
        raise DataError(f"{path}: unsupported format version")

    arrays = {}
    for spec in header["blocks"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if off + nbytes > len(blob):
            raise DataError(f"{path}: payload length mismatch in block "
                            f"{spec['name']!r}")
        arrays[spec["name"]] = np.frombuffer(
            blob, dtype="<f8", count=count, offset=off).reshape(shape).copy()
        off += nbytes
    if off != len(blob):
        raise DataError(f"{path}: trailing bytes after the declared blocks")

    cfg_dict = dict(header["config"])
    if cfg_dict.get("c_grid") is not None:
        cfg_dict["c_grid"] = tuple(cfg_dict["c_grid"])
    config = ExperimentConfig(**cfg_dict)

    windows = [dsp.WindowSpec(*w) for w in header["windows"]]
    bands = [dsp.BandSpec(*b) for b in header["bands"]]
    ex = FeatureExtractor(
        kind=config.feature, fs=float(header["fs"]),
        n_channels=int(header["n_channels"]),
        n_samples=int(header["n_samples"]),
        windows=windows, bands=bands,
    )
    nb = len(bands)
    if ex.kind == "csp":
        filters = arrays["csp_filters"]
        n_per_side = int(header["n_per_side"])
        labels = tuple(pair for pair in csp_mod.PAIR_ORDER
                       for _ in range(2 * n_per_side))
        ex.banks = [
            csp_mod.CspBank(window_index=i // nb, band_index=i % nb,
                            filters=filters[i], pair_labels=labels)
            for i in range(filters.shape[0])
        ]
    else:
        refs = arrays["riemann_refs"]
        ex.refs = [
            riemann.RiemannRef(band_index=bi, kind=config.mean_kind,
                               ref=refs[bi], inv_sqrt=spd.invsqrtm(refs[bi]))
            for bi in range(refs.shape[0])
        ]

    sv = header["svm"]
    clf = svm_mod.SvmModel(
        kernel=sv["kernel"], C=float(sv["C"]),
        classes=np.asarray(header["classes"], dtype=np.int64),
        bias=arrays["svm_bias"],
        feature_mean=arrays["feature_mean"],
        feature_std=arrays["feature_std"],
        gamma=sv["gamma"], degree=sv["degree"], coef0=sv["coef0"],
        gaps=np.asarray(sv["gaps"]),
    )
    if clf.kernel == "linear":
        clf.weights = arrays["svm_weights"]
    else:
        clf.dual_coef = arrays["svm_dual_coef"]
        clf.support_vectors = arrays["svm_support_vectors"]

    cv = None
    if "cv" in header:
        cvh = header["cv"]
        cv = svm_mod.CvReport(
            c_grid=np.asarray(cvh["c_grid"]),
            fold_accuracy=np.asarray(cvh["fold_accuracy"]),
            mean_accuracy=np.asarray(cvh["mean_accuracy"]),
            selected_c=float(cvh["selected_c"]),
            selected_index=int(cvh["selected_index"]),
        )
    return TrainedModel(config=config, extractor=ex, svm=clf, cv=cv,
                        train_time_s=float(header["train_time_s"]))
