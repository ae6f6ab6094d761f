"""Attack detection via waveform and output-layer statistics.

Two per-record statistics feed a two-sample Kolmogorov-Smirnov test:

  * PAPR, max|c_n|^2 / mean|c_n|^2 over the 1024-sample waveform.  The
    ratio cancels any scalar channel gain, which is what makes it usable
    after over-the-air delivery.
  * Softmax entropy, H = -sum_i p_i log p_i (natural log, 0 log 0 = 0),
    of the classifier's output probabilities.  A confidently trained
    classifier concentrates legitimate records near 0 entropy; attacked
    records spread out.

Statistics are grouped by the model's *predicted* class (true labels are
unavailable to a deployed detector) and compared in the three-instance
design: (1) full legitimate set vs full adversarial set, (2) one random
subset of each at a configured size, (3) a control of two disjoint
legitimate subsets, which calibrates how much confidence the subset size
can support at all.

The KS statistic is D = sup |F_a - F_b| over the pooled sample points
(right-continuous empirical CDFs).  The p-value uses the asymptotic
Kolmogorov series with the small-sample effective-size correction:

    n_e = n m / (n + m)
    lam = (sqrt(n_e) + 0.12 + 0.11 / sqrt(n_e)) * D
    p   = 2 * sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lam^2)

truncated once a term falls below 1e-12 (after 100 non-converging terms,
as happens when D = 0, the sum is taken to be 1) and clamped to [0, 1].
"""

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, deinterleave_iq
from .model import Model, evaluate
from .signal import ModClass

STAT_PAPR = "papr"
STAT_ENTROPY = "entropy"
STAT_KINDS = (STAT_PAPR, STAT_ENTROPY)

SOURCE_LEGITIMATE = "legitimate"
SOURCE_ADVERSARIAL = "adversarial"

INSTANCE_FULL = "full"
INSTANCE_SUBSET = "subset"
INSTANCE_CONTROL = "control"
INSTANCES = (INSTANCE_FULL, INSTANCE_SUBSET, INSTANCE_CONTROL)

FLAG_CLEAN = "clean"
FLAG_SUSPECT = "suspect"


class UndefinedStatisticError(ValueError):
    """Raised when a statistic is undefined for the input (all-zero frame)."""


class MissingCalibrationError(KeyError):
    """No calibration sample exists for the point's predicted class."""


@dataclass
class StatSample:
    values: np.ndarray
    source: str  # legitimate | adversarial
    class_label: ModClass  # the model's predicted class
    stat_kind: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.size == 0:
            raise ValueError("StatSample must not be empty")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("StatSample values must be finite")

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class KSResult:
    d_statistic: float
    p_value: float
    n: int
    m: int


@dataclass
class KSReport:
    """Per (class, instance) KS outcomes for one subset size."""

    subset_size: int
    results: dict

    def merge(self, other: "KSReport") -> None:
        if other.subset_size != self.subset_size:
            raise ValueError("cannot merge reports with different subset sizes")
        self.results.update(other.results)

    def classes(self) -> list[ModClass]:
        return sorted({cls for cls, _ in self.results})


def papr(samples) -> float:
    """Peak-to-average power ratio (linear, >= 1) of a complex waveform."""
    samples = np.asarray(samples)
    if samples.size == 0:
        raise ValueError("papr of an empty waveform")
    power = np.abs(samples.astype(np.complex128)) ** 2
    mean = power.mean()
    if mean == 0.0:
        raise UndefinedStatisticError("papr undefined for an all-zero frame")
    return float(power.max() / mean)


def softmax_entropy(p) -> float:
    """-sum p_i log p_i in nats, with 0 log 0 = 0; range [0, log C]."""
    p = np.asarray(p, dtype=np.float64)
    terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    return float(-terms.sum())


def _ecdf_values(sorted_sample: np.ndarray, points: np.ndarray) -> np.ndarray:
    return np.searchsorted(sorted_sample, points, side="right") / sorted_sample.size


def ks_two_sample(a, b) -> KSResult:
    """Two-sample KS test: D over all pooled points, asymptotic p-value."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("ks_two_sample requires non-empty samples")
    pooled = np.concatenate([a, b])
    d = float(np.max(np.abs(_ecdf_values(a, pooled) - _ecdf_values(b, pooled))))
    return KSResult(d_statistic=d, p_value=ks_pvalue(d, a.size, b.size), n=a.size, m=b.size)


def ks_pvalue(d: float, n: int, m: int) -> float:
    """Asymptotic Kolmogorov p-value with the small-sample correction."""
    if not 0.0 <= d <= 1.0:
        raise ValueError("d must be in [0, 1]")
    if n < 1 or m < 1:
        raise ValueError("sample sizes must be >= 1")
    ne = n * m / (n + m)
    lam = (math.sqrt(ne) + 0.12 + 0.11 / math.sqrt(ne)) * d
    total = 0.0
    sign = 1.0
    for j in range(1, 101):
        term = math.exp(-2.0 * j * j * lam * lam)
        total += sign * 2.0 * term
        if term < 1e-12:
            return min(1.0, max(0.0, total))
        sign = -sign
    return 1.0  # series did not converge (lam ~ 0)


def build_stat_samples(
    ds: Dataset,
    m: Model,
    stat_kind: str,
    source: str = SOURCE_LEGITIMATE,
) -> dict[ModClass, StatSample]:
    """Per-record statistics grouped by the model's predicted class.

    Classes the model never predicts are absent from the result; callers
    should surface that as a notice rather than an error.
    """
    if stat_kind not in STAT_KINDS:
        raise ValueError(f"unknown stat kind {stat_kind!r}")
    if len(ds) == 0:
        raise ValueError("cannot build statistics from an empty dataset")
    result = evaluate(m, ds)
    preds = result.probs.argmax(axis=1)

    if stat_kind == STAT_PAPR:
        waves = ds.vectors[:, 0::2].astype(np.float64) + 1j * ds.vectors[:, 1::2]
        power = np.abs(waves) ** 2
        means = power.mean(axis=1)
        if np.any(means == 0.0):
            bad = int(np.nonzero(means == 0.0)[0][0])
            raise UndefinedStatisticError(f"papr undefined for all-zero record {bad}")
        values = power.max(axis=1) / means
    else:
        p = result.probs
        values = -np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0).sum(axis=1)

    groups: dict[ModClass, StatSample] = {}
    for cls in ModClass:
        if cls >= m.class_count:
            continue
        mask = preds == int(cls)
        if mask.any():
            groups[cls] = StatSample(
                values=values[mask], source=source, class_label=cls, stat_kind=stat_kind
            )
    return groups


def missing_classes(groups: dict, class_count: int) -> list[ModClass]:
    return [cls for cls in ModClass if cls < class_count and cls not in groups]


def run_three_instance_experiment(
    legit: StatSample,
    adex: StatSample,
    subset_size: int,
    seed,
) -> KSReport:
    """The paper-style three tests for one predicted class:

      full    -- entire legitimate set vs entire adversarial set
      subset  -- one random subset_size draw from each
      control -- two disjoint random subset_size draws from the
                 legitimate set (same-distribution sanity check)
    """
    if legit.class_label != adex.class_label or legit.stat_kind != adex.stat_kind:
        raise ValueError("legit and adex samples must share class and statistic")
    if subset_size < 1:
        raise ValueError("subset_size must be >= 1")
    if subset_size > min(len(legit), len(adex)):
        raise ValueError(
            f"subset_size {subset_size} exceeds sample sizes "
            f"({len(legit)} legit, {len(adex)} adversarial)"
        )
    if 2 * subset_size > len(legit):
        raise ValueError(
            f"control instance needs 2*{subset_size} disjoint legitimate values, "
            f"have {len(legit)}"
        )
    rng = np.random.default_rng(seed)
    cls = legit.class_label

    full = ks_two_sample(legit.values, adex.values)
    sub_legit = rng.choice(legit.values, size=subset_size, replace=False)
    sub_adex = rng.choice(adex.values, size=subset_size, replace=False)
    subset = ks_two_sample(sub_legit, sub_adex)
    control_idx = rng.choice(len(legit), size=2 * subset_size, replace=False)
    control = ks_two_sample(
        legit.values[control_idx[:subset_size]],
        legit.values[control_idx[subset_size:]],
    )
    return KSReport(
        subset_size=subset_size,
        results={
            (cls, INSTANCE_FULL): full,
            (cls, INSTANCE_SUBSET): subset,
            (cls, INSTANCE_CONTROL): control,
        },
    )


def _quantile_band(values: np.ndarray, alpha: float) -> tuple[float, float]:
    s = np.sort(values)
    k_lo = math.floor(alpha / 2.0 * (s.size - 1))
    k_hi = math.ceil((1.0 - alpha / 2.0) * (s.size - 1))
    return float(s[k_lo]), float(s[k_hi])


def detect_point(
    m: Model,
    x,
    calibration: dict[ModClass, StatSample],
    alpha: float = 0.01,
) -> str:
    """Screen one input vector against held-out legitimate calibration.

    The point's statistic (the calibration's stat kind) is compared to the
    central [alpha/2, 1 - alpha/2] empirical quantile band of the
    calibration sample for the model's predicted class.
    """
    if not calibration:
        raise MissingCalibrationError("empty calibration")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    x = np.asarray(x, dtype=np.float32)
    from .model import forward, softmax  # cheap single-record path

    probs = softmax(forward(m, x))
    pred = ModClass(int(probs.argmax()))
    if pred not in calibration:
        raise MissingCalibrationError(f"no calibration for predicted class {pred.name}")
    cal = calibration[pred]
    if cal.stat_kind == STAT_PAPR:
        stat = papr(deinterleave_iq(x.astype(np.float64)))
    else:
        stat = softmax_entropy(probs)
    lo, hi = _quantile_band(cal.values, alpha)
    return FLAG_CLEAN if lo <= stat <= hi else FLAG_SUSPECT


def report_rows(stat_kind: str, report: KSReport) -> list[dict]:
    """Flatten a KSReport into CSV-ready dict rows (Fig-5-style layout)."""
    rows = []
    for cls in report.classes():
        for instance in INSTANCES:
            r = report.results[(cls, instance)]
            rows.append(
                {
                    "stat_kind": stat_kind,
                    "class": cls.name,
                    "instance": instance,
                    "subset_size": report.subset_size,
                    "n": r.n,
                    "m": r.m,
                    "D": r.d_statistic,
                    "p_value": r.p_value,
                }
            )
    return rows
