"""Distances, similarities and attack statistics.

``js_distance`` is the Jensen-Shannon distance: the square root of the base-2
JS divergence, bounded in [0, 1].
``ssim`` is the Gaussian-windowed structural similarity (11x11, sigma 1.5,
K1=0.01, K2=0.03, data range 1) averaged over the valid region.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from boss.errors import StructuralError

LOG_EPS = 1e-12
SSIM_SIGMA = 1.5
SSIM_TRUNCATE = 3.5  # radius int(3.5 * 1.5 + 0.5) = 5 -> 11x11 window
SSIM_WIN = 11
SSIM_K1 = 0.01
SSIM_K2 = 0.03

REPORT_HEADER = ["sample_id", "true_label", "pred_label", "target_label", "ssim", "js",
                 "confidence", "success", "iterations"]


def fmt(value):
    """Fixed 17-significant-digit float formatting used by every CSV writer."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def check_pmf(p, name="pmf", atol=1e-9):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise StructuralError(f"{name} must be a non-empty vector")
    if np.any(p < 0) or not np.isclose(p.sum(), 1.0, rtol=0, atol=atol):
        raise StructuralError(f"{name} is not on the probability simplex (sum={p.sum()!r})")
    return p


def _entropy2(p):
    nz = p > 0
    return -np.sum(p[nz] * np.log2(p[nz]))


def js_distance(p, q):
    """Square root of the base-2 Jensen-Shannon divergence; lies in [0, 1]."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise StructuralError(f"PMF lengths differ: {p.shape} vs {q.shape}")
    m = 0.5 * (p + q)
    value = _entropy2(m) - 0.5 * (_entropy2(p) + _entropy2(q))
    return float(np.sqrt(min(max(value, 0.0), 1.0)))


def _as_image(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise StructuralError(f"ssim needs a 2-D image, got shape {a.shape}")
    if min(a.shape) < SSIM_WIN:
        raise StructuralError(f"image {a.shape} smaller than the {SSIM_WIN}x{SSIM_WIN} window")
    return a


def ssim(a, b):
    a = _as_image(a)
    b = _as_image(b)
    if a.shape != b.shape:
        raise StructuralError(f"image shapes differ: {a.shape} vs {b.shape}")

    def blur(img):
        return gaussian_filter(img, sigma=SSIM_SIGMA, truncate=SSIM_TRUNCATE, mode="reflect")

    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    pad = (SSIM_WIN - 1) // 2
    return float(s[pad:-pad, pad:-pad].mean())


def mse(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise StructuralError(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def mse_grad(a, b):
    """d mse(a, b) / d a."""
    a = np.asarray(a, dtype=np.float64)
    return 2.0 * (a - np.asarray(b, dtype=np.float64)) / a.size


def is_image(shape):
    return shape is not None and len(shape) == 2 and min(shape) >= SSIM_WIN


def similarity(a, b, image_shape=None):
    """SSIM when ``image_shape`` describes a usable image, else ``1 - mse``."""
    if is_image(image_shape):
        return ssim(np.reshape(a, image_shape), np.reshape(b, image_shape))
    return 1.0 - mse(np.ravel(a), np.ravel(b))


def d_distance(a, b, image_shape=None):
    """Input-side distance ``1 - SSIM``; plain MSE for non-image inputs.

    SSIM can dip below zero, so the raw value lies in [0, 2]; callers that
    report it as a fraction clip to [0, 1] themselves.
    """
    if image_shape is None and np.ndim(a) == 2:
        image_shape = np.shape(a)
    if is_image(image_shape):
        return 1.0 - ssim(np.reshape(a, image_shape), np.reshape(b, image_shape))
    return mse(np.ravel(a), np.ravel(b))


def cross_entropy(p_hat, p_d):
    p_hat = np.asarray(p_hat, dtype=np.float64)
    p_d = np.asarray(p_d, dtype=np.float64)
    if p_hat.shape != p_d.shape:
        raise StructuralError(f"PMF lengths differ: {p_hat.shape} vs {p_d.shape}")
    return float(-np.sum(p_d * np.log(p_hat + LOG_EPS)))


def cross_entropy_grad(p_hat, p_d):
    """d cross_entropy(p_hat, p_d) / d p_hat."""
    return -np.asarray(p_d, dtype=np.float64) / (np.asarray(p_hat, dtype=np.float64) + LOG_EPS)


@dataclass
class BoundaryStats:
    top2: tuple
    l2: float
    linf: float


def boundary_stats(pmf, mode="pair"):
    """Distance of a PMF from the two-class (``pair``) or M-class (``uniform``) boundary."""
    p = np.asarray(pmf, dtype=np.float64)
    top = np.sort(p)[::-1]
    w = (float(top[0]), float(top[1]) if p.size > 1 else 0.0)
    if mode == "pair":
        dev = np.array(w) - 0.5
    elif mode == "uniform":
        dev = p - 1.0 / p.size
    else:
        raise ValueError(f"unknown boundary mode {mode!r}")
    return BoundaryStats(top2=w, l2=float(np.linalg.norm(dev)), linf=float(np.max(np.abs(dev))))


@dataclass
class EvalRow:
    sample_id: int
    true_label: int | None
    pred_label: int
    target_label: int | None
    ssim: float
    js: float
    confidence: float
    success: bool
    iterations: int


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    alpha: float = 0.0
    sigma_s: float = 0.0
    sigma_js: float = 0.0
    sigma_con: float = 0.0
    ca: float | None = None

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in self.rows:
            w.writerow([fmt(getattr(r, k)) for k in REPORT_HEADER])
        n = len(self.rows)
        w.writerow(["mean", fmt(self.ca), "", "", fmt(self.sigma_s / 100.0), fmt(self.sigma_js),
                    fmt(self.sigma_con / 100.0), fmt(self.alpha),
                    fmt(sum(r.iterations for r in self.rows) / n)])
        return buf.getvalue()

    def summary(self):
        ca = "n/a" if self.ca is None else f"{100 * self.ca:.2f}%"
        return (f"alpha={100 * self.alpha:.2f}% sigma_s={self.sigma_s:.2f}% "
                f"sigma_JS={self.sigma_js:.4f} sigma_con={self.sigma_con:.2f}% CA={ca}")


def one_hot_target(p_d):
    """Target label if ``p_d`` is one-hot, else None."""
    p_d = np.asarray(p_d)
    t = int(np.argmax(p_d))
    return t if p_d[t] == 1.0 else None


def evaluate_batch(results, specs, classifier, true_labels=None):
    """Attack statistics over a batch of synthesis results.

    A row succeeds when the prediction hits the one-hot target (BOSS-T style);
    for non-one-hot specs it succeeds when the synthesis met both thresholds.
    Confidence is the probability assigned to the true label, or to the
    predicted label when no true label is known.
    """
    if not results:
        raise ValueError("cannot evaluate an empty batch")
    if len(results) != len(specs):
        raise StructuralError(f"{len(results)} results but {len(specs)} specs")
    if true_labels is None:
        true_labels = [None] * len(results)
    rows = []
    for i, (res, spec, y) in enumerate(zip(results, specs, true_labels)):
        pmf = classifier.predict(res.x)
        pred = int(np.argmax(pmf))
        target = one_hot_target(spec.p_d)
        success = pred == target if target is not None else res.status == "satisfied"
        rows.append(EvalRow(
            sample_id=i,
            true_label=y,
            pred_label=pred,
            target_label=target,
            ssim=similarity(res.x, spec.x_d, spec.image_shape),
            js=js_distance(pmf, spec.p_d),
            confidence=float(pmf[y] if y is not None else pmf[pred]),
            success=bool(success),
            iterations=res.iterations,
        ))
    return report_from_rows(rows)


def report_from_rows(rows):
    if not rows:
        raise ValueError("cannot evaluate an empty batch")
    labelled = [r for r in rows if r.true_label is not None]
    return EvalReport(
        rows=rows,
        alpha=float(np.mean([r.success for r in rows])),
        sigma_s=100.0 * float(np.mean([r.ssim for r in rows])),
        sigma_js=float(np.mean([r.js for r in rows])),
        sigma_con=100.0 * float(np.mean([r.confidence for r in rows])),
        ca=float(np.mean([r.pred_label == r.true_label for r in labelled])) if labelled else None,
    )
