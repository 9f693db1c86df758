"""Gaussian-mixture summaries of activation maps.

Each of the 21 activation volumes is reduced to the parameters of a
k-component 1-D Gaussian mixture fitted by EM to the activation values
inside the ROI.  Per map the descriptor is [mu_1, var_1, w_1, ...,
mu_k, var_k, w_k] with components sorted by ascending mean, giving a
3*k*21-dimensional vector per volume (126 at k=2).

The fit is fully deterministic: initial means sit at the (j-0.5)/k sample
quantiles, initial variances equal the sample variance and weights are
uniform.  Responsibilities are accumulated with numpy's pairwise
summation, so identical samples give identical fits everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cnn import ActivationSet
from .errors import EmptyMask, EmptySamples, InvalidK, LengthMismatch, ShapeMismatch
from .volume import RoiMask, Volume3D

EM_TOL = 1e-8
EM_MAX_ITER = 500
SURPLUS_WEIGHT = 1e-6

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GmmComponent:
    mu: float
    sigma2: float
    omega: float


@dataclass(frozen=True)
class GmmFit:
    """EM result; components are sorted by ascending mean (ties: heavier first)."""

    components: tuple[GmmComponent, ...]
    log_likelihood: float
    iterations: int
    converged: bool
    ll_trace: np.ndarray  # total log-likelihood after each EM iteration

    @property
    def k(self) -> int:
        return len(self.components)

    def as_triples(self) -> np.ndarray:
        return np.array(
            [v for c in self.components for v in (c.mu, c.sigma2, c.omega)], dtype=np.float64
        )

    def density(self, x: np.ndarray) -> np.ndarray:
        """Mixture pdf evaluated at x."""
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        for c in self.components:
            out += (
                c.omega
                * np.exp(-0.5 * (x - c.mu) ** 2 / c.sigma2)
                / math.sqrt(2.0 * math.pi * c.sigma2)
            )
        return out


@dataclass(frozen=True)
class FeatureVector:
    """Per-patient deep radiomic descriptor in map-major component order."""

    values: np.ndarray
    patient_id: str = ""
    modality_reduction: str = "none"

    def __post_init__(self):
        if not np.isfinite(self.values).all():
            raise ValueError("feature vector contains NaN or Inf")

    def __len__(self) -> int:
        return len(self.values)


def variance_floor(samples: np.ndarray) -> float:
    """Smallest admissible component variance for this sample set."""
    spread = float(samples.max() - samples.min())
    return max(1e-6 * spread * spread, 1e-12)


def collect_samples(vol: Volume3D, mask: RoiMask) -> np.ndarray:
    """Activation values at in-ROI voxels, as a flat float64 array."""
    if vol.dims != mask.dims:
        raise ShapeMismatch(f"map dims {vol.dims} != mask dims {mask.dims}")
    if mask.count == 0:
        raise EmptyMask("mask selects no voxels")
    return np.asarray(vol.data, dtype=np.float64)[mask.voxels == 1]


def _estep(powers, mu, var, w):
    """Responsibilities (k, n) and total log-likelihood for the mixture.

    The log joint per component is quadratic in x, so it is evaluated as
    one (k, 3) @ (3, n) product against precomputed [1, x, x^2] rows;
    normalisation uses the max-subtraction log-sum-exp form.
    """
    inv2v = 0.5 / var
    coeffs = np.stack(
        [
            np.log(w) - 0.5 * (_LOG_2PI + np.log(var)) - inv2v * mu * mu,
            2.0 * inv2v * mu,
            -inv2v,
        ],
        axis=1,
    )
    log_joint = coeffs @ powers
    top = np.maximum.reduce(log_joint, axis=0)
    log_joint -= top
    np.exp(log_joint, out=log_joint)
    total = log_joint.sum(axis=0)
    ll = float((top + np.log(total)).sum())
    log_joint /= total
    return log_joint, ll


def em_fit(
    samples,
    k: int,
    seed: int = 0,
    *,
    init: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
    tol: float = EM_TOL,
    max_iter: int = EM_MAX_ITER,
) -> GmmFit:
    """Fit a k-component 1-D Gaussian mixture by EM.

    `seed` is part of the call signature for forward compatibility with
    randomised tie-breaking; the default initializer is deterministic so it
    is currently unused.  `init` overrides the initial (means, variances,
    weights), mainly for permutation-invariance testing.

    If the samples hold fewer than k distinct values, the surplus
    components are emitted as floored-variance duplicates at the sample
    maximum with near-zero weight.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptySamples("cannot fit mixture to zero samples")
    if k < 1:
        raise InvalidK(f"k must be >= 1, got {k}")

    floor = variance_floor(x)
    n_distinct = len(np.unique(x))
    if n_distinct < k:
        base = em_fit(x, n_distinct, seed, tol=tol, max_iter=max_iter)
        comps = list(base.components)
        top = float(x.max())
        comps += [GmmComponent(top, floor, SURPLUS_WEIGHT)] * (k - n_distinct)
        total = sum(c.omega for c in comps)
        comps = [GmmComponent(c.mu, c.sigma2, c.omega / total) for c in comps]
        comps.sort(key=lambda c: (c.mu, -c.omega))
        return GmmFit(
            components=tuple(comps),
            log_likelihood=base.log_likelihood,
            iterations=base.iterations,
            converged=base.converged,
            ll_trace=base.ll_trace,
        )

    if init is None:
        q = (np.arange(k) + 0.5) / k
        mu = np.quantile(x, q)
        var = np.full(k, max(float(x.var()), floor))
        w = np.full(k, 1.0 / k)
    else:
        mu = np.asarray(init[0], dtype=np.float64).copy()
        var = np.maximum(np.asarray(init[1], dtype=np.float64), floor)
        w = np.asarray(init[2], dtype=np.float64)
        w = w / w.sum()

    x2 = x * x
    powers = np.stack([np.ones_like(x), x, x2])
    resp, ll = _estep(powers, mu, var, w)
    trace = [ll]
    converged = False
    iterations = 0
    while iterations < max_iter:
        nj = np.maximum(resp.sum(axis=1), 1e-300)
        w = nj / x.size
        mu = (resp * x).sum(axis=1) / nj
        ex2 = (resp * x2).sum(axis=1) / nj
        var = np.maximum(ex2 - mu * mu, floor)
        iterations += 1

        resp, ll_new = _estep(powers, mu, var, w)
        trace.append(ll_new)
        improvement = ll_new - ll
        ll = ll_new
        if improvement < tol:
            converged = True
            break

    order = np.lexsort((-w, mu))
    comps = tuple(
        GmmComponent(float(mu[j]), float(var[j]), float(w[j])) for j in order
    )
    return GmmFit(
        components=comps,
        log_likelihood=trace[-1],
        iterations=iterations,
        converged=converged,
        ll_trace=np.asarray(trace),
    )


# --------------------------------------------------------------------------
# feature vector assembly
# --------------------------------------------------------------------------

def build_feature_vector(
    acts: ActivationSet, k: int = 2, seed: int = 0, patient_id: str = ""
) -> FeatureVector:
    """Fit each of the 21 maps inside its ROI and concatenate the triples."""
    parts = []
    for vol, mask in acts.maps_with_masks():
        samples = collect_samples(vol, mask)
        parts.append(em_fit(samples, k, seed).as_triples())
    return FeatureVector(
        values=np.concatenate(parts), patient_id=patient_id, modality_reduction="none"
    )


def feature_names(k: int = 2, n_maps: int = 21, prefix: str = "") -> list[str]:
    """CSV column names: f<map>_mu1, f<map>_s1, f<map>_w1, f<map>_mu2, ..."""
    names = []
    for m in range(n_maps):
        for j in range(1, k + 1):
            names += [f"{prefix}f{m:03d}_mu{j}", f"{prefix}f{m:03d}_s{j}", f"{prefix}f{m:03d}_w{j}"]
    return names


def reduce_modalities(vectors: list[FeatureVector], mode: str = "mean") -> FeatureVector:
    """Collapse per-modality vectors into one.

    'mean' averages elementwise and keeps the per-modality length; 'concat'
    stacks them end to end (column names then carry modality tags).
    """
    if not vectors:
        raise LengthMismatch("no feature vectors to reduce")
    length = len(vectors[0])
    if any(len(v) != length for v in vectors):
        raise LengthMismatch(f"feature vectors differ in length: {[len(v) for v in vectors]}")
    if mode == "mean":
        values = np.mean([v.values for v in vectors], axis=0)
    elif mode == "concat":
        values = np.concatenate([v.values for v in vectors])
    else:
        raise ValueError(f"mode must be 'mean' or 'concat', got {mode!r}")
    return FeatureVector(
        values=values, patient_id=vectors[0].patient_id, modality_reduction=mode
    )
