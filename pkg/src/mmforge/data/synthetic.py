"""Seeded synthetic multivariate series: trend + seasonality + coupled AR(1)."""

import logging
from datetime import date, timedelta

import numpy as np

from mmforge.data.dataset import MtsDataset
from mmforge.exceptions import ConfigurationError
from mmforge.models import FeatureSpec, SynthSpec
from mmforge.tensor.rng import Rng
from mmforge.types import FloatArray

logger = logging.getLogger(__name__)

_EPOCH = date(1970, 1, 1)


def default_synth_spec(num_features: int) -> SynthSpec:
    """A spec with distinct periods and a mild noise coupling.

    Returns:
        The spec for ``num_features`` features.
    """
    features = [
        FeatureSpec(
            intercept=float(v),
            trend_slope=0.002 * (v + 1),
            period=24.0 / (v + 1) + 12.0,
            amplitude=1.0 + 0.5 * v,
            noise_sigma=0.2,
            ar_coef=0.6,
        )
        for v in range(num_features)
    ]
    coupling = [
        [0.0 if i == j else 0.1 for j in range(num_features)]
        for i in range(num_features)
    ]
    return SynthSpec(features=features, coupling=coupling)


def _transition(spec: SynthSpec) -> FloatArray:
    """Noise transition ``A = diag(ar) + coupling``; must be stable.

    Raises:
        ConfigurationError: If the spectral radius is not below 1.
    """
    A = np.diag([f.ar_coef for f in spec.features])
    if spec.coupling is not None:
        A = A + np.asarray(spec.coupling, dtype=np.float64)
    radius = float(np.max(np.abs(np.linalg.eigvals(A)))) if A.size else 0.0
    if radius >= 1.0:
        raise ConfigurationError(
            f"noise dynamics are unstable (spectral radius {radius:.3f})"
        )
    return A


def synth_generate(
    E: int, Tlen: int, V: int, spec: SynthSpec | None, seed: int
) -> MtsDataset:
    """Generate an ``E × Tlen × V`` dataset.

    Each feature is ``intercept + slope·t + amplitude·sin(2πt/period + φ)``
    plus the noise process ``n_t = A n_{t-1} + σ ε_t`` started at zero. Entity
    e draws its phases and noise from ``Rng(seed).substream(e)``.

    Returns:
        The dataset, without split or normalization. Timestamps are integer
        indices, or daily dates when ``spec.start_date`` is set.

    Raises:
        ConfigurationError: If the spec does not describe ``V`` features or
            its noise process is unstable.
    """
    spec = spec or default_synth_spec(V)
    if len(spec.features) != V:
        raise ConfigurationError(
            f"synthetic spec describes {len(spec.features)} features, "
            f"{V} requested"
        )
    A = _transition(spec)
    t = np.arange(Tlen, dtype=np.float64)
    sigma = np.array([f.noise_sigma for f in spec.features])
    base = np.stack(
        [f.intercept + f.trend_slope * t for f in spec.features], axis=1
    )

    rng = Rng(seed)
    values = np.empty((E, Tlen, V))
    for e in range(E):
        stream = rng.substream(e)
        if spec.random_phase:
            phases = stream.uniform(0.0, 2.0 * np.pi, (V,))
        else:
            phases = np.zeros(V)
        seasonal = np.stack(
            [
                f.amplitude * np.sin(2.0 * np.pi * t / f.period + phases[v])
                for v, f in enumerate(spec.features)
            ],
            axis=1,
        )
        shocks = stream.normal(1.0, (Tlen, V)) * sigma
        noise = np.zeros((Tlen, V))
        for k in range(1, Tlen):
            noise[k] = A @ noise[k - 1] + shocks[k]
        values[e] = base + seasonal + noise

    if spec.start_date is not None:
        dates = [spec.start_date + timedelta(days=k) for k in range(Tlen)]
        timestamps = tuple(d.isoformat() for d in dates)
        first_day = (spec.start_date - _EPOCH).days
        time_index = (np.arange(Tlen, dtype=np.int64) + first_day) * 86400
    else:
        timestamps = tuple(str(k) for k in range(Tlen))
        time_index = np.arange(Tlen, dtype=np.int64)

    logger.info(f"Generated synthetic dataset {values.shape} (seed {seed})")
    return MtsDataset(
        entities=tuple(f"entity_{e:03d}" for e in range(E)),
        timestamps=timestamps,
        time_index=time_index,
        values=values,
        feature_names=tuple(f"feature_{v}" for v in range(V)),
    )
