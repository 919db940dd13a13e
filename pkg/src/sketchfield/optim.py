"""Momentum SGD over the raw field grids with joint gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .volume import FieldGradient, VoxelRadianceField

# raw densities below this are effectively dead (softplus gradient ~ 4.5e-5
# at -10), so further descent only delays any later revival of the region
RAW_DENSITY_FLOOR = -10.0


@dataclass
class MomentumSGD:
    """Heavy-ball updates on (raw_density, raw_color).

    The gradient is rescaled so its joint norm never exceeds clip_norm,
    and raw densities are floored after each update. Velocity buffers are
    created lazily and reset whenever the field resolution changes.
    """

    lr: float = 0.05
    momentum: float = 0.9
    clip_norm: float = 1.0
    density_floor: float = RAW_DENSITY_FLOOR
    _vel_density: np.ndarray | None = field(default=None, init=False, repr=False)
    _vel_color: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")

    def step(self, fld: VoxelRadianceField, grad: FieldGradient) -> None:
        if self._vel_density is None \
                or self._vel_density.shape != fld.raw_density.shape:
            self._vel_density = np.zeros_like(fld.raw_density)
            self._vel_color = np.zeros_like(fld.raw_color)
        norm = grad.norm()
        scale = 1.0 if norm <= self.clip_norm else self.clip_norm / norm
        self._vel_density = (self.momentum * self._vel_density
                             - self.lr * scale * grad.d_raw_density)
        self._vel_color = (self.momentum * self._vel_color
                           - self.lr * scale * grad.d_raw_color)
        fld.apply_update(delta_density=self._vel_density,
                         delta_color=self._vel_color)
        np.maximum(fld.raw_density, self.density_floor, out=fld.raw_density)
