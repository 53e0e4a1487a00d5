"""Gauss-Markov mobility inside a disc, with specular reflection at the rim.

Speeds are in km/h, headings in radians, positions in metres relative to the
gateway. Headings are kept unwrapped so the mean-reverting update never jumps
across the 2*pi seam.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KMH_TO_MS = 1.0 / 3.6


@dataclass
class MobilityConfig:
    model: str = "static"  # "static" | "gauss_markov"
    mean_kmh: float = 5.0
    sigma_kmh: float = 5.0
    alpha: float = 0.75
    step_s: float = 60.0
    heading_sigma_rad: float = 0.4

    def __post_init__(self):
        if self.model not in ("static", "gauss_markov"):
            raise ValueError(f"unknown mobility model {self.model!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.step_s <= 0 or self.sigma_kmh < 0 or self.heading_sigma_rad < 0:
            raise ValueError("step and sigmas must be non-negative (step positive)")

    @property
    def moving(self) -> bool:
        return self.model == "gauss_markov"


def gauss_markov_update(x, y, v, heading, mean_v, sigma_v, mean_heading, sigma_heading,
                        alpha: float, step_s: float, radius_m: float, noise: np.ndarray):
    """Advance arrays in place by one step.

    ``noise`` has shape ``(2, n)``: standard normals for speed and heading.
    """
    root = np.sqrt(1.0 - alpha * alpha)
    v *= alpha
    v += (1.0 - alpha) * mean_v + root * sigma_v * noise[0]
    heading *= alpha
    heading += (1.0 - alpha) * mean_heading + root * sigma_heading * noise[1]
    travel = v * KMH_TO_MS * step_s
    x += travel * np.cos(heading)
    y += travel * np.sin(heading)
    _reflect(x, y, v, heading, mean_heading, travel, radius_m)


def _reflect(x, y, v, heading, mean_heading, travel, radius_m):
    r2 = x * x + y * y
    out = np.flatnonzero(r2 > radius_m * radius_m)
    if out.size == 0:
        return
    for _ in range(4):
        if out.size == 0:
            break
        sgn = np.where(travel[out] < 0.0, -1.0, 1.0)
        length = np.abs(travel[out])
        h = heading[out]
        dx, dy = sgn * np.cos(h), sgn * np.sin(h)
        # start of the segment, clipped inside in case of rounding
        px, py = x[out] - length * dx, y[out] - length * dy
        b = px * dx + py * dy
        c = px * px + py * py - radius_m * radius_m
        t = -b + np.sqrt(np.maximum(b * b - c, 0.0))
        t = np.clip(t, 0.0, length)
        qx, qy = px + t * dx, py + t * dy
        nq = np.hypot(qx, qy)
        nx, ny = qx / nq, qy / nq
        dot = dx * nx + dy * ny
        rx, ry = dx - 2.0 * dot * nx, dy - 2.0 * dot * ny
        rest = length - t
        x[out] = qx + rest * rx
        y[out] = qy + rest * ry
        new_h = np.arctan2(sgn * ry, sgn * rx)
        delta = np.angle(np.exp(1j * (new_h - h)))
        heading[out] = h + delta
        mean_heading[out] += delta
        travel[out] = sgn * rest
        # a long step can leave the disc again after one bounce
        still = (x[out] ** 2 + y[out] ** 2) > radius_m * radius_m * (1.0 + 1e-12)
        out = out[still]
    if out.size:
        scale = radius_m * (1.0 - 1e-9) / np.hypot(x[out], y[out])
        x[out] *= scale
        y[out] *= scale


def gauss_markov_step(ed, alpha: float, step_s: float, rng, radius_m: float) -> None:
    """Single-device form of :func:`gauss_markov_update` acting on an EndDevice."""
    arrs = [np.array([val], dtype=float) for val in (
        ed.x_m, ed.y_m, ed.velocity_kmh, ed.heading_rad, ed.mean_velocity_kmh,
        ed.velocity_sigma, ed.mean_heading_rad, ed.heading_sigma)]
    noise = rng.standard_normal((2, 1))
    x, y, v, h, mv, sv, mh, sh = arrs
    gauss_markov_update(x, y, v, h, mv, sv, mh, sh, alpha, step_s, radius_m, noise)
    ed.x_m, ed.y_m = float(x[0]), float(y[0])
    ed.velocity_kmh, ed.heading_rad = float(v[0]), float(h[0])
    ed.mean_heading_rad = float(mh[0])
