"""Planar geometry: outline sampling and circle contact resolution."""
from __future__ import annotations

import numpy as np


def unit(v, eps=1e-12):
    n = float(np.hypot(v[0], v[1]))
    return np.zeros(2) if n < eps else np.asarray(v, dtype=np.float64) / n


def cap_norm(v, cap=1.0):
    n = float(np.hypot(v[0], v[1]))
    return np.asarray(v, dtype=np.float64) * (cap / n) if n > cap else np.asarray(v, dtype=np.float64)


def circle_outline(center, radius, n):
    ang = 2 * np.pi * np.arange(n) / n
    return np.stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)], axis=1)


def rect_outline(lo, hi, n):
    """``n`` points at equal arc length around an axis-aligned rectangle."""
    w, h = hi[0] - lo[0], hi[1] - lo[1]
    per = 2 * (w + h)
    s = per * np.arange(n) / n
    pts = np.empty((n, 2))
    for i, d in enumerate(s):
        if d < w:
            pts[i] = (lo[0] + d, lo[1])
        elif d < w + h:
            pts[i] = (hi[0], lo[1] + d - w)
        elif d < 2 * w + h:
            pts[i] = (hi[0] - (d - w - h), hi[1])
        else:
            pts[i] = (lo[0], hi[1] - (d - 2 * w - h))
    return pts


def lift(points2d, z):
    return np.concatenate([points2d, np.full((len(points2d), 1), float(z))], axis=1)


def push_out_of_circle(c, r_body, pusher, r_pusher):
    """Move a circle at ``c`` so it no longer overlaps the pusher circle."""
    d = c - pusher
    dist = float(np.hypot(*d))
    need = r_body + r_pusher
    if dist >= need:
        return c
    direction = d / dist if dist > 1e-12 else np.array([0.0, 1.0])
    return pusher + direction * need


def closest_on_segment(p, a, b):
    ab = b - a
    t = float(np.clip(np.dot(p - a, ab) / max(np.dot(ab, ab), 1e-12), 0.0, 1.0))
    return a + t * ab


def push_out_of_capsule(c, r_body, a, b, r_caps):
    return push_out_of_circle(c, r_body, closest_on_segment(c, a, b), r_caps)


def push_out_of_rect(c, r, lo, hi):
    """Resolve overlap of a circle with an axis-aligned box (minimum translation)."""
    q = np.clip(c, lo, hi)
    d = c - q
    dist = float(np.hypot(*d))
    if dist >= r:
        return c
    if dist > 1e-12:
        return q + d / dist * r
    # centre inside the box: leave through the nearest face
    gaps = [c[0] - lo[0], hi[0] - c[0], c[1] - lo[1], hi[1] - c[1]]
    i = int(np.argmin(gaps))
    out = c.copy()
    if i == 0:
        out[0] = lo[0] - r
    elif i == 1:
        out[0] = hi[0] + r
    elif i == 2:
        out[1] = lo[1] - r
    else:
        out[1] = hi[1] + r
    return out
