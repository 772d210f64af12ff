"""Independent reference computations the tests compare against.

Nothing here calls the code under test except to obtain inputs.
"""
import math

import numpy as np


def central_diff(f, x, h=1e-5):
    """Central finite differences; for vector-valued ``f`` returns the Jacobian."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def normwise_rel_error(analytic, reference):
    """max |a - r| / max |r|: error relative to the largest entry."""
    analytic, reference = np.asarray(analytic), np.asarray(reference)
    scale = np.max(np.abs(reference))
    return float(np.max(np.abs(analytic - reference)) / (scale if scale > 0 else 1.0))


def _gauss(sq_dist, sigma):
    return np.exp(-sq_dist / (2.0 * sigma * sigma))


def product_grid(mu_a, sa, mu_b, sb, dim, half_width=10.0, step=0.5):
    """Trapezoid grid around where the product of two Gaussians has its mass."""
    mu_a, mu_b = np.asarray(mu_a, float), np.asarray(mu_b, float)
    w_a, w_b = 1.0 / sa ** 2, 1.0 / sb ** 2
    center = (w_a * mu_a + w_b * mu_b) / (w_a + w_b)
    s = 1.0 / math.sqrt(w_a + w_b)
    ticks = np.arange(-half_width, half_width + step / 2, step) * s
    axes = np.meshgrid(*[center[k] + ticks for k in range(dim)], indexing="ij")
    return np.stack(axes, axis=-1), (step * s) ** dim


def quadrature_overlap(mu_a, sa, mu_b, sb, dim):
    """Numerical integral of the product of two unit-peak Gaussians."""
    pts, cell = product_grid(mu_a, sa, mu_b, sb, dim)
    da = ((pts - np.asarray(mu_a)) ** 2).sum(axis=-1)
    db = ((pts - np.asarray(mu_b)) ** 2).sum(axis=-1)
    return float((_gauss(da, sa) * _gauss(db, sb)).sum() * cell)


def loop_similarity(image, model):
    """S_sim by explicit loops.

    ``image``: list of ((u, v), sigma, z). ``model``: list of ((u, v), sigma_p, z_p, sigma_h).
    """
    def ov(ma, sa, mb, sb):
        d2 = (ma[0] - mb[0]) ** 2 + (ma[1] - mb[1]) ** 2
        s2 = sa * sa + sb * sb
        return 2 * math.pi * sa * sa * sb * sb / s2 * math.exp(-d2 / (2 * s2))

    num = 0.0
    for mu_i, s_i, z_i in image:
        for mu_p, s_p, z_p, s_h in model:
            gap = abs(z_i - z_p)
            w = 0.0 if gap >= 2 * s_h else 1.0 - gap / (2 * s_h)
            num += w * ov(mu_i, s_i, mu_p, s_p)
    den = 0.0
    for mu_i, s_i, _ in image:
        for mu_k, s_k, _ in image:
            den += ov(mu_i, s_i, mu_k, s_k)
    return num / den


def ray_sphere_hit(fx, fy, cx, cy, u, v, center, radius):
    """Depth of the first hit on one sphere by solving the quadratic directly."""
    dx, dy = (u - cx) / fx, (v - cy) / fy
    # points on the ray: s * (dx, dy, 1); solve |s d - c|^2 = r^2
    a = dx * dx + dy * dy + 1.0
    b = -2.0 * (dx * center[0] + dy * center[1] + center[2])
    c = center[0] ** 2 + center[1] ** 2 + center[2] ** 2 - radius ** 2
    disc = b * b - 4 * a * c
    if disc < 0:
        return math.inf
    roots = sorted(((-b - math.sqrt(disc)) / (2 * a), (-b + math.sqrt(disc)) / (2 * a)))
    for s in roots:
        if s > 0:
            return s
    return math.inf


def nearest_distance(point, cloud):
    return min(math.dist(point, q) for q in cloud)
