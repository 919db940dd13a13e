"""Jitted inner loops: volume rendering forward/adjoint, orientation loss,
ray-triangle casting and parity containment.

All kernels are single-threaded and run in fixed pixel/sample order, so
accumulation is deterministic and repeated runs are bit-identical. fastmath
stays off: the adjoint must match the forward arithmetic exactly for the
finite-difference checks to hold.
"""

import math

import numpy as np
from numba import njit

# ---------------------------------------------------------------------------
# trilinear sampling helpers (density is 0 outside bounds)


@njit(cache=True, inline="always")
def _cell_coords(p, bmin, inv_cell, n):
    """Continuous grid coordinate -> (base index, fraction), clamped to cells."""
    f = (p - bmin) * inv_cell
    i = int(math.floor(f))
    if i < 0:
        i = 0
    if i > n - 2:
        i = n - 2
    return i, f - i


@njit(cache=True, inline="always")
def _inside(px, py, pz, bmin, bmax):
    return (
        bmin[0] <= px <= bmax[0]
        and bmin[1] <= py <= bmax[1]
        and bmin[2] <= pz <= bmax[2]
    )


@njit(cache=True, inline="always")
def _trilerp_scalar(grid, ix, iy, iz, wx, wy, wz):
    c00 = grid[ix, iy, iz] * (1 - wx) + grid[ix + 1, iy, iz] * wx
    c10 = grid[ix, iy + 1, iz] * (1 - wx) + grid[ix + 1, iy + 1, iz] * wx
    c01 = grid[ix, iy, iz + 1] * (1 - wx) + grid[ix + 1, iy, iz + 1] * wx
    c11 = grid[ix, iy + 1, iz + 1] * (1 - wx) + grid[ix + 1, iy + 1, iz + 1] * wx
    return (c00 * (1 - wy) + c10 * wy) * (1 - wz) + (c01 * (1 - wy) + c11 * wy) * wz


@njit(cache=True, inline="always")
def _sample_density(dens, px, py, pz, bmin, bmax, inv_cell):
    if not _inside(px, py, pz, bmin, bmax):
        return 0.0
    ix, wx = _cell_coords(px, bmin[0], inv_cell[0], dens.shape[0])
    iy, wy = _cell_coords(py, bmin[1], inv_cell[1], dens.shape[1])
    iz, wz = _cell_coords(pz, bmin[2], inv_cell[2], dens.shape[2])
    return _trilerp_scalar(dens, ix, iy, iz, wx, wy, wz)


@njit(cache=True, inline="always")
def _scatter_scalar(grad, ix, iy, iz, wx, wy, wz, g):
    grad[ix, iy, iz] += g * (1 - wx) * (1 - wy) * (1 - wz)
    grad[ix + 1, iy, iz] += g * wx * (1 - wy) * (1 - wz)
    grad[ix, iy + 1, iz] += g * (1 - wx) * wy * (1 - wz)
    grad[ix + 1, iy + 1, iz] += g * wx * wy * (1 - wz)
    grad[ix, iy, iz + 1] += g * (1 - wx) * (1 - wy) * wz
    grad[ix + 1, iy, iz + 1] += g * wx * (1 - wy) * wz
    grad[ix, iy + 1, iz + 1] += g * (1 - wx) * wy * wz
    grad[ix + 1, iy + 1, iz + 1] += g * wx * wy * wz


@njit(cache=True, inline="always")
def _scatter_density(grad, px, py, pz, bmin, bmax, inv_cell, g):
    if not _inside(px, py, pz, bmin, bmax):
        return
    ix, wx = _cell_coords(px, bmin[0], inv_cell[0], grad.shape[0])
    iy, wy = _cell_coords(py, bmin[1], inv_cell[1], grad.shape[1])
    iz, wz = _cell_coords(pz, bmin[2], inv_cell[2], grad.shape[2])
    _scatter_scalar(grad, ix, iy, iz, wx, wy, wz, g)


@njit(cache=True, inline="always")
def _ray_box(ox, oy, oz, dx, dy, dz, bmin, bmax):
    """Slab intersection; returns (t0, t1), miss when t1 <= t0."""
    t0 = 1e-4  # small near plane; cameras may sit inside the bounds
    t1 = 1e30
    for a in range(3):
        if a == 0:
            o, d = ox, dx
        elif a == 1:
            o, d = oy, dy
        else:
            o, d = oz, dz
        if abs(d) < 1e-12:
            if o < bmin[a] or o > bmax[a]:
                return 1.0, 0.0
        else:
            ta = (bmin[a] - o) / d
            tb = (bmax[a] - o) / d
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    return t0, t1


@njit(cache=True, inline="always")
def _density_gradient(dens, px, py, pz, bmin, bmax, inv_cell, hx, hy, hz):
    gx = (_sample_density(dens, px + hx, py, pz, bmin, bmax, inv_cell)
          - _sample_density(dens, px - hx, py, pz, bmin, bmax, inv_cell)) / (2 * hx)
    gy = (_sample_density(dens, px, py + hy, pz, bmin, bmax, inv_cell)
          - _sample_density(dens, px, py - hy, pz, bmin, bmax, inv_cell)) / (2 * hy)
    gz = (_sample_density(dens, px, py, pz + hz, bmin, bmax, inv_cell)
          - _sample_density(dens, px, py, pz - hz, bmin, bmax, inv_cell)) / (2 * hz)
    return gx, gy, gz


# ---------------------------------------------------------------------------
# forward rendering


@njit(cache=True)
def render_kernel(dens, col, origins, dirs, bmin, bmax, n_steps, bg,
                  shading_on, light, ambient, h_normal,
                  t_floor, depth_eps, far_sentinel,
                  out_rgb, out_alpha, out_depth):
    inv_cell = np.empty(3)
    for a in range(3):
        inv_cell[a] = (dens.shape[a] - 1) / (bmax[a] - bmin[a])
    hx = h_normal / inv_cell[0]
    hy = h_normal / inv_cell[1]
    hz = h_normal / inv_cell[2]

    for r in range(origins.shape[0]):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        t0, t1 = _ray_box(ox, oy, oz, dx, dy, dz, bmin, bmax)
        if t1 <= t0:
            out_rgb[r, 0] = bg[0]
            out_rgb[r, 1] = bg[1]
            out_rgb[r, 2] = bg[2]
            out_alpha[r] = 0.0
            out_depth[r] = far_sentinel
            continue
        delta = (t1 - t0) / n_steps
        trans = 1.0
        acc_r = 0.0
        acc_g = 0.0
        acc_b = 0.0
        acc_d = 0.0
        for i in range(n_steps):
            t = t0 + (i + 0.5) * delta
            px = ox + t * dx
            py = oy + t * dy
            pz = oz + t * dz
            ix, wx = _cell_coords(px, bmin[0], inv_cell[0], dens.shape[0])
            iy, wy = _cell_coords(py, bmin[1], inv_cell[1], dens.shape[1])
            iz, wz = _cell_coords(pz, bmin[2], inv_cell[2], dens.shape[2])
            sigma = _trilerp_scalar(dens, ix, iy, iz, wx, wy, wz)
            alpha_i = 1.0 - math.exp(-sigma * delta)
            w = trans * alpha_i
            cr = _trilerp_scalar(col[:, :, :, 0], ix, iy, iz, wx, wy, wz)
            cg = _trilerp_scalar(col[:, :, :, 1], ix, iy, iz, wx, wy, wz)
            cb = _trilerp_scalar(col[:, :, :, 2], ix, iy, iz, wx, wy, wz)
            if shading_on:
                gx, gy, gz = _density_gradient(dens, px, py, pz, bmin, bmax,
                                               inv_cell, hx, hy, hz)
                gn = math.sqrt(gx * gx + gy * gy + gz * gz)
                lam = ambient
                if gn > 1e-12:
                    lx = light[0] - px
                    ly = light[1] - py
                    lz = light[2] - pz
                    ln = math.sqrt(lx * lx + ly * ly + lz * lz)
                    if ln > 1e-12:
                        # n = -grad/|grad|
                        ndl = -(gx * lx + gy * ly + gz * lz) / (gn * ln)
                        if ndl > 0.0:
                            lam = ambient + (1.0 - ambient) * ndl
                cr *= lam
                cg *= lam
                cb *= lam
            acc_r += w * cr
            acc_g += w * cg
            acc_b += w * cb
            acc_d += w * t
            trans *= 1.0 - alpha_i
            if trans < t_floor:
                break
        alpha = 1.0 - trans
        out_rgb[r, 0] = acc_r + trans * bg[0]
        out_rgb[r, 1] = acc_g + trans * bg[1]
        out_rgb[r, 2] = acc_b + trans * bg[2]
        out_alpha[r] = alpha
        if alpha > 0.0:
            denom = alpha if alpha > depth_eps else depth_eps
            out_depth[r] = acc_d / denom
        else:
            out_depth[r] = far_sentinel


# ---------------------------------------------------------------------------
# adjoint: exact gradients of (rgb, alpha, depth) wrt the activated grids


@njit(cache=True)
def render_backward_kernel(dens, col, origins, dirs, bmin, bmax, n_steps, bg,
                           shading_on, light, ambient, h_normal,
                           t_floor, depth_eps,
                           g_rgb, g_alpha, g_depth,
                           grad_dens, grad_col):
    inv_cell = np.empty(3)
    for a in range(3):
        inv_cell[a] = (dens.shape[a] - 1) / (bmax[a] - bmin[a])
    hx = h_normal / inv_cell[0]
    hy = h_normal / inv_cell[1]
    hz = h_normal / inv_cell[2]

    # per-sample scratch: sigma, shaded r/g/b, shade factor
    scr_sigma = np.empty(n_steps)
    scr_c = np.empty((n_steps, 3))
    scr_shade = np.empty(n_steps)

    for r in range(origins.shape[0]):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        t0, t1 = _ray_box(ox, oy, oz, dx, dy, dz, bmin, bmax)
        if t1 <= t0:
            continue  # miss: constant outputs, zero gradient
        delta = (t1 - t0) / n_steps

        # sweep 1: recompute the forward march, fill the scratch buffers
        trans = 1.0
        acc_d = 0.0
        n_used = 0
        for i in range(n_steps):
            t = t0 + (i + 0.5) * delta
            px = ox + t * dx
            py = oy + t * dy
            pz = oz + t * dz
            ix, wx = _cell_coords(px, bmin[0], inv_cell[0], dens.shape[0])
            iy, wy = _cell_coords(py, bmin[1], inv_cell[1], dens.shape[1])
            iz, wz = _cell_coords(pz, bmin[2], inv_cell[2], dens.shape[2])
            sigma = _trilerp_scalar(dens, ix, iy, iz, wx, wy, wz)
            alpha_i = 1.0 - math.exp(-sigma * delta)
            w = trans * alpha_i
            lam = 1.0
            if shading_on:
                gx, gy, gz = _density_gradient(dens, px, py, pz, bmin, bmax,
                                               inv_cell, hx, hy, hz)
                gn = math.sqrt(gx * gx + gy * gy + gz * gz)
                lam = ambient
                if gn > 1e-12:
                    lx = light[0] - px
                    ly = light[1] - py
                    lz = light[2] - pz
                    ln = math.sqrt(lx * lx + ly * ly + lz * lz)
                    if ln > 1e-12:
                        ndl = -(gx * lx + gy * ly + gz * lz) / (gn * ln)
                        if ndl > 0.0:
                            lam = ambient + (1.0 - ambient) * ndl
            scr_sigma[i] = sigma
            scr_shade[i] = lam
            scr_c[i, 0] = _trilerp_scalar(col[:, :, :, 0], ix, iy, iz, wx, wy, wz) * lam
            scr_c[i, 1] = _trilerp_scalar(col[:, :, :, 1], ix, iy, iz, wx, wy, wz) * lam
            scr_c[i, 2] = _trilerp_scalar(col[:, :, :, 2], ix, iy, iz, wx, wy, wz) * lam
            acc_d += w * t
            trans *= 1.0 - alpha_i
            n_used = i + 1
            if trans < t_floor:
                break
        t_end = trans
        alpha = 1.0 - t_end

        # upstream pieces: depth = acc_d / max(alpha, eps) when alpha > 0
        g_accd = 0.0
        g_alpha_tot = g_alpha[r]
        if alpha > 0.0:
            denom = alpha if alpha > depth_eps else depth_eps
            g_accd = g_depth[r] / denom
            if alpha > depth_eps:
                g_alpha_tot += -g_depth[r] * acc_d / (alpha * alpha)
        gr = g_rgb[r, 0]
        gg = g_rgb[r, 1]
        gb = g_rgb[r, 2]
        # dL/dT_end: rgb background term and alpha = 1 - T_end
        g_tend = gr * bg[0] + gg * bg[1] + gb * bg[2] - g_alpha_tot

        # sweep 2: total W = sum_i q_i w_i
        big_w = 0.0
        trans = 1.0
        for i in range(n_used):
            t = t0 + (i + 0.5) * delta
            alpha_i = 1.0 - math.exp(-scr_sigma[i] * delta)
            w = trans * alpha_i
            q = gr * scr_c[i, 0] + gg * scr_c[i, 1] + gb * scr_c[i, 2] + g_accd * t
            big_w += q * w
            trans *= 1.0 - alpha_i

        # sweep 3: per-sample gradients, scattered to the grids
        trans = 1.0
        prefix = 0.0
        for i in range(n_used):
            t = t0 + (i + 0.5) * delta
            px = ox + t * dx
            py = oy + t * dy
            pz = oz + t * dz
            ix, wx = _cell_coords(px, bmin[0], inv_cell[0], dens.shape[0])
            iy, wy = _cell_coords(py, bmin[1], inv_cell[1], dens.shape[1])
            iz, wz = _cell_coords(pz, bmin[2], inv_cell[2], dens.shape[2])
            alpha_i = 1.0 - math.exp(-scr_sigma[i] * delta)
            w = trans * alpha_i
            q = gr * scr_c[i, 0] + gg * scr_c[i, 1] + gb * scr_c[i, 2] + g_accd * t
            prefix += q * w
            # d loss / d sigma_i through the compositing weights
            g_sigma = delta * (trans * q * (1.0 - alpha_i)
                               - (big_w - prefix) - g_tend * t_end)
            _scatter_scalar(grad_dens, ix, iy, iz, wx, wy, wz, g_sigma)
            # d loss / d c_i; the shading factor is treated as a constant
            lam = scr_shade[i]
            _scatter_scalar(grad_col[:, :, :, 0], ix, iy, iz, wx, wy, wz, w * gr * lam)
            _scatter_scalar(grad_col[:, :, :, 1], ix, iy, iz, wx, wy, wz, w * gg * lam)
            _scatter_scalar(grad_col[:, :, :, 2], ix, iy, iz, wx, wy, wz, w * gb * lam)
            trans *= 1.0 - alpha_i


# ---------------------------------------------------------------------------
# orientation loss: mean over samples of w * max(0, n . d)^2, with exact
# gradients through both the compositing weights and the normals


@njit(cache=True)
def orientation_kernel(dens, origins, dirs, bmin, bmax, n_steps,
                       t_floor, h_normal, grad_dens, with_grad):
    inv_cell = np.empty(3)
    for a in range(3):
        inv_cell[a] = (dens.shape[a] - 1) / (bmax[a] - bmin[a])
    hx = h_normal / inv_cell[0]
    hy = h_normal / inv_cell[1]
    hz = h_normal / inv_cell[2]

    n_rays = origins.shape[0]
    n_total = n_rays * n_steps
    inv_n = 1.0 / n_total

    scr_sigma = np.empty(n_steps)
    scr_u = np.empty(n_steps)
    scr_g = np.empty((n_steps, 3))
    scr_gn = np.empty(n_steps)

    loss = 0.0
    for r in range(n_rays):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        t0, t1 = _ray_box(ox, oy, oz, dx, dy, dz, bmin, bmax)
        if t1 <= t0:
            continue
        delta = (t1 - t0) / n_steps

        trans = 1.0
        n_used = 0
        for i in range(n_steps):
            t = t0 + (i + 0.5) * delta
            px = ox + t * dx
            py = oy + t * dy
            pz = oz + t * dz
            sigma = _sample_density(dens, px, py, pz, bmin, bmax, inv_cell)
            gx, gy, gz = _density_gradient(dens, px, py, pz, bmin, bmax,
                                           inv_cell, hx, hy, hz)
            gn = math.sqrt(gx * gx + gy * gy + gz * gz)
            u = 0.0
            if gn > 1e-12:
                # n = -g/|g|; u = max(0, n . d)
                ndd = -(gx * dx + gy * dy + gz * dz) / gn
                if ndd > 0.0:
                    u = ndd
            alpha_i = 1.0 - math.exp(-sigma * delta)
            w = trans * alpha_i
            loss += w * u * u * inv_n
            scr_sigma[i] = sigma
            scr_u[i] = u
            scr_g[i, 0] = gx
            scr_g[i, 1] = gy
            scr_g[i, 2] = gz
            scr_gn[i] = gn
            trans *= 1.0 - alpha_i
            n_used = i + 1
            if trans < t_floor:
                break

        if not with_grad:
            continue

        # suffix machinery for the w-path (no background / alpha coupling here)
        big_w = 0.0
        trans = 1.0
        for i in range(n_used):
            alpha_i = 1.0 - math.exp(-scr_sigma[i] * delta)
            w = trans * alpha_i
            big_w += (scr_u[i] * scr_u[i] * inv_n) * w
            trans *= 1.0 - alpha_i

        trans = 1.0
        prefix = 0.0
        for i in range(n_used):
            t = t0 + (i + 0.5) * delta
            px = ox + t * dx
            py = oy + t * dy
            pz = oz + t * dz
            alpha_i = 1.0 - math.exp(-scr_sigma[i] * delta)
            w = trans * alpha_i
            q = scr_u[i] * scr_u[i] * inv_n
            prefix += q * w
            g_sigma = delta * (trans * q * (1.0 - alpha_i) - (big_w - prefix))
            _scatter_density(grad_dens, px, py, pz, bmin, bmax, inv_cell, g_sigma)

            u = scr_u[i]
            gn = scr_gn[i]
            if u > 0.0 and gn > 1e-12:
                # dL/du = 2 w u / N; n = -g/|g|
                dldu = 2.0 * w * u * inv_n
                gx = scr_g[i, 0]
                gy = scr_g[i, 1]
                gz = scr_g[i, 2]
                nx = -gx / gn
                ny = -gy / gn
                nz = -gz / gn
                # dL/dg = -(I - n n^T) d * dldu / |g|
                dot_nd = nx * dx + ny * dy + nz * dz
                dgx = -(dx - nx * dot_nd) * dldu / gn
                dgy = -(dy - ny * dot_nd) * dldu / gn
                dgz = -(dz - nz * dot_nd) * dldu / gn
                # chain through central differences: 6 stencil scatters
                _scatter_density(grad_dens, px + hx, py, pz, bmin, bmax, inv_cell,
                                 dgx / (2 * hx))
                _scatter_density(grad_dens, px - hx, py, pz, bmin, bmax, inv_cell,
                                 -dgx / (2 * hx))
                _scatter_density(grad_dens, px, py + hy, pz, bmin, bmax, inv_cell,
                                 dgy / (2 * hy))
                _scatter_density(grad_dens, px, py - hy, pz, bmin, bmax, inv_cell,
                                 -dgy / (2 * hy))
                _scatter_density(grad_dens, px, py, pz + hz, bmin, bmax, inv_cell,
                                 dgz / (2 * hz))
                _scatter_density(grad_dens, px, py, pz - hz, bmin, bmax, inv_cell,
                                 -dgz / (2 * hz))
            trans *= 1.0 - alpha_i
    return loss


# ---------------------------------------------------------------------------
# ray-triangle casting (Moller-Trumbore) with per-triangle pixel bounds


@njit(cache=True, inline="always")
def _moller_trumbore(ox, oy, oz, dx, dy, dz, v0, e1, e2):
    """Returns (hit, t, u, v, det_rel) for one ray/triangle pair.

    det_rel is det scaled by |e1 x e2|, i.e. the cosine between the ray and
    the triangle normal; |det_rel| near 0 means an edge-on (grazing) ray.
    """
    px = dy * e2[2] - dz * e2[1]
    py = dz * e2[0] - dx * e2[2]
    pz = dx * e2[1] - dy * e2[0]
    det = e1[0] * px + e1[1] * py + e1[2] * pz
    cx = e1[1] * e2[2] - e1[2] * e2[1]
    cy = e1[2] * e2[0] - e1[0] * e2[2]
    cz = e1[0] * e2[1] - e1[1] * e2[0]
    scale = math.sqrt(cx * cx + cy * cy + cz * cz) + 1e-300
    if abs(det) < 1e-12 * scale:
        return False, 0.0, 0.0, 0.0, det / scale
    inv = 1.0 / det
    tx = ox - v0[0]
    ty = oy - v0[1]
    tz = oz - v0[2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return False, 0.0, u, 0.0, det / scale
    qx = ty * e1[2] - tz * e1[1]
    qy = tz * e1[0] - tx * e1[2]
    qz = tx * e1[1] - ty * e1[0]
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return False, 0.0, u, v, det / scale
    t = (e2[0] * qx + e2[1] * qy + e2[2] * qz) * inv
    return t > 1e-9, t, u, v, det / scale


@njit(cache=True, inline="always")
def _hits_triangle_inclusive(ox, oy, oz, dx, dy, dz, v0, e1, e2):
    """Any-hit test with a small barycentric tolerance, so rays through a
    shared triangle edge register on the neighbors instead of slipping
    between them. Only safe for coverage masks, never for parity counts."""
    eps = 1e-9
    px = dy * e2[2] - dz * e2[1]
    py = dz * e2[0] - dx * e2[2]
    pz = dx * e2[1] - dy * e2[0]
    det = e1[0] * px + e1[1] * py + e1[2] * pz
    cx = e1[1] * e2[2] - e1[2] * e2[1]
    cy = e1[2] * e2[0] - e1[0] * e2[2]
    cz = e1[0] * e2[1] - e1[1] * e2[0]
    scale = math.sqrt(cx * cx + cy * cy + cz * cz) + 1e-300
    if abs(det) < 1e-12 * scale:
        return False
    inv = 1.0 / det
    tx = ox - v0[0]
    ty = oy - v0[1]
    tz = oz - v0[2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < -eps or u > 1.0 + eps:
        return False
    qx = ty * e1[2] - tz * e1[1]
    qy = tz * e1[0] - tx * e1[2]
    qz = tx * e1[1] - ty * e1[0]
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -eps or u + v > 1.0 + eps:
        return False
    t = (e2[0] * qx + e2[1] * qy + e2[2] * qz) * inv
    return t > 1e-9


@njit(cache=True)
def raycast_mask_kernel(v0s, e1s, e2s, r0s, r1s, c0s, c1s,
                        origins, dirs, width, out_hit):
    """Mark pixels whose center ray hits any triangle; bounds prefilter.

    r0s..c1s give each triangle's candidate pixel rectangle (inclusive).
    """
    for k in range(v0s.shape[0]):
        v0 = v0s[k]
        e1 = e1s[k]
        e2 = e2s[k]
        for row in range(r0s[k], r1s[k] + 1):
            base = row * width
            for colx in range(c0s[k], c1s[k] + 1):
                idx = base + colx
                if out_hit[idx]:
                    continue
                if _hits_triangle_inclusive(
                        origins[idx, 0], origins[idx, 1], origins[idx, 2],
                        dirs[idx, 0], dirs[idx, 1], dirs[idx, 2], v0, e1, e2):
                    out_hit[idx] = 1


@njit(cache=True)
def parity_kernel(points, v0s, e1s, e2s, dx, dy, dz, counts, suspect):
    """Crossing counts for rays (point, fixed dir) against a triangle soup.

    Grazing hits (barycentrics or t near a boundary) set the suspect flag;
    the caller cross-checks two directions and retries with jittered ones
    until two clean runs agree, which also covers edge-on parallel cases.
    """
    eps_b = 1e-9
    for p in range(points.shape[0]):
        ox, oy, oz = points[p, 0], points[p, 1], points[p, 2]
        n_cross = 0
        bad = 0
        for k in range(v0s.shape[0]):
            hit, t, u, v, _ = _moller_trumbore(
                ox, oy, oz, dx, dy, dz, v0s[k], e1s[k], e2s[k])
            if hit:
                n_cross += 1
                if (u < eps_b or u > 1 - eps_b or v < eps_b
                        or u + v > 1 - eps_b or t < 1e-7):
                    bad = 1
        counts[p] = n_cross
        suspect[p] = bad
