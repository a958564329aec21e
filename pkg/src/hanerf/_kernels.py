"""
Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``HANERF_NUMBA`` is not set to ``0``. Both paths compute the same
quantities; tests compare them element by element.
"""

import os

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def decorator(func):
            return func

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return decorator


def _env_wants_numba():
    return os.environ.get("HANERF_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


USE_NUMBA = NUMBA_AVAILABLE and _env_wants_numba()


def backend():
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"


# ----------------------------------------------------------------------------
# Alpha compositing along rays
# ----------------------------------------------------------------------------


@njit(cache=True, fastmath=False)
def _composite_forward_nb(sigma, rgb, delta):
    R, K = sigma.shape
    out = np.zeros((R, 3), dtype=rgb.dtype)
    weights = np.zeros((R, K), dtype=sigma.dtype)
    t_final = np.zeros(R, dtype=sigma.dtype)
    for r in range(R):
        acc = 0.0
        for k in range(K):
            trans = np.exp(-acc)
            sd = sigma[r, k] * delta[r, k]
            w = trans * (1.0 - np.exp(-sd))
            weights[r, k] = w
            out[r, 0] += w * rgb[r, k, 0]
            out[r, 1] += w * rgb[r, k, 1]
            out[r, 2] += w * rgb[r, k, 2]
            acc += sd
        t_final[r] = np.exp(-acc)
    return out, weights, t_final


@njit(cache=True, fastmath=False)
def _composite_backward_nb(sigma, rgb, delta, weights, grad_out):
    R, K = sigma.shape
    dsigma = np.zeros((R, K), dtype=sigma.dtype)
    drgb = np.zeros((R, K, 3), dtype=rgb.dtype)
    t_next = np.empty(K, dtype=sigma.dtype)
    for r in range(R):
        g0 = grad_out[r, 0]
        g1 = grad_out[r, 1]
        g2 = grad_out[r, 2]
        acc = 0.0
        for k in range(K):
            acc += sigma[r, k] * delta[r, k]
            t_next[k] = np.exp(-acc)
        # suffix sum over j > k of w_j <c_j, g>
        suffix = 0.0
        for k in range(K - 1, -1, -1):
            w = weights[r, k]
            cg = rgb[r, k, 0] * g0 + rgb[r, k, 1] * g1 + rgb[r, k, 2] * g2
            drgb[r, k, 0] = w * g0
            drgb[r, k, 1] = w * g1
            drgb[r, k, 2] = w * g2
            dsigma[r, k] = delta[r, k] * (t_next[k] * cg - suffix)
            suffix += w * cg
    return dsigma, drgb


def _exclusive_transmittance(sigma, delta):
    sd = sigma * delta
    acc = np.cumsum(sd, axis=-1)
    excl = np.concatenate([np.zeros_like(acc[..., :1]), acc[..., :-1]], axis=-1)
    return sd, acc, excl


def _composite_forward_np(sigma, rgb, delta):
    sd, acc, excl = _exclusive_transmittance(sigma, delta)
    weights = np.exp(-excl) * (1.0 - np.exp(-sd))
    out = np.einsum("rk,rkc->rc", weights, rgb)
    return out, weights, np.exp(-acc[..., -1])


def _composite_backward_np(sigma, rgb, delta, weights, grad_out):
    _, acc, _ = _exclusive_transmittance(sigma, delta)
    cg = np.einsum("rkc,rc->rk", rgb, grad_out)
    wc = weights * cg
    # suffix[k] = sum_{j>k} w_j <c_j, g>
    rev = np.cumsum(wc[:, ::-1], axis=-1)[:, ::-1]
    suffix = rev - wc
    dsigma = delta * (np.exp(-acc) * cg - suffix)
    drgb = weights[..., None] * grad_out[:, None, :]
    return dsigma, drgb


def composite_forward(sigma, rgb, delta):
    """Quadrature compositing of ``R`` rays with ``K`` samples each.

    Returns ``(rgb_out (R,3), weights (R,K), final_transmittance (R,))``.
    """
    if USE_NUMBA:
        return _composite_forward_nb(sigma, rgb, delta)
    return _composite_forward_np(sigma, rgb, delta)


def composite_backward(sigma, rgb, delta, weights, grad_out):
    """Vector-Jacobian product of :func:`composite_forward` w.r.t. sigma and rgb."""
    if USE_NUMBA:
        return _composite_backward_nb(sigma, rgb, delta, weights, grad_out)
    return _composite_backward_np(sigma, rgb, delta, weights, grad_out)


# ----------------------------------------------------------------------------
# Row scatter-add (backward of a row gather)
# ----------------------------------------------------------------------------


@njit(cache=True)
def _scatter_add_rows_nb(index, values, n_rows):
    out = np.zeros((n_rows, values.shape[1]), dtype=values.dtype)
    for i in range(index.shape[0]):
        row = index[i]
        for j in range(values.shape[1]):
            out[row, j] += values[i, j]
    return out


def _scatter_add_rows_np(index, values, n_rows):
    out = np.zeros((n_rows, values.shape[1]), dtype=values.dtype)
    np.add.at(out, index, values)
    return out


def scatter_add_rows(index, values, n_rows):
    """``out[index[i]] += values[i]`` over a 2D ``values`` array, in index order."""
    values = np.ascontiguousarray(values)
    flat = values.reshape(values.shape[0], -1)
    if USE_NUMBA:
        out = _scatter_add_rows_nb(np.ascontiguousarray(index, dtype=np.int64), flat, n_rows)
    else:
        out = _scatter_add_rows_np(index, flat, n_rows)
    return out.reshape((n_rows,) + values.shape[1:])


# ----------------------------------------------------------------------------
# Analytic ray/sphere scene rendering
# ----------------------------------------------------------------------------


@njit(cache=True)
def _trace_spheres_nb(origins, dirs, centers, radii, albedo, background):
    n = origins.shape[0]
    out = np.empty((n, 3), dtype=np.float64)
    hit_ids = np.full(n, -1, dtype=np.int64)
    depth = np.full(n, np.inf)
    for i in range(n):
        best = np.inf
        best_id = -1
        for s in range(centers.shape[0]):
            ox = origins[i, 0] - centers[s, 0]
            oy = origins[i, 1] - centers[s, 1]
            oz = origins[i, 2] - centers[s, 2]
            b = ox * dirs[i, 0] + oy * dirs[i, 1] + oz * dirs[i, 2]
            c = ox * ox + oy * oy + oz * oz - radii[s] * radii[s]
            disc = b * b - c
            if disc < 0.0:
                continue
            root = np.sqrt(disc)
            t = -b - root
            if t <= 1e-9:
                t = -b + root
            if t > 1e-9 and t < best:
                best = t
                best_id = s
        if best_id >= 0:
            out[i, 0] = albedo[best_id, 0]
            out[i, 1] = albedo[best_id, 1]
            out[i, 2] = albedo[best_id, 2]
        else:
            out[i, 0] = background[0]
            out[i, 1] = background[1]
            out[i, 2] = background[2]
        hit_ids[i] = best_id
        depth[i] = best
    return out, hit_ids, depth


def _trace_spheres_np(origins, dirs, centers, radii, albedo, background):
    oc = origins[:, None, :] - centers[None, :, :]
    b = np.einsum("nsk,nk->ns", oc, dirs)
    c = np.einsum("nsk,nsk->ns", oc, oc) - radii[None, :] ** 2
    disc = b * b - c
    with np.errstate(invalid="ignore"):
        root = np.sqrt(np.where(disc >= 0.0, disc, np.nan))
    t_near = -b - root
    t_far = -b + root
    t = np.where(t_near > 1e-9, t_near, t_far)
    t = np.where((disc >= 0.0) & (t > 1e-9), t, np.inf)
    if centers.shape[0] == 0:
        depth = np.full(origins.shape[0], np.inf)
        hit_ids = np.full(origins.shape[0], -1, dtype=np.int64)
    else:
        hit_ids = np.argmin(t, axis=1).astype(np.int64)
        depth = t[np.arange(t.shape[0]), hit_ids]
        hit_ids[~np.isfinite(depth)] = -1
    out = np.where(
        (hit_ids >= 0)[:, None],
        albedo[np.maximum(hit_ids, 0)] if centers.shape[0] else background[None, :],
        background[None, :],
    )
    return out.astype(np.float64), hit_ids, depth


def trace_spheres(origins, dirs, centers, radii, albedo, background):
    """Nearest-hit flat-albedo shading of rays against a list of spheres.

    Returns ``(rgb (N,3), hit sphere id or -1 (N,), hit distance or inf (N,))``.
    Directions must be unit length.
    """
    args = (
        np.ascontiguousarray(origins, dtype=np.float64),
        np.ascontiguousarray(dirs, dtype=np.float64),
        np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 3),
        np.ascontiguousarray(radii, dtype=np.float64).reshape(-1),
        np.ascontiguousarray(albedo, dtype=np.float64).reshape(-1, 3),
        np.ascontiguousarray(background, dtype=np.float64).reshape(3),
    )
    if USE_NUMBA:
        return _trace_spheres_nb(*args)
    return _trace_spheres_np(*args)
