"""Hot numerical kernels: numba-compiled with a pure-numpy fallback.

Every kernel here exists in two functionally identical versions; the active
one is chosen at import time by :mod:`martinlab._accel` (numba by default,
numpy when ``MARTINLAB_NO_NUMBA`` is set).  ``scripts/bench_kernels.py``
compares the two paths.

Conventions:

* ``moves`` is an int32 array of shape ``(n_letters, size)``; ``moves[l, i]``
  is the window index of ``x_i * g_l`` and ``-1`` means "outside the window".
* Convolution steps compute ``out[i] = lazy*vals[i] + sum_l masses[l] *
  vals[moves[l, i]]`` (mass stepping outside is accumulated and returned, it
  is the exact first-exit flow of the restricted evolution).
"""

import numpy as np

from ._accel import USE_NUMBA, njit


# ---------------------------------------------------------------------------
# tree ball structure (level-order arithmetic)


@njit(cache=True)
def _tree_structure_njit(offsets, s, inv):
    size = offsets[-1]
    last = np.full(size, -1, dtype=np.int8)
    parent = np.full(size, -1, dtype=np.int64)
    n_levels = len(offsets) - 1
    if n_levels >= 2:
        for c in range(s):
            last[1 + c] = c
            parent[1 + c] = 0
    for level in range(2, n_levels):
        base_prev = offsets[level - 1]
        base = offsets[level]
        n_prev = offsets[level] - base_prev
        for p in range(n_prev):
            i = base_prev + p
            forbidden = inv[last[i]]
            for j in range(s - 1):
                letter = j if j < forbidden else j + 1
                child = base + p * (s - 1) + j
                last[child] = letter
                parent[child] = i
    return last, parent


def _tree_structure_numpy(offsets, s, inv):
    size = int(offsets[-1])
    last = np.full(size, -1, dtype=np.int8)
    parent = np.full(size, -1, dtype=np.int64)
    n_levels = len(offsets) - 1
    if n_levels >= 2:
        last[1 : 1 + s] = np.arange(s, dtype=np.int8)
        parent[1 : 1 + s] = 0
    for level in range(2, n_levels):
        lo, hi = int(offsets[level - 1]), int(offsets[level])
        idx = np.arange(lo, hi, dtype=np.int64)
        forbidden = inv[last[idx]].astype(np.int64)
        j = np.arange(s - 1, dtype=np.int64)
        letter = j[None, :] + (j[None, :] >= forbidden[:, None])
        base = int(offsets[level])
        child = base + (idx - lo)[:, None] * (s - 1) + j[None, :]
        last[child.ravel()] = letter.astype(np.int8).ravel()
        parent[child.ravel()] = np.repeat(idx, s - 1)
    return last, parent


def tree_structure(offsets, s, inv):
    offsets = np.asarray(offsets, dtype=np.int64)
    inv = np.asarray(inv, dtype=np.int32)
    if USE_NUMBA:
        return _tree_structure_njit(offsets, s, inv)
    return _tree_structure_numpy(offsets, s, inv)


@njit(cache=True)
def _tree_moves_njit(offsets, s, inv, last, parent):
    size = offsets[-1]
    n_levels = len(offsets) - 1
    moves = np.full((s, size), -1, dtype=np.int32)
    # root
    if n_levels >= 2:
        for l in range(s):
            moves[l, 0] = 1 + l
    for level in range(1, n_levels):
        base = offsets[level]
        n_here = offsets[level + 1] - base
        has_children = level + 1 < n_levels
        child_base = offsets[level + 1] if has_children else -1
        for p in range(n_here):
            i = base + p
            forbidden = inv[last[i]]
            for l in range(s):
                if l == forbidden:
                    moves[l, i] = parent[i]
                elif has_children:
                    j = l if l < forbidden else l - 1
                    moves[l, i] = child_base + p * (s - 1) + j
    return moves


def _tree_moves_numpy(offsets, s, inv, last, parent):
    size = int(offsets[-1])
    n_levels = len(offsets) - 1
    moves = np.full((s, size), -1, dtype=np.int32)
    if n_levels >= 2:
        moves[:, 0] = 1 + np.arange(s, dtype=np.int32)
    for level in range(1, n_levels):
        lo, hi = int(offsets[level]), int(offsets[level + 1])
        idx = np.arange(lo, hi, dtype=np.int64)
        forbidden = inv[last[idx]].astype(np.int64)
        has_children = level + 1 < n_levels
        for l in range(s):
            is_parent = forbidden == l
            col = np.full(hi - lo, -1, dtype=np.int32)
            col[is_parent] = parent[idx[is_parent]].astype(np.int32)
            if has_children:
                child_base = int(offsets[level + 1])
                j = np.where(l < forbidden, l, l - 1)
                down = ~is_parent
                col[down] = (
                    child_base + (idx[down] - lo) * (s - 1) + j[down]
                ).astype(np.int32)
            moves[l, lo:hi] = col
    return moves


def tree_moves(offsets, s, inv, last, parent):
    offsets = np.asarray(offsets, dtype=np.int64)
    inv = np.asarray(inv, dtype=np.int32)
    if USE_NUMBA:
        return _tree_moves_njit(offsets, s, inv, last, parent)
    return _tree_moves_numpy(offsets, s, inv, last, parent)


# ---------------------------------------------------------------------------
# restricted convolution / matvec on a window


@njit(cache=True)
def _conv_step_njit(vals, moves, masses, lazy):
    n = vals.shape[0]
    n_letters = moves.shape[0]
    out = np.zeros(n, dtype=np.float64)
    exit_mass = 0.0
    if lazy != 0.0:
        for i in range(n):
            out[i] = lazy * vals[i]
    for l in range(n_letters):
        m = masses[l]
        if m == 0.0:
            continue
        row = moves[l]
        for i in range(n):
            j = row[i]
            if j >= 0:
                out[i] += m * vals[j]
            else:
                exit_mass += m * vals[i]
    return out, exit_mass


def _conv_step_numpy(vals, moves, masses, lazy):
    out = lazy * vals if lazy != 0.0 else np.zeros_like(vals)
    exit_mass = 0.0
    for l in range(moves.shape[0]):
        m = masses[l]
        if m == 0.0:
            continue
        row = moves[l]
        valid = row >= 0
        out[valid] += m * vals[row[valid]]
        if not valid.all():
            exit_mass += m * float(vals[~valid].sum())
    return out, exit_mass


def conv_step(vals, moves, masses, lazy=0.0):
    """One restricted convolution step; returns (new_vals, exit_mass).

    ``exit_mass`` is the exact probability flow that stepped outside the
    window during this transition (mass at ``i`` times mass of letters whose
    move leaves the window).  Note the flow convention: because ``moves``
    gathers from neighbors, the exiting term uses ``vals[i]`` itself, which by
    symmetry of the letter set equals the outbound flow.
    """
    if USE_NUMBA:
        return _conv_step_njit(vals, moves, masses, float(lazy))
    return _conv_step_numpy(vals, moves, masses, float(lazy))


def matvec(vals, moves, masses, lazy=0.0):
    out, _ = conv_step(vals, moves, masses, lazy)
    return out


# ---------------------------------------------------------------------------
# radial (distance-coordinate) birth-death steps for isotropic tree walks


@njit(cache=True)
def _radial_step_njit(vals, up, down, lazy):
    n = vals.shape[0]
    out = np.zeros(n, dtype=np.float64)
    exit_mass = 0.0
    for k in range(n):
        acc = lazy * vals[k]
        if k == 0:
            acc += down * vals[1] if n > 1 else 0.0
        else:
            prev = vals[k - 1]
            acc += (1.0 - lazy) * prev if k == 1 else up * prev
            if k + 1 < n:
                acc += down * vals[k + 1]
        out[k] = acc
    if n >= 1:
        exit_mass = up * vals[n - 1] if n > 1 else (1.0 - lazy) * vals[0]
    return out, exit_mass


def _radial_step_numpy(vals, up, down, lazy):
    n = vals.shape[0]
    out = lazy * vals.copy()
    if n > 1:
        out[0] += down * vals[1]
        out[1] += (1.0 - lazy) * vals[0]
        if n > 2:
            out[2:] += up * vals[1:-1]
            out[1:-1] += down * vals[2:]
        exit_mass = up * vals[n - 1]
    else:
        exit_mass = (1.0 - lazy) * vals[0]
    return out, float(exit_mass)


def radial_step(vals, up, down, lazy=0.0):
    """Birth-death step of the distance chain of an isotropic tree walk.

    From distance 0 all non-lazy mass moves to distance 1; from distance
    k >= 1 mass ``up`` moves out, ``down`` moves in.  The last cell is a
    Dirichlet boundary; outbound flow is returned as ``exit_mass``.
    """
    if USE_NUMBA:
        return _radial_step_njit(vals, float(up), float(down), float(lazy))
    return _radial_step_numpy(vals, float(up), float(down), float(lazy))


# ---------------------------------------------------------------------------
# box-window lattice convolution (vectorized in both modes)


def lattice_conv_step(vals, offs, masses, lazy=0.0):
    """One convolution step on a dense Z^d box with zero (Dirichlet) boundary.

    ``vals`` is a d-dim array, ``offs`` an (m, d) int array of support
    offsets, ``masses`` their masses.  Returns (out, exit_mass).  numpy
    slicing is already vectorized, so both acceleration modes share it.
    """
    out = lazy * vals if lazy != 0.0 else np.zeros_like(vals)
    exit_mass = 0.0
    d = vals.ndim
    total = float(vals.sum())
    kept = lazy * total
    for o, m in zip(offs, masses):
        if m == 0.0:
            continue
        src = []
        dst = []
        for ax in range(d):
            shift = int(o[ax])
            n = vals.shape[ax]
            if shift >= 0:
                src.append(slice(0, n - shift))
                dst.append(slice(shift, n))
            else:
                src.append(slice(-shift, n))
                dst.append(slice(0, n + shift))
        block = vals[tuple(src)]
        out[tuple(dst)] += m * block
        kept += m * float(block.sum())
    exit_mass = max(total * (lazy + float(np.sum(masses))) - kept, 0.0)
    return out, exit_mass


# ---------------------------------------------------------------------------
# iterative solvers built on the matvec kernel


def cg_green_row(moves, masses, r, rhs, tol=1e-12, max_iter=20000, lazy_mass=0.0):
    """Solve ``(I - r P_W) x = rhs`` by conjugate gradients.

    ``P_W`` is the window-restricted transition operator (symmetric,
    substochastic).  The system is positive definite iff ``r < 1/||P_W||``;
    if CG detects a non-positive curvature direction the restricted Green
    series diverges at this ``r`` and a ``FloatingPointError`` is raised for
    the caller to convert into a divergence flag.

    Returns ``(x, n_iter, residual_norm)``.
    """
    x = np.zeros_like(rhs)
    res = rhs.copy()
    p = rhs.copy()
    rs = float(res @ res)
    b_norm = float(np.sqrt(rhs @ rhs))
    if b_norm == 0.0:
        return x, 0, 0.0
    for it in range(1, max_iter + 1):
        ap = p - r * matvec(p, moves, masses, lazy_mass)
        denom = float(p @ ap)
        if denom <= 0.0:
            raise FloatingPointError(
                "restricted operator not positive definite at this r"
            )
        alpha = rs / denom
        x += alpha * p
        res -= alpha * ap
        rs_new = float(res @ res)
        if np.sqrt(rs_new) <= tol * b_norm:
            return x, it, float(np.sqrt(rs_new))
        p = res + (rs_new / rs) * p
        rs = rs_new
    raise FloatingPointError(f"conjugate gradients did not converge in {max_iter} iterations")


def lanczos_extreme(moves, masses, size, n_iter, lazy_mass=0.0, seed_index=0):
    """Largest Ritz value of the window-restricted operator.

    Lanczos with full reorthogonalization, started at the basis vector of
    ``seed_index``.  Ritz values are Rayleigh quotients over the Krylov
    space, hence certified lower bounds on the operator norm up to float
    rounding.
    """
    from scipy.linalg import eigh_tridiagonal

    q = np.zeros(size, dtype=np.float64)
    q[seed_index] = 1.0
    basis = [q]
    alphas, betas = [], []
    for _ in range(n_iter):
        v = matvec(basis[-1], moves, masses, lazy_mass)
        a = float(basis[-1] @ v)
        alphas.append(a)
        v -= a * basis[-1]
        if len(basis) > 1:
            v -= betas[-1] * basis[-2]
        # full reorthogonalization keeps Ritz values trustworthy
        for b in basis:
            v -= (b @ v) * b
        nrm = float(np.sqrt(v @ v))
        if nrm < 1e-14:
            break
        betas.append(nrm)
        basis.append(v / nrm)
    if not alphas:
        return 0.0
    if len(alphas) == 1:
        return alphas[0]
    w = eigh_tridiagonal(
        np.array(alphas), np.array(betas[: len(alphas) - 1]), select="a"
    )[0]
    return float(w[-1])
