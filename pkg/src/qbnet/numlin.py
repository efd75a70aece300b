"""Hermitian eigendecomposition, SVD and spectral entropy.

The eigensolver is a cyclic complex Jacobi method. Each sweep visits every
off-diagonal pair once, in a round-robin schedule that groups disjoint pairs
so a whole group is rotated with vectorized numpy updates. The SVD is built
on top of it from the Gram matrix ``M†M``.
"""

from __future__ import annotations

import numpy as np

from qbnet.errors import NegativeEigenvalueBeyondTolerance, NotHermitian, NotSquare, TraceNotOne

HERMITIAN_TOL = 1e-8
_MAX_SWEEPS = 60


def _round_robin(n: int) -> list:
    """Rounds of disjoint index pairs covering every pair exactly once."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = []
        for k in range(m // 2):
            a, b = players[k], players[m - 1 - k]
            if a < n and b < n:
                pairs.append((min(a, b), max(a, b)))
        rounds.append(pairs)
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _as_square(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSquare(f"expected a square matrix, got shape {m.shape}")
    return m


def _fix_phases(v: np.ndarray) -> np.ndarray:
    """Make each column's largest-magnitude entry real and positive."""
    idx = np.argmax(np.abs(v) > np.abs(v).max(axis=0) * (1 - 1e-9), axis=0)
    pivots = v[idx, np.arange(v.shape[1])]
    return v * (np.abs(pivots) / pivots)


def hermitian_eig(m, tol: float = HERMITIAN_TOL) -> tuple:
    """Eigenvalues (descending) and unitary eigenvector columns of ``m``."""
    a = _as_square(m).copy()
    n = a.shape[0]
    if n and np.max(np.abs(a - a.conj().T)) >= tol:
        raise NotHermitian(f"max |M - M†| = {np.max(np.abs(a - a.conj().T)):.3e}")
    a = (a + a.conj().T) / 2
    v = np.eye(n, dtype=complex)
    if n <= 1:
        return a.real.diagonal().copy(), v
    rounds = [(np.array([p for p, _ in r]), np.array([q for _, q in r])) for r in _round_robin(n)]
    scale = max(np.linalg.norm(a), 1e-300)
    for _ in range(_MAX_SWEEPS):
        off = np.linalg.norm(a - np.diag(a.diagonal()))
        if off <= 1e-15 * scale:
            break
        for p, q in rounds:
            apq = a[p, q]
            mag = np.abs(apq)
            live = mag > 1e-300
            if not np.any(live):
                continue
            p, q, apq, mag = p[live], q[live], apq[live], mag[live]
            phase = apq / mag
            tau = (a[q, q].real - a[p, p].real) / (2 * mag)
            big = np.abs(tau) > 1e150
            tau_s = np.where(big, 1.0, tau)
            t = np.where(tau_s >= 0, 1.0, -1.0) / (np.abs(tau_s) + np.sqrt(1 + tau_s * tau_s))
            t = np.where(big, 0.5 / np.where(big, tau, 1.0), t)
            c = 1 / np.sqrt(1 + t * t)
            s = t * c
            # columns: new[:,p] = c a[:,p] - s conj(phase) a[:,q]; new[:,q] = s a[:,p] + c conj(phase) a[:,q]
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * cp - s * phase.conj() * cq
            a[:, q] = s * cp + c * phase.conj() * cq
            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rp - (s * phase)[:, None] * rq
            a[q, :] = s[:, None] * rp + (c * phase)[:, None] * rq
            a[q, p] = 0
            a[p, q] = 0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = c * vp - s * phase.conj() * vq
            v[:, q] = s * vp + c * phase.conj() * vq
    w = a.diagonal().real
    order = np.argsort(-w, kind="stable")
    return w[order].copy(), _fix_phases(v[:, order])


def _orthonormal_complete(u: np.ndarray, rank: int) -> np.ndarray:
    """Fill columns ``rank..`` of ``u`` with an orthonormal complement."""
    m = u.shape[0]
    out = u.copy()
    basis = [out[:, k] for k in range(rank)]
    e = np.eye(m, dtype=complex)
    col = rank
    for k in range(m):
        if col >= out.shape[1]:
            break
        w = e[:, k].copy()
        for _ in range(2):
            for b in basis:
                w -= b * np.vdot(b, w)
        nrm = np.linalg.norm(w)
        if nrm > 1e-8:
            w /= nrm
            basis.append(w)
            out[:, col] = w
            col += 1
    return out


def svd(m) -> tuple:
    """``M = U diag(s) V†`` with full unitary ``U`` (m×m) and ``V`` (n×n)."""
    m = np.asarray(m, dtype=complex)
    rows, cols = m.shape
    if rows < cols:
        v, s, u = svd(m.conj().T)
        return u, s, v
    w, v = hermitian_eig(m.conj().T @ m)
    mv = m @ v
    s = np.linalg.norm(mv, axis=0)
    order = np.argsort(-s, kind="stable")
    s, v, mv = s[order], v[:, order], mv[:, order]
    scale = max(s[0] if s.size else 0.0, 1e-300)
    rank = int(np.sum(s > 1e-12 * scale)) if s.size else 0
    u = np.zeros((rows, rows), dtype=complex)
    for k in range(rank):
        col = mv[:, k] / s[k]
        for _ in range(2):
            for j in range(k):
                col -= u[:, j] * np.vdot(u[:, j], col)
        u[:, k] = col / np.linalg.norm(col)
    u = _orthonormal_complete(u, rank)
    s = s.copy()
    s[rank:] = np.where(s[rank:] < 1e-300, 0.0, s[rank:])
    return u, s, v


def spectral_entropy(eigenvalues, clamp: float = 1e-9, trace_tol: float = 1e-9) -> float:
    """Von Neumann / Shannon entropy in nats of a spectrum."""
    lam = np.asarray(eigenvalues, dtype=float)
    if np.any(lam < -clamp):
        raise NegativeEigenvalueBeyondTolerance(f"eigenvalue {lam.min():.3e} below -{clamp:g}")
    if abs(lam.sum() - 1.0) > trace_tol:
        raise TraceNotOne(f"eigenvalues sum to {lam.sum():.12f}")
    lam = lam[lam > 0]
    return float(max(-np.sum(lam * np.log(lam)), 0.0))
