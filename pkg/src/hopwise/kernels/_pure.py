"""Pure NumPy scoring kernels (reference implementation).

Shapes: X (m, d) question token matrix, V (K, d) candidate path vectors,
all float64 C-contiguous. A pair whose attended vector or path vector has
near-zero norm is degenerate: its score is 0 and its cosine gradients vanish.
"""

import numpy as np

EPS = 1e-12

BACKEND_NAME = "pure"


def attn_forward(X, V):
    """Scaled dot-product attention over question tokens, cosine with the path.

    Returns (S, A, C, ok): scores (K,), attention weights (K, m), attended
    vectors (K, d), non-degenerate mask (K,) uint8.
    """
    scale = 1.0 / np.sqrt(X.shape[1])
    logits = V @ X.T * scale
    logits -= logits.max(axis=1, keepdims=True)
    A = np.exp(logits)
    A /= A.sum(axis=1, keepdims=True)
    C = A @ X
    cn = np.linalg.norm(C, axis=1)
    vn = np.linalg.norm(V, axis=1)
    ok = (cn > EPS) & (vn > EPS)
    denom = np.where(ok, cn * vn, 1.0)
    S = np.where(ok, np.einsum("kd,kd->k", C, V) / denom, 0.0)
    return S, A, C, ok.astype(np.uint8)


def attn_backward(X, V, A, C, S, ok, dS, dA_extra=None):
    """Backward of attn_forward; dA_extra adds straight onto the attention weights."""
    scale = 1.0 / np.sqrt(X.shape[1])
    okb = ok.astype(bool)
    cn = np.linalg.norm(C, axis=1)
    vn = np.linalg.norm(V, axis=1)
    ncv = np.where(okb, cn * vn, 1.0)
    cn2 = np.where(okb, cn * cn, 1.0)
    vn2 = np.where(okb, vn * vn, 1.0)
    g = np.where(okb, dS, 0.0)
    dC = g[:, None] * (V / ncv[:, None] - (S / cn2)[:, None] * C)
    dV = g[:, None] * (C / ncv[:, None] - (S / vn2)[:, None] * V)
    dA = dC @ X.T
    dX = A.T @ dC
    if dA_extra is not None:
        dA = dA + dA_extra
    inner = (dA * A).sum(axis=1, keepdims=True)
    dL = A * (dA - inner)
    dX += dL.T @ V * scale
    dV += dL @ X * scale
    return dX, dV


def cosine_forward(q, V):
    """Row-wise cosine of q against V. Returns (S, ok)."""
    qn = np.linalg.norm(q)
    vn = np.linalg.norm(V, axis=1)
    ok = (vn > EPS) & (qn > EPS)
    denom = np.where(ok, qn * vn, 1.0)
    S = np.where(ok, V @ q / denom, 0.0)
    return S, ok.astype(np.uint8)


def cosine_backward(q, V, S, ok, dS):
    okb = ok.astype(bool)
    qn = np.linalg.norm(q)
    vn = np.linalg.norm(V, axis=1)
    ncv = np.where(okb, qn * vn, 1.0)
    qn2 = qn * qn if qn > EPS else 1.0
    vn2 = np.where(okb, vn * vn, 1.0)
    g = np.where(okb, dS, 0.0)
    dq = (g[:, None] * (V / ncv[:, None] - np.outer(S / qn2, q))).sum(axis=0)
    dV = g[:, None] * (q[None, :] / ncv[:, None] - (S / vn2)[:, None] * V)
    return dq, dV


def attn_update_forward(X, a, v, W, B):
    """Token-wise de-focus then linear map: X' = (X - outer(a, v)) W^T + B."""
    Z = X - np.outer(a, v)
    return Z @ W.T + B


def attn_update_backward(X, a, v, W, dX2):
    Z = X - np.outer(a, v)
    dW = dX2.T @ Z
    dB = dX2.sum(axis=0)
    dZ = dX2 @ W
    da = -(dZ @ v)
    dv = -(dZ.T @ a)
    return dZ.copy(), da, dv, dW, dB


def concat_update_forward(q, v, W, B):
    """Linear map of the concatenated (question, path) vector: W [q; v] + B."""
    return W @ np.concatenate([q, v]) + B


def concat_update_backward(q, v, W, dq2):
    d = q.shape[0]
    z = np.concatenate([q, v])
    dW = np.outer(dq2, z)
    dB = dq2.copy()
    dz = W.T @ dq2
    return dz[:d].copy(), dz[d:].copy(), dW, dB
