"""NumPy fallback for the per-entry accumulation kernels.

Mirrors the compiled extension in both signature and accumulation order
(per target bin, contributions are added in entry order), so the two
backends agree to the last few ulps. Selected by ``betacp.kernels`` when
the extension is unavailable or ``BETACP_PURE_PYTHON`` is set.
"""

import numpy as np


def predict_entries(U, S, T, a, b, c, ii, jj, kk, out=None):
    """Reconstruction at the observed triples: sum_r U*S*T plus the biases."""
    if out is None:
        out = np.empty(ii.shape[0])
    acc = a[ii] + b[jj]
    acc += c[kk]
    for r in range(U.shape[1]):
        acc += U[ii, r] * S[jj, r] * T[kk, r]
    out[:] = acc
    return out


def mode_update_terms(lead, n_lead, F1, idx1, F2, idx2, wnum, wden):
    """Per-row numerator/denominator sums for one factor-matrix update.

    For every entry e, the products F1[idx1[e], r] * F2[idx2[e], r] are
    accumulated into row lead[e], weighted by wnum[e] (numerator) and
    wden[e] (denominator). Returns two (n_lead, rank) arrays.
    """
    rank = F1.shape[1]
    num = np.empty((n_lead, rank))
    den = np.empty((n_lead, rank))
    for r in range(rank):
        w = F1[idx1, r] * F2[idx2, r]
        num[:, r] = np.bincount(lead, weights=w * wnum, minlength=n_lead)
        den[:, r] = np.bincount(lead, weights=w * wden, minlength=n_lead)
    return num, den


def bias_update_terms(lead, n_lead, wnum, wden):
    """Per-row numerator/denominator sums for one bias-vector update."""
    num = np.bincount(lead, weights=wnum, minlength=n_lead)
    den = np.bincount(lead, weights=wden, minlength=n_lead)
    return num, den
