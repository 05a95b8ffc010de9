"""Pure-numpy versions of the compiled loops (same signatures, same results up to summation order)."""

import numpy as np

from ..problems import logistic_scalar


def sgd_linear(Z, y, x, idx, etas, lam, alpha):
    for k in range(len(idx)):
        i = int(idx[k])
        s = logistic_scalar(float(Z[i] @ x), y[i])[1]
        den = 1.0 + alpha * x * x
        xn = x - etas[k] * (s * Z[i] + 2.0 * lam * alpha * x / (den * den))
        if not np.all(np.isfinite(xn)):
            return k
        x[:] = xn
    return -1


def reg_saga_linear(Z, y, x, scalars, gsum, idx, eta, lam, alpha):
    n = Z.shape[0]
    for k in range(len(idx) // 2):
        i = int(idx[2 * k])
        j = int(idx[2 * k + 1])
        si = logistic_scalar(float(Z[i] @ x), y[i])[1]
        sj = si if j == i else logistic_scalar(float(Z[j] @ x), y[j])[1]
        v = si * Z[i] + (gsum / n - scalars[i] * Z[i])
        den = 1.0 + alpha * x * x
        xn = x - eta * (v + 2.0 * lam * alpha * x / (den * den))
        if not np.all(np.isfinite(xn)):
            return k
        gsum[:] = (gsum - scalars[j] * Z[j]) + sj * Z[j]
        scalars[j] = sj
        x[:] = xn
    return -1
