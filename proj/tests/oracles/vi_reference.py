"""Reference values for the C++ tests, computed with mpmath/scipy.

Run: python3 tests/oracles/vi_reference.py
"""
import numpy as np
import mpmath as mp
from scipy.special import digamma, gammaln
from scipy.stats import norm

mp.mp.dps = 40

print("digamma")
for x in [1.0, 0.5, 3.25, 10.7, 1e-3, 250.0]:
    print(f"  {x!r}: {mp.nstr(mp.digamma(x), 20)}")

print("normal quantile")
for p in [0.95, 0.975, 0.05, 0.025, 0.5, 1e-6, 0.999]:
    print(f"  {p!r}: {mp.nstr(mp.sqrt(2) * mp.erfinv(2 * mp.mpf(p) - 1), 20)}")

# Small hand-set instance.
pi = np.array([0.3, 0.7])
mu0 = [np.array([0.0, 0.0]), np.array([1.0, -1.0])]
R0 = [np.array([[2.0, 0.3], [0.3, 1.0]]), np.array([[1.0, 0.0], [0.0, 1.5]])]
M = np.array([[1.0, 0.2], [0.2, 0.5]])
alpha0 = np.array([[1.0, 2.0, 0.5], [1.5, 1.0, 1.0]])
x = np.array([[0.1, 0.2], [1.0, -0.5], [-0.3, 0.4], [2.0, -1.2]])
d = [0, 2, 1, 2]
phi = np.array([[0.6, 0.4], [0.2, 0.8], [0.9, 0.1], [0.05, 0.95]])
mu = [np.array([0.05, 0.1]), np.array([1.2, -0.8])]
R = [np.array([[0.4, 0.05], [0.05, 0.3]]), np.array([[0.3, -0.02], [-0.02, 0.25]])]
alpha = np.array([[2.0, 3.0, 1.0], [2.5, 1.2, 3.0]])
K, n, J, T = 2, 2, 3, 4
Minv = np.linalg.inv(M)


def elbo(phi, mu, R, alpha):
    total = 0.0
    for k in range(K):
        R0i = np.linalg.inv(R0[k])
        dm = mu[k] - mu0[k]
        total += -0.5 * (n * np.log(2 * np.pi) + np.log(np.linalg.det(R0[k])) + np.trace(R0i @ R[k]) + dm @ R0i @ dm)
        total += 0.5 * n * (1 + np.log(2 * np.pi)) + 0.5 * np.log(np.linalg.det(R[k]))
        elog = digamma(alpha[k]) - digamma(alpha[k].sum())
        # E log Dir(theta | alpha0) - E log Dir(theta | alpha)
        total += gammaln(alpha0[k].sum()) - gammaln(alpha0[k]).sum() + ((alpha0[k] - 1) * elog).sum()
        total -= gammaln(alpha[k].sum()) - gammaln(alpha[k]).sum() + ((alpha[k] - 1) * elog).sum()
    for t in range(T):
        for k in range(K):
            r = x[t] - mu[k]
            elog_x = -0.5 * (n * np.log(2 * np.pi) + np.log(np.linalg.det(M)) + r @ Minv @ r + np.trace(Minv @ R[k]))
            elog_th = digamma(alpha[k, d[t]]) - digamma(alpha[k].sum())
            total += phi[t, k] * (np.log(pi[k]) + elog_x + elog_th - np.log(phi[t, k]))
    return total


print(f"elbo: {elbo(phi, mu, R, alpha)!r}")

# One coordinate block each, from the state above.
logw = np.zeros((T, K))
for t in range(T):
    for k in range(K):
        logw[t, k] = (np.log(pi[k]) + x[t] @ Minv @ mu[k] - 0.5 * np.trace(Minv @ (np.outer(mu[k], mu[k]) + R[k]))
                      + digamma(alpha[k, d[t]]) - digamma(alpha[k].sum()))
phi_new = np.exp(logw - logw.max(axis=1, keepdims=True))
phi_new /= phi_new.sum(axis=1, keepdims=True)
print("phi update:", repr(phi_new.tolist()))

for k in range(K):
    Nk = phi[:, k].sum()
    Rk = np.linalg.inv(np.linalg.inv(R0[k]) + Nk * Minv)
    muk = Rk @ (np.linalg.inv(R0[k]) @ mu0[k] + Minv @ (phi[:, k] @ x))
    print(f"moments k={k}: mu={muk.tolist()!r} R={Rk.tolist()!r}")

alpha_new = alpha0.copy()
for t in range(T):
    alpha_new[:, d[t]] += phi[t]
print("dirichlet update:", repr(alpha_new.tolist()))

# Predictive probabilities at x* = (0.4, -0.3) from the state above.
xs = np.array([0.4, -0.3])
lw = np.array([np.log(pi[k]) + xs @ Minv @ mu[k] - 0.5 * np.trace(Minv @ (np.outer(mu[k], mu[k]) + R[k]))
               for k in range(K)])
q = np.exp(lw - lw.max()); q /= q.sum()
means = alpha / alpha.sum(axis=1, keepdims=True)
print("predictive clusters:", repr(q.tolist()))
print("predictive categories:", repr((q @ means).tolist()))

# Scalar responsibility case: pi=[.5,.5], mu=[-1,1], R=[.1,.1], M=1, x=0.5.
lw = np.array([np.log(0.5) + 0.5 * m - 0.5 * (m * m + 0.1) for m in (-1.0, 1.0)])
e = np.exp(lw - lw.max()); e /= e.sum()
print("scalar phi:", repr(e.tolist()))

print("target loss N(-3, 2^2) at p*=0.975:", repr(-3 + 2 * norm.ppf(0.025)))
print("gaussian VaR 0.95 for N(0,1):", repr(-norm.ppf(0.05)))
