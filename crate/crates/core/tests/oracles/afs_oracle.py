"""Independent mpmath evaluation of the scale recursion on the reference base.

d=1, beta=1, b0=5, p0=23^-4, L0=11^256, delayed growth indexing.
Prints theta0, sigma0, the switch scale, per-step margins and the
exponent goldens frozen in tests/afs_engine.rs.
"""
from fractions import Fraction as Fr

from mpmath import ln, mp, mpf

mp.dps = 60
d = 1
beta = Fr(1)
b0 = Fr(5)
L0 = 11**256
ln_p0_inv = 4 * ln(23)
eta = (beta * b0 - d) / 2
s0 = b0 - eta / beta
theta0 = (2 * (1 - ln(23**d) / ln_p0_inv) - 1) / 3
sigma0 = ln_p0_inv / ln(L0)
K = 1
while (1 + theta0) ** K < 2 * d / sigma0:
    K += 1
print("theta0", theta0, "sigma0", sigma0, "switch", K)


def iroot(n, k):
    lo, hi = 0, 1
    while hi**k <= n:
        hi *= 2
    while hi - lo > 1:
        m = (lo + hi) // 2
        if m**k <= n:
            lo = m
        else:
            hi = m
    return lo


def fr(q):
    return mpf(q.numerator) / q.denominator


recs = [dict(k=0, Y=None, S=None, L=L0, b=b0, s=s0, sigma=sigma0, rho=None)]
for k in range(0, 61):
    r = recs[-1]
    j = k + 1
    if j <= K:
        Y, S = 9, 1
    else:
        Y = iroot(r["L"], 16 * d)
        S = Y // 9
    N = Y - 5 * S - 1
    L = Y * r["L"]
    b = Fr(4, 5) * N * r["b"]
    s = Fr(5, 6) * b
    B = 1 + theta0 if j <= K + 1 else mpf(2) / 3 * (r["S"] + 1)
    if j == 1:
        rho = fr(eta) / 2
    else:
        D = mpf(4) / 3 if j <= K + 1 else mpf(2) / 3 * (r["S"] + 1)
        rho = r["rho"] * D
    recs.append(dict(k=j, Y=Y, S=S, N=N, L=L, b=b, s=s, sigma=r["sigma"] * B, rho=rho))

for k in range(0, 60):
    r, n = recs[k], recs[k + 1]
    lnL1, lnL = ln(n["L"]), ln(r["L"])
    weg = ln(2) - n["rho"] * lnL1 - (ln(n["Y"] - 1) + (d - fr(r["s"])) * lnL1)
    a = (3 * n["Y"] - 4) ** d
    u = -ln(2) + (n["S"] + 1) * (ln(a) - r["sigma"] * lnL)
    v = -n["rho"] * lnL1
    m = max(u, v)
    lhs = m + ln(mp.exp(u - m) + mp.exp(v - m))
    rhs = -n["sigma"] * lnL1
    print(k + 1, "wegner margin %.3e" % float(weg / lnL1), "prob margin %.3e" % float((rhs - lhs) / abs(rhs)))

for k in (30, 60):
    r = recs[k]
    lnL = ln(r["L"])
    print(k, "delta", ln(fr(r["b"]) * lnL) / lnL, "kappa", ln(r["sigma"] * lnL) / lnL)
print("Y31", recs[31]["Y"])
