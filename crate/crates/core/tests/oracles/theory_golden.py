"""Independent high-precision evaluation of the parameter formulas.

Run with `python3 theory_golden.py`; the printed constants are frozen in
tests/theory_golden.rs.
"""
from mpmath import mp, mpf, sqrt, ceil

mp.dps = 50

omega, n, p_a, p_aa = mpf(4), mpf(5), mpf(3) / 5, mpf(3) / 10
L, Lh, Lmax, Ls = mpf("1.3"), mpf("2.1"), mpf("3.7"), mpf("2.9")
s2, m, B, eps, d, zeta, d0 = mpf("0.8"), mpf(16), mpf(2), mpf("1e-3"), mpf(10), mpf(2), mpf("0.7")
mu = mpf("0.05")

cf = omega * (2 * omega + 1) / (n * p_a**2)
ind2 = 1 - p_aa / p_a
a = p_a / (2 * omega + 1)


def out(name, **kv):
    for k, v in kv.items():
        print(f"{name}.{k} = {mp.nstr(v, 17)}")


# gradient
g = 1 / (L + sqrt(48 * cf + 16 / (n * p_a**2) * ind2) * Lh)
out("gradient", a=a, b=p_a / (2 - p_a), gamma=g, t=2 * d0 / (g * eps))

# page
pp = B / (m + B)
st = (1 - pp) * Lmax**2 / B
g = 1 / (L + sqrt(48 * cf * (Lh**2 + st) + 16 / (n * p_a**2 * pp) * (ind2 * Lh**2 + st)))
t = d0 / eps * (L + omega / (p_a * sqrt(n)) * (Lh + Lmax / sqrt(B)) + sqrt(m / n) / p_a * (sqrt(ind2) * Lh / sqrt(B) + Lmax / B))
out("page", p_page=pp, b=pp * p_a / (2 - p_a), gamma=g, t=t)

# finite-sum mvr
q = p_a * B / m
st = Lmax**2 / B
g = 1 / (L + sqrt(148 * cf * (Lh**2 + st) + 72 * m / (n * p_a**2 * B) * (ind2 * Lh**2 + st)))
out("finite_mvr", b=q / (2 - q), gamma=g)

# stochastic mvr
r = n * eps * B / s2
b = min(p_a / (2 - p_a), p_a * r, p_a / omega * sqrt(r))
st = (1 - b) ** 2 * Ls**2 / B
g = 1 / (L + sqrt(48 * cf * (Lh**2 + st) + 12 / (n * p_a * b) * (ind2 * Lh**2 + st)))
t = d0 / eps * (L + omega / (p_a * sqrt(n)) * (Lh + Ls / sqrt(B)) + sqrt(s2) / (p_a * sqrt(eps) * n) * (sqrt(ind2) * Lh / sqrt(B) + Ls / B)) + s2 / (sqrt(p_a) * n * eps * B)
out("mvr", b=b, gamma=g, init_batch=ceil(sqrt(p_a) * B / b), t=t)

# sync-mvr
pm = min(zeta / d, n * eps * B / s2)
ls2 = Ls**2 / B
g = 1 / (L + sqrt(8 * cf * (Lh**2 + ls2) + 16 / (n * pm * p_a**2) * (ind2 * Lh**2 + ls2)))
t = d0 / eps * (L + (omega / (p_a * sqrt(n)) + sqrt(d / (p_a**2 * zeta * n))) * (Lh + Ls / sqrt(B)) + sqrt(s2) / (p_a * sqrt(eps) * n) * (Lh / sqrt(B) + Ls / B)) + s2 / (sqrt(p_a) * n * eps * B)
out("sync_mvr", p_mega=pm, b=pm * p_a / (2 - p_a), gamma=g, init_batch=ceil(B / (pm * sqrt(p_a))), mega_batch=max(ceil(s2 / (n * eps)), B), t=t)

# PL gradient
g0 = 1 / (L + sqrt(200 * cf + 48 / (n * p_a**2) * ind2) * Lh)
out("pl_gradient", gamma=min(g0, a / (4 * mu)))
