"""Reference trajectory for three Nadam steps on f(x) = x^2 from x = 1.

Computed at 50 significant digits with mpmath; the printed values are
frozen in test_training.cc.
"""
from mpmath import mp, mpf, sqrt

mp.dps = 50
lr, b1, b2, eps = mpf("0.002"), mpf("0.9"), mpf("0.999"), mpf("1e-8")
x, m, v = mpf(1), mpf(0), mpf(0)
for t in range(1, 4):
    g = 2 * x
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g * g
    m_hat = b1 * m / (1 - b1 ** (t + 1)) + (1 - b1) * g / (1 - b1 ** t)
    v_hat = v / (1 - b2 ** t)
    x = x - lr * m_hat / (sqrt(v_hat) + eps)
    print(t, mp.nstr(x, 20))
