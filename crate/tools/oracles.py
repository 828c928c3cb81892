"""High-precision reference values frozen into the Rust tests.

Run: python3 tools/oracles.py
"""
from mpmath import mp, mpf, sqrt, findroot, quad, exp, inf, log

mp.dps = 40


def power_h():
    # gbm b=0, sigma=1, r=1 (m=-1, n=2), h = sqrt(x), k = 1
    a = mpf(1) / 2
    R = lambda x: mpf(8) / 9 * x**a - x
    Rp = lambda x: mpf(4) / 9 * x**(a - 1) - 1
    psi = lambda x: x**2
    psip = lambda x: 2 * x
    D = lambda x: Rp(x) / psip(x)
    G = lambda x: R(x) - D(x) * psi(x)
    xl = findroot(lambda x: mp.diff(D, x), mpf(4) / 9)
    print("power_h x_lower", xl)
    b2 = 2 * xl
    g = findroot(lambda s: D(s) - D(b2), xl / 3)
    print("power_h Gamma(2 x_lower)", g)
    for c in [mpf("0.1"), mpf("0.01"), mpf(1)]:
        def eqs(gm, bt):
            return [D(gm) - D(bt), G(bt) - G(gm) + c]
        gm, bt = findroot(eqs, (mpf("0.25"), mpf("1.3")) if c == mpf("0.1") else ((mpf("0.38"), mpf("0.55")) if c < mpf("0.1") else (mpf("0.1"), mpf("3"))))
        A = -D(bt)
        w = lambda x: mpf(8) / 9 * sqrt(x) + A * x**2
        print(f"power_h c={c} gamma*", gm, "beta*", bt, "A", A, "w(0.5)", w(mpf("0.5")), "w(gamma)", w(gm))


def piecewise_rh(slope):
    # gbm b=1/4, sigma=1/sqrt(2), r=1: phi=x^-2, psi=x^2, Psi=x, Phi=x^-3
    s = mpf(slope)
    h = lambda x: s * x if x < 1 else (s - 1) + x**-4
    K = lambda x: 6 * x - mpf(5) / 2 * x**2 if x < 1 else mpf(7) / 2 - (x**-4 - 1) / 4
    def Rh(x):
        lo = quad(lambda u: h(u) * u, [0, min(x, 1), x] if x > 1 else [0, x])
        hi = quad(lambda u: h(u) * u**-3, [x, 1, inf] if x < 1 else [x, inf])
        return x**-2 * lo + x**2 * hi
    return Rh, K


def piecewise_performance():
    Rh, K = piecewise_rh(5)
    b, g, x0, c = mpf(2), mpf(1), mpf("1.5"), mpf("0.05")
    S = x0**2 / (b**2 - g**2)
    J = Rh(x0) + S * (Rh(g) - Rh(b) + K(b) - K(g) - c)
    print("quartic slope5 Rh(1.5)", Rh(x0), "J(beta=2,gamma=1,x0=1.5,c=0.05)", J)
    Rh7, K7 = piecewise_rh(7)
    print("quartic slope7 Rh(0.5)", Rh7(mpf("0.5")), "Rh(3)", Rh7(mpf(3)))


def sqrt_mr():
    # mean-rev-sqrt alpha=1: phi=1/x, psi=(e^x-1)/x, p'(x)=e^{x-1}/x^2
    x = mpf(2)
    print("mrs psi(2)", (exp(x) - 1) / x, "p'(2)", exp(1) / 4)


def linear_capped_thresholds():
    # gbm b=0.5 sigma=0.5 r=0.25, alpha=0.5: c_circ = 3 + alpha/r
    print("linear_capped c_circ", 3 + mpf("0.5") / mpf("0.25"))
    # K bounded by 3 while psi grows -> K_inf 0


def power_capped_l0():
    # gbm b=0.5 sigma=0.5 r=0.5 (m=-4, n=1, C=5), a=0.5, alpha=1.5
    # Theta = 0.5x^1.5 - 0.75x^2 below 1, -1 + 0.75/x above; Phi = 1.6 x^-2
    th = lambda x: mpf("0.5") * x**mpf("1.5") - mpf("0.75") * x**2 if x < 1 else -1 + mpf("0.75") / x
    l0 = quad(lambda s: th(s) * mpf("1.6") * s**-2, [0, 1, inf])
    print("power_capped l0", l0, "c_circ", 0 - (-1) / mpf("0.5"))


def power_h_small_cost():
    # boundaries as c -> 0; the gap to x_lower scales like c^(1/3)
    a = mpf(1) / 2
    Rp = lambda x: mpf(4) / 9 * x**(a - 1) - 1
    D = lambda x: Rp(x) / (2 * x)
    G = lambda x: mpf(8) / 9 * x**a - x - D(x) * x**2
    xl = mpf(4) / 9
    for c in [mpf("1e-6"), mpf("1e-9")]:
        d = 2 * c ** (mpf(1) / 3)
        gm, bt = findroot(lambda gm, bt: [D(gm) - D(bt), G(bt) - G(gm) + c], (xl - d, xl + d))
        print(f"power_h c={c} gamma*", gm, "beta*", bt, "max gap", max(xl - gm, bt - xl))


if __name__ == "__main__":
    power_h()
    piecewise_performance()
    sqrt_mr()
    linear_capped_thresholds()
    power_capped_l0()
    power_h_small_cost()
