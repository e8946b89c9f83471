"""Recompute the reference values frozen in the test suite.

Every value here comes from quadrature or plain Monte Carlo written out
directly, without calling into the package, so the tests compare the package
against an independent computation.
"""
import numpy as np
from scipy import integrate, stats
from scipy.special import logsumexp


def denoiser_quadrature(r=2.0, tau=0.5, lam=0.3, psi=1.0):
    slab = lambda a: lam * stats.norm.pdf(a, 0, np.sqrt(psi)) * stats.norm.pdf(r, a, np.sqrt(tau))
    spike = (1 - lam) * stats.norm.pdf(r, 0, np.sqrt(tau))
    z_slab = integrate.quad(slab, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13)[0]
    m1 = integrate.quad(lambda a: a * slab(a), -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13)[0]
    m2 = integrate.quad(lambda a: a * a * slab(a), -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13)[0]
    Z = z_slab + spike
    mean = m1 / Z
    return mean, m2 / Z - mean**2, z_slab / Z


GPRIOR_Y = np.array([0.9, -0.3, 1.7, 0.2, -1.1])
GPRIOR_X = np.array([[1.0, 0.5], [-0.4, 1.2], [1.3, -0.7], [0.1, 0.3], [-0.8, -1.0]])


def gprior_quadrature(cols, g_n=3.0, sigma2=0.8):
    y, X = GPRIOR_Y, GPRIOR_X[:, cols]
    V = sigma2 * g_n * np.linalg.inv(X.T @ X)
    lik = lambda b: stats.multivariate_normal.pdf(y, X @ b, sigma2 * np.eye(5))
    prior = stats.multivariate_normal(np.zeros(len(cols)), V)
    if len(cols) == 1:
        val = integrate.quad(lambda b: lik(np.array([b])) * prior.pdf(b), -np.inf, np.inf, epsabs=0, epsrel=1e-12)[0]
    else:
        val = integrate.dblquad(lambda b2, b1: lik(np.array([b1, b2])) * prior.pdf([b1, b2]),
                                -25, 25, -25, 25, epsabs=0, epsrel=1e-11)[0]
    return np.log(val)


def chi2_abs_dev(q=200):
    f = lambda x: abs(x / q - 1.0) * stats.chi2.pdf(x, q)
    return integrate.quad(f, 0, q, epsabs=1e-14)[0] + integrate.quad(f, q, np.inf, epsabs=1e-14)[0]


def mixture_vs_moment_matched_kl(w=0.3, m=(-1.0, 2.0), s=(0.6, 1.1)):
    w_ = np.array([w, 1 - w])
    m, s = np.array(m), np.array(s)
    mu = w_ @ m
    var = w_ @ (s**2 + m**2) - mu**2
    p = lambda x: w_ @ stats.norm.pdf(x, m, s)
    f = lambda x: p(x) * (np.log(p(x)) - stats.norm.logpdf(x, mu, np.sqrt(var)))
    return integrate.quad(f, -30, 30, epsabs=1e-13, limit=400)[0]


def p2_inclusion_mc(n_draws=1_000_000, seed=12345):
    """Importance-weighted prior draws for the p = 2 posterior with a nonzero Sigma_hat."""
    Ry = np.array([1.1, -0.6])
    RX = np.array([[1.5, 0.4], [0.0, 0.9]])
    mu = np.array([0.2, -0.1])
    Sig = np.array([[0.5, 0.2], [0.2, 0.3]])
    sigma2, lam, psi = 0.7, 0.4, 2.0
    rng = np.random.default_rng(seed)
    on = rng.random((n_draws, 2)) < lam
    beta = np.where(on, np.sqrt(psi) * rng.standard_normal((n_draws, 2)), 0.0)
    C = sigma2 * np.eye(2) + Sig
    resid = Ry - mu - beta @ RX.T
    logw = stats.multivariate_normal(np.zeros(2), C).logpdf(resid)
    w = np.exp(logw - logsumexp(logw))
    est = w @ on
    # delta-method SE of a self-normalised estimator
    se = np.sqrt(np.sum(w[:, None] ** 2 * (on - est) ** 2, axis=0))
    return est, se


if __name__ == "__main__":
    np.set_printoptions(precision=17)
    print("denoiser (r=2, tau=0.5, lam=0.3, psi=1):", repr(denoiser_quadrature()))
    print("gprior log marginal, gamma={0}:", repr(gprior_quadrature([0])))
    print("gprior log marginal, gamma={0,1}:", repr(gprior_quadrature([0, 1])))
    print("E|chi2_200/200 - 1|:", repr(chi2_abs_dev()))
    print("KL(mixture || moment-matched):", repr(mixture_vs_moment_matched_kl()))
    est, se = p2_inclusion_mc()
    print("p=2 inclusion MC:", repr(est), repr(se))
