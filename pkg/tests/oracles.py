"""Independent reference computations shared by the tests."""
import numpy as np
from scipy.optimize import fsolve


def closed_form_pi(w, eta):
    """Structure matrix of the chaotic system in (x, w, z, rho_w, eta), written out block by block."""
    n = w.size
    kappa = (w @ eta) / (1.0 + w @ w)
    I, Z = np.eye(n), np.zeros((n, n))
    z1 = np.zeros((1, n))
    c1 = np.zeros((n, 1))
    return np.block([
        [np.zeros((1, 1)), z1, z1, z1, w[None, :]],
        [c1, Z, Z, I, Z],
        [c1, Z, Z, Z, -I],
        [c1, -I, Z, Z, -kappa * I],
        [-w[:, None], Z, I, kappa * I, Z],
    ])


def closed_form_grad(q, rho_w, eta):
    """Gradient of the reduced chaotic Hamiltonian, term by term (n >= 2)."""
    n = (q.size - 1) // 2
    x, w, z = q[0], q[1:n + 1], q[n + 1:]
    kappa = (w @ eta) / (1.0 + w @ w)
    gw = w + w * z ** 2 - kappa * eta + kappa ** 2 * w
    gz = z + w ** 2 * z
    gz[0] += z[0] * z[1] ** 2
    gz[1] += z[0] ** 2 * z[1]
    ginv = np.eye(n) - np.outer(w, w) / (1.0 + w @ w)
    return np.concatenate([[x], gw, gz, rho_w, ginv @ eta])


def sleigh_field(m=1.0, a=1.0, J=8.0):
    """Reduced sleigh vector field: heading speed rho2, angular momentum rho1."""
    sm, sI = np.sqrt(m), np.sqrt(J + m * a * a)
    C = a * sm / (J + m * a * a)

    def f(z):
        th, r1, r2 = z[2], z[3], z[4]
        return np.array([np.cos(th) * r2 / sm, np.sin(th) * r2 / sm, r1 / sI, -C * r1 * r2, C * r1 * r1])

    return f


def suslov_field(I11=1.0, I22=2.0, I13=0.1, I23=0.2):
    def f(r):
        c = I13 / I11 * r[0] + I23 / I22 * r[1]
        return np.array([-c * r[1] / I22, c * r[0] / I11])

    return f


def implicit_midpoint(f, x, h):
    """x' = x + h f((x + x')/2) solved with MINPACK's hybrid method."""
    x = np.asarray(x, dtype=float)
    F = lambda y: y - x - h * f(0.5 * (x + y))  # noqa: E731
    sol, info, ier, msg = fsolve(F, x + h * f(x), xtol=1e-15, full_output=True)
    # MINPACK often stops with "no further improvement" at machine precision;
    # judge the answer by its residual instead of the exit code
    if np.max(np.abs(F(sol))) > 1e-14 * (1.0 + np.max(np.abs(sol))):
        raise RuntimeError(msg)
    return sol
