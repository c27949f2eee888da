"""Reference solutions built without the package's integrators."""

import math

import numpy as np
from scipy.integrate import solve_ivp

LORENZ = (10.0, 28.0, -1.0, 8.0 / 3.0)


def lorenz_field(x, p=LORENZ):
    a, q, r, s = p
    return np.array([a * (x[1] - x[0]), q * x[0] + r * x[1] - x[0] * x[2], x[0] * x[1] - s * x[2]])


def lorenz_jac(x, p=LORENZ):
    a, q, r, s = p
    return np.array([[-a, a, 0.0], [q - x[2], r, -x[0]], [x[1], x[0], -s]])


def lorenz_lamF_hessian(lam):
    # second derivatives of lam . F; only the bilinear terms contribute
    return np.array([[0.0, lam[2], -lam[1]], [lam[2], 0.0, 0.0], [-lam[1], 0.0, 0.0]])


def scalar_riccati(a, b, q, S_T, sigma):
    """Solution of ``dS/dtau = -2 a S + b S^2 - q`` at ``sigma = T - tau`` before the end."""
    # roots of b S^2 - 2 a S - q = 0
    disc = math.sqrt(a * a + b * q)
    s1 = (a + disc) / b
    s2 = (a - disc) / b
    K = (S_T - s1) / (S_T - s2) * math.exp(-2.0 * disc * sigma)
    return (s1 - s2 * K) / (1.0 - K)


def variational_oracle(Q, QN, R, x0, lam0, y0, T, dTdt, A_s, predict=True, leader=None, Q0=None, a0=0.0):
    """Single Lorenz agent with one neighbor of weight 1 (and optionally a leader).

    Integrates the nonlinear horizon flow with tight tolerances, then solves the
    linear variational boundary-value problem for ``eta = lam_t - lam_tau`` by
    shooting.  Returns ``(tau, eta, c_T, P)``.
    """
    Rinv = np.linalg.inv(R)
    n = 3
    has_leader = leader is not None

    def rhs(_, z):
        x, lam, y = z[:3], z[3:6], z[6:9]
        dx = lorenz_field(x) - Rinv @ lam
        dlam = -(Q @ (x - y) + lorenz_jac(x).T @ lam)
        dy = lorenz_field(y) if predict else np.zeros(3)
        out = [dx, dlam, dy]
        if has_leader:
            out.append(lorenz_field(z[9:12]) if predict else np.zeros(3))
        return np.concatenate(out)

    z0 = np.concatenate([x0, lam0, y0] + ([leader] if has_leader else []))
    nl = solve_ivp(rhs, (0.0, T), z0, method="DOP853", rtol=1e-13, atol=1e-13, dense_output=True)
    zT = nl.y[:, -1]
    dzT = rhs(T, zT)
    xT, lamT, yT = zT[:3], zT[3:6], zT[6:9]
    phi_xx = 2.0 * QN + (2.0 * a0 * Q0 if has_leader else 0.0)
    grad = 2.0 * QN @ (xT - yT)
    dphi = 2.0 * QN @ (dzT[:3] - dzT[6:9])
    if has_leader:
        grad = grad + 2.0 * a0 * Q0 @ (xT - zT[9:12])
        dphi = dphi + 2.0 * a0 * Q0 @ (dzT[:3] - dzT[9:12])
    P = lamT - grad
    H_x = -dzT[3:6]
    c_T = (1.0 + dTdt) * (H_x + dphi) + A_s @ P

    def lin(tau, w):
        z = nl.sol(tau)
        x, lam = z[:3], z[3:6]
        A = lorenz_jac(x)
        C = Q + lorenz_lamF_hessian(lam)
        xi, eta = w[:3], w[3:]
        return np.concatenate([A @ xi - Rinv @ eta, -C @ xi - A.T @ eta])

    def shoot(eta0, dense=False):
        return solve_ivp(lin, (0.0, T), np.concatenate([np.zeros(n), eta0]), method="DOP853",
                         rtol=1e-12, atol=1e-14, dense_output=dense)

    def mismatch(eta0):
        w = shoot(eta0).y[:, -1]
        return w[3:] - phi_xx @ w[:3]

    base = mismatch(np.zeros(n))
    M = np.column_stack([mismatch(e) - base for e in np.eye(n)])
    eta0 = np.linalg.solve(M, c_T - base)
    sol = shoot(eta0, dense=True)
    return sol, c_T, P
