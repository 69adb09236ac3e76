"""
Checking the descent constants
==============================

The Lyapunov argument reduces to a linear system A e + b <= 0 in the error
terms. We build it on a log grid and report the tightest row.
"""

from motef import build_constant_system, verify_descent_constants

s = build_constant_system("nonconvex", alpha=0.1, rho=0.05, n=16, tau=1.0)
print("stepsizes gamma, lambda, eta:", s.gamma, s.lam, s.eta)
print("row slack:", s.row_slack().round(4))

for fam in ("nonconvex", "vr", "pl"):
    print(verify_descent_constants(fam).summary())

# scaling eta up by 1e5 must break the system
print(verify_descent_constants("nonconvex", c_eta=1.0).summary())
