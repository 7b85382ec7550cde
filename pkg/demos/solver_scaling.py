"""Column samples needed by SVRG and its accelerated variant as the shift gap shrinks.

    python demos/solver_scaling.py

Solves (lambda I - X X^T) x = b with lambda = lambda_1 (1 + gap). Plain SVRG
should grow roughly like gap^-2, the accelerated loop far more slowly.
"""
import numpy as np

from gaplra import ShiftedSystem, SyntheticSpec, plant, solve_accelerated_svrg, solve_direct, solve_svrg
from gaplra.synthetic import spectrum_with_stable_rank


def main():
    sigma = spectrum_with_stable_rank(40, 5.0, 0.97)
    X, _ = plant(SyntheticSpec(50, 80, singular_values=list(sigma)), seed=1)
    b = np.random.default_rng(0).standard_normal(X.d)
    print(f"{'gap':>7} {'svrg samples':>14} {'accel samples':>14} {'svrg err':>10} {'accel err':>10}")
    for gap in (0.5, 0.1, 0.05, 0.01, 0.005):
        system = ShiftedSystem(X, 1.0 + gap, 1.0)
        ref = solve_direct(system, b).solution
        plain = solve_svrg(system, b, tol=1e-8, seed=1)
        accel = solve_accelerated_svrg(system, b, tol=1e-8, seed=1)
        err = lambda x: system.d_norm(x - ref) / system.d_norm(ref)
        print(f"{gap:>7} {plain.column_samples:>14} {accel.column_samples:>14} "
              f"{err(plain.solution):>10.1e} {err(accel.solution):>10.1e}")


if __name__ == "__main__":
    main()
