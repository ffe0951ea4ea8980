"""Fit SynthTree and MLM-EPIC to data with two linear regimes and print what they find.

Run from the repository root:  python demos/two_regimes.py
"""
import numpy as np

from synthtree.evaluation import coefficient_table, rmse
from synthtree.pipeline import RunConfig, fit_pipeline


def regimes(n, rng):
    # two blobs in the x0 direction, each with its own exact linear response
    x = np.vstack([rng.normal([-4.0, 0.0], 0.7, (n // 2, 2)), rng.normal([4.0, 0.0], 0.7, (n - n // 2, 2))])
    left = x[:, 0] < 0
    y = np.where(left, 1.0 + 2.0 * x[:, 0] - x[:, 1], -3.0 + 0.5 * x[:, 0] + 1.5 * x[:, 1])
    return x, y + 0.1 * rng.normal(size=n)


def main():
    rng = np.random.default_rng(0)
    x, y = regimes(600, rng)
    xt, yt = regimes(400, rng)
    print("truth: x0<0 -> 1 + 2 x0 - x1 ;  x0>=0 -> -3 + 0.5 x0 + 1.5 x1\n")
    for method in ("synthtree", "mlm-epic"):
        cfg = RunConfig(method=method, j_grid=(8, 16), n_trees=100, seed=0)
        fit = fit_pipeline(x, y, cfg, column_names=("x0", "x1"))
        print(f"{method}: {fit.n_regions} regions from {fit.j_cells} cells, "
              f"test RMSE {rmse(yt, fit.predict(xt)):.3f}")
        header, rows = coefficient_table(fit.model)
        print("  " + "  ".join(f"{h:>8s}" for h in header))
        for row in rows:
            print("  " + "  ".join(f"{v[:8]:>8s}" for v in row))
        print()


if __name__ == "__main__":
    main()
