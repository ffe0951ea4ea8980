"""One Abalone train/test split: SynthTree against the global linear fit and a full CART.

Run from the repository root:  python demos/abalone_walkthrough.py [csv]
"""
import sys
import time
from pathlib import Path

import numpy as np

from synthtree.data import split_indices
from synthtree.evaluation import coefficient_table, rmse
from synthtree.pipeline import RunConfig, cart_baseline, fit_pipeline, linear_baseline, load_training_data

DEFAULT = Path(__file__).resolve().parents[1] / "tests" / "data" / "abalone.csv"


def main():
    path = sys.argv[1] if len(sys.argv) > 1 else DEFAULT
    _, ds = load_training_data(path, "rings", "regression")
    tr, te = split_indices(ds.y, "regression", 0.2, seed=0)
    x, y, xt, yt = ds.x[tr], ds.y[tr], ds.x[te], ds.y[te]
    print(f"{ds.n} rows, {ds.p} encoded columns: {', '.join(ds.column_names)}")

    t0 = time.perf_counter()
    fit = fit_pipeline(x, y, RunConfig(seed=0), dummy_blocks=ds.dummy_blocks(), column_names=ds.column_names)
    print(f"\nSynthTree-RF in {time.perf_counter() - t0:.0f}s: J = {fit.j_cells} cells, "
          f"{fit.n_regions} leaves, scheme {fit.details['scheme']}")
    print(f"  cell-count training RMSE: {fit.details['j_candidates']}")
    _, p_lr = linear_baseline(x, y, xt, fit.task)
    _, p_cart, leaves = cart_baseline(x, y, xt, fit.task, 0)
    print(f"\ntest RMSE  SynthTree {rmse(yt, fit.predict(xt)):.3f} | LR {rmse(yt, p_lr):.3f} | "
          f"CART {rmse(yt, p_cart):.3f} ({leaves} leaves)")

    header, rows = coefficient_table(fit.model)
    print("\nfirst leaves of the coefficient table ('-' = excluded by the penalty):")
    print("  ".join(f"{h[:9]:>9s}" for h in header))
    for row in rows[:6]:
        print("  ".join(f"{v[:9]:>9s}" for v in row))
    sizes = np.bincount(np.searchsorted(sorted(n.id for n in fit.model.leaves()), fit.model.route(xt)))
    print(f"\ntest rows per leaf: min {sizes.min()}, median {int(np.median(sizes))}, max {sizes.max()}")


if __name__ == "__main__":
    main()
