"""Average-price puts: binned boundaries, a tree check and a shortcut.

For a put on the running geometric average the exercise decision depends on
two numbers, today's price and today's average.  The tracker splits paths
into 20 bins of the current price and finds an average threshold per bin.
A geometric-average tree gives an independent answer.

No tree exists for the arithmetic average.  Instead we take the tree's early
exercise premium for the geometric contract and add it to a Monte Carlo
European arithmetic price, then compare with the tracker's direct estimate.

Run:  python demos/03_average_options.py
"""

from mcamerican import (
    ContractSpec,
    ProcessParams,
    TimeGrid,
    TreeConfig,
    approx_arith_price,
    geo_asian_closed_form,
    geo_avg_tree,
    price_american,
    price_averaged,
    price_european,
    reprice_independent,
    simulate,
)

params = ProcessParams(r=0.10, sigma=0.40, s0=100.0)
geo = ContractSpec("geo-avg-put", strike=100.0, expiry=0.5)
arith = ContractSpec("arith-avg-put", strike=100.0, expiry=0.5)
N = 100_000

tree_am = geo_avg_tree(TreeConfig(geo.n_steps, params, geo))
tree_eu = geo_avg_tree(TreeConfig(geo.n_steps, params, geo.with_style("european")))
print(f"geometric put, tree: American {tree_am:.4f}, European {tree_eu:.4f} "
      f"(closed form {geo_asian_closed_form(geo.with_style('european'), params):.4f})")

up, boundary = price_american(params, geo, N, seed=3)
down = reprice_independent(params, geo, boundary, N, seed2=4)
avg = price_averaged(up, down)
print(f"geometric put, MC:   in-sample {up.value:.4f}, independent {down.value:.4f}, "
      f"averaged {avg.value:.4f} +- {avg.std_error:.4f}")
i = geo.n_steps // 2
print(f"average thresholds at mid-life, one per price bin: {boundary.thresholds[i].round(2)}")

eu_arith = price_european(simulate(params, TimeGrid.for_contract(arith), N, seed=5, contract=arith),
                          arith.with_style("european"))
shortcut = approx_arith_price(tree_am, tree_eu, eu_arith.value)
up, boundary = price_american(params, arith, N, seed=3)
down = reprice_independent(params, arith, boundary, N, seed2=4)
avg = price_averaged(up, down)
print(f"\narithmetic put: European MC {eu_arith.value:.4f}, shortcut American {shortcut:.4f}, "
      f"tracker {avg.value:.4f} +- {avg.std_error:.4f} ({100 * (avg.value / shortcut - 1):+.2f}%)")
