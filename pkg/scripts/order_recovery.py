"""How often AIC selection recovers p=2 for AR(2) phi=(0.5, 0.3), across AR search limits.

    python3 scripts/order_recovery.py --seeds 100 --pmax 3,5,15
"""
import argparse
from collections import Counter

from sinkarima.arima import SelectionBounds, select_model
from sinkarima.synth import ProcessSpec, simulate_arma


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--pmax", default="15")
    args = ap.parse_args()
    for pmax in (int(v) for v in args.pmax.split(",")):
        orders, passed = Counter(), 0
        for seed in range(args.seeds):
            m = select_model(simulate_arma(ProcessSpec(phi=(0.5, 0.3), n=args.n), seed), SelectionBounds(p_max=pmax))
            orders[m.p] += 1
            passed += m.diagnostics.passed
        print(f"pmax={pmax:>2}: p=2 in {orders[2]}/{args.seeds}, diagnostics pass {passed}/{args.seeds}, "
              f"p histogram {dict(sorted(orders.items()))}")


if __name__ == "__main__":
    main()
