"""Entropy to the bridge along Sinkhorn, against the (1 + 1/eps)^-floor(n/2) envelope.

Runs the 1-d Gaussian sweep and prints, for each model, eps and a few
points of the curve. Everything is closed form, so this takes about a second.
"""

from bridgebound import build_model
from bridgebound.suites import decay_suite, sweep_configs

res = decay_suite()
eps = {label: build_model(cfg).constants.epsilon for label, cfg in sweep_configs()}

print(f"{'model':<28}{'eps':>8}   n:  H_n / bound_n")
for label, curve in res.curves:
    pts = [(n, h, b) for n, h, b in curve.entries if n in (2, 6, 10, 20)]
    cells = "  ".join(f"{n}: {h:.2e}/{b:.2e}" for n, h, b in pts)
    print(f"{label:<28}{eps[label]:>8.3g}   {cells}")

failed = [r for r in res.reports if not r.passed]
print(f"\n{len(res.reports)} reports, {len(failed)} failed")
