"""Adaptive conjecture-set zooming over a continuum of mixture weights.

Starts from a coarse 6-point grid on [0, 0.5], prunes conjectures that are
clearly suboptimal, and adds finer grids around the best still-uncertain
parameter. The set stays small while the resolution around the true model
(eps = 0) grows geometrically.
"""

import numpy as np

from berknash import (
    BanditConfig,
    SoftPlanConfig,
    ZoomConfig,
    benchmark3,
    mixture_kernel,
    run_zoom_exp3,
)

m, _ = benchmark3()
cfg = BanditConfig()
zoom = ZoomConfig()  # bounds [0, 0.5], zoom every 100 rounds
initial = list(np.linspace(0.0, 0.5, 6))
print("initial grid:", np.round(initial, 3))

record = run_zoom_exp3(
    m, lambda eps: mixture_kernel(m, float(eps)), initial, cfg, zoom,
    SoftPlanConfig(temperature=0.1),
)

print("\nzoom events (every {} rounds):".format(zoom.zoom_interval))
for ev in record.events[:8]:
    pruned = ", ".join(f"{p:.4g}({why[0]})" for p, why in ev.pruned) or "-"
    added = ", ".join(f"{p:.4g}" for p in ev.added) or "-"
    print(f"  t={ev.t:4d}: incumbent={ev.incumbent_param:.5g}  "
          f"pruned [{pruned}]  added [{added}]")
if len(record.events) > 8:
    print(f"  ... {len(record.events) - 8} more events")

print("\nselected parameter, median per 150-round window:")
for lo in range(0, record.selected_params.size, 300):
    window = record.selected_params[lo:lo + 150]
    print(f"  rounds {lo + 1:4d}-{lo + 150:4d}: {np.median(window):.5f}")

fp = np.sort(np.array(record.final_params))
print("\nfinal conjecture set ({} arms):".format(fp.size))
print(" ", np.array2string(fp, precision=6, max_line_width=78))
print("set size over time: start {}, peak {}, final {}".format(
    record.set_sizes[0], record.set_sizes.max(), record.set_sizes[-1]))
print("running-average loss: {:.5f}".format(record.running_mean[-1]))
