# Latency versus load
#
# Sweep the request rate and compare the three modes. At light load every
# mode that has edges answers from the local edge, so FoggyEdge and EdgeOnly
# agree. Under heavy load FoggyEdge spills work onto parked vehicles and
# stays ahead.

import numpy as np

from foggyedge import ScenarioConfig, sweep

cfg = ScenarioConfig(output_trace=False, scenario_duration_s=120.0)
res = sweep(cfg, rates=[1, 3, 5, 7, 10])
print(res.table())

rates = sorted({r["rate"] for r in res.rows})
csd = {m: np.array([next(r["mean_csd"] for r in res.rows if r["rate"] == k and r["mode"] == m)
                    for k in rates])
       for m in ("FoggyEdge", "EdgeOnly", "CloudOnly")}

# relative saving of FoggyEdge over the other two, per rate
print("rate  vs EdgeOnly  vs CloudOnly")
for k, a, b in zip(rates, 1 - csd["FoggyEdge"] / csd["EdgeOnly"], 1 - csd["FoggyEdge"] / csd["CloudOnly"]):
    print(f"{k:4g}  {a:9.1%}  {b:11.1%}")

try:
    from foggyedge.plot import emit_plot
    print("plot written to", emit_plot(res.rows, "csd.svg"))
except ImportError:
    print("install the 'plot' extra for a chart")
