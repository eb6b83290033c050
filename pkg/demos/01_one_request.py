# One request, three ways
#
# A car parked next to edge1 asks for object detection once. We run the same
# request under each mode and print where it was computed and how long the
# round trip took.

import numpy as np

from foggyedge import MODES, Network, ScenarioConfig
from foggyedge.engine import Kinematics

cfg = ScenarioConfig(fog_initial_vehicles=0, fog_arrival_rate=0.0)

for mode in MODES:
    net = Network(cfg.replace(scenario_mode=mode), generate=False)
    car = net.consumers[0]
    car.kin = Kinematics(net.edges[1].position(0), 0.0, net.direction, 0)  # parked under edge1
    net.inject(car, "object_detection")
    net.finish()
    rec = net.metrics.list()[0]
    print(f"{mode:10s} computed at {rec.node:6s} case {rec.case}  csd {rec.csd / 1e6:.6f} s")

# The hop list for the last run (CloudOnly). The final Data is a radio
# broadcast, so every car in range of edge1 hears it.
for h in net.hops:
    print(f"  t={h.time:>7d}  {h.sender:>6s} -> {h.receiver:<6s} {h.kind:8s} {h.size:5d} B")

sizes = np.array([h.size for h in net.hops])
print("bytes received, counting every radio listener:", sizes.sum())
