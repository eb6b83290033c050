# A parked vehicle leaves mid-job
#
# Two cars at edge0 ask for the same service while edge0 is too small to run
# it. The first request goes to edge1 (Case 2); the second is sent to the
# parking lot (Case 3). We make the hosting vehicle drive off 0.1 s into the
# job and watch the partial work move to another parked vehicle.

from foggyedge import Network, ScenarioConfig
from foggyedge.compute import NodeResources
from foggyedge.engine import Kinematics

S = 1_000_000  # ticks per second
cfg = ScenarioConfig(fog_initial_vehicles=2, fog_arrival_rate=0.0, fog_initial_elapsed=False)
net = Network(cfg, generate=False)
net.run(S)  # let the vehicles park and register
print("lot after arrivals:\n" + net.vfg.rat.dump())

net.edges[0].executor.resources = NodeResources(100)
for car in net.consumers[:2]:
    car.kin = Kinematics(net.edges[0].position(0), 0.0, net.direction, net.now)
    net.inject(car, "object_detection")
net.run(S + 20_000)

key = net.metrics.list()[1].name
host = next(v for v in net.vehicles if v.node_id == net.vfg.host_of[key])
print(f"\n{key} is running on {host.node_id}; it leaves in 0.1 s")
net.set_timer(host, 100_000, "depart")
net.finish()

for rec in net.metrics.list():
    print(f"case {rec.case} at {rec.node}: {rec.csd / 1e6:.4f} s")
inst = net.metrics.finished_instances[0]
for node, work in inst.work_log:
    print(f"  {node} did {work / 1e6:.4f} s of work")
print("total", inst.delivered_work() / 1e6, "s = base duration", inst.spec.base_ticks / 1e6, "s")
