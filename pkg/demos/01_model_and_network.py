"""Load the bundled two-area system and inspect its DC network coupling.

Run with ``python3 demos/01_model_and_network.py``.
"""

import numpy as np

from ssrscan import bundled_model, couple, steady_state_angles
from ssrscan.network import line_flows

model = bundled_model()
net = model.network
print(f"{len(model.generators)} generators, {len(net.buses)} buses, slack {net.slack_bus}")

coupling = couple(model)
np.set_printoptions(precision=3, suppress=True)
print("reduced terminal coupling (p.u. power per electrical rad):")
print(coupling.terminal)
print("load-to-generator coupling B_e, columns", ", ".join(coupling.load_buses))
print(coupling.B_e)

angles = steady_state_angles(coupling, model.dispatch_pu(), net.load_vector_pu())
for line, flow in zip(net.lines, line_flows(net, angles)):
    print(f"  {line.from_bus:>4} -> {line.to_bus:<4} {flow * net.base_mva:8.1f} MW")
