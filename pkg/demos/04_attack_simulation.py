"""Square-wave attack on and off a torsional resonance.

Run with ``python3 demos/04_attack_simulation.py``.
"""

import dataclasses

import numpy as np

from ssrscan import assemble, bundled_model, couple, integrate, severity_ratios

model = bundled_model()
system = assemble(model, couple(model))

for f in (35.28, 37.28):
    spec = dataclasses.replace(model.attack, amplitude=1.0, frequency_hz=f, waveform="square")
    result = integrate(system, spec, horizon_s=10.0, dt_s=1e-3)
    worst = max(
        (s for s in severity_ratios(result) if s.kind == "speed"),
        key=lambda s: np.nan_to_num(s.ratio, nan=-1),
    )
    print(f"{f:6.2f} Hz: max twist speed {worst.max_difference:8.3f} on {worst.output_id}, "
          f"terminal {worst.max_terminal:7.3f}, R_w {worst.ratio:6.2f}")
