"""Eigen-analysis of the linearized shaft and network model.

Run with ``python3 demos/02_modes.py``.
"""

from ssrscan import assemble, bundled_model, couple, eig_modes

model = bundled_model()
system = assemble(model, couple(model))
modes = eig_modes(system)
residue = modes.residues(system.C2, system.input_column(model.attack.bus))

print(f"{'f (Hz)':>8} {'zeta':>9} {'kind':<18} {'gen':<4} {'reachable':<9} participation")
for m, r in zip(modes, residue):
    if m.frequency_hz <= 0:
        continue
    print(f"{m.frequency_hz:8.3f} {m.damping_ratio:9.2e} {m.kind:<18} {m.generator:<4} "
          f"{'yes' if r > 1e-9 else 'no':<9} {', '.join(m.participation)}")
