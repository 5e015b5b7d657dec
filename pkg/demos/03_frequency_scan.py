"""Scan the attack-to-output transfer magnitudes and list resonance bands.

Run with ``python3 demos/03_frequency_scan.py``.
"""

from ssrscan import assemble, bundled_model, couple, find_peaks, transfer_magnitudes

model = bundled_model()
system = assemble(model, couple(model))
scan = transfer_magnitudes(system, model.attack.bus)

print(f"{'output':<16} {'center':>7} {'band (Hz)':>15} {'|Gamma2|':>10} {'R_M':>8}")
for band in find_peaks(scan):
    print(f"{band.output_id:<16} {band.f_center:7.2f} {band.f_lo:7.2f}-{band.f_hi:<7.2f} "
          f"{band.magnitude:10.3g} {band.r_m:8.3g}{'  stealth' if band.stealth else ''}")
