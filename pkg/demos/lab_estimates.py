"""Back-of-the-envelope numbers for a periodically poled KTP squeezer.

Dispersion and phase matching from the Sellmeier fit, nonlinearity from
single-pass second-harmonic power, the squeezing expected from classical
measurements, and the pulsed down-conversion mode structure.
"""
import numpy as np

from artifact import labcalc as lc

print(f"{'quantity':28s} {'value':>12s}  unit   reference")
for r in lc.table():
    ref = f"{r['reference']:g}" if r["reference"] != "" else ""
    print(f"{r['name']:28s} {r['value']:12.5g}  {r['unit']:6s} {ref}")

md = lc.pdc_mode_decomposition(N=0.5, orders=(6, 4, 4))
print(f"\nSchmidt ladder: temporal ratio tanh r = {np.tanh(abs(md.r_omega)):.3f}, "
      f"leading sinh^2 = {md.sinh_zeta[0, 0, 0] ** 2:.4f}, truncated tail = {md.tail():.2e}")
