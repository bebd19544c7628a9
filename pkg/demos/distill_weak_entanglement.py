"""Restoring two-mode squeezing after 95% channel loss.

A weak two-mode squeezed vacuum (zeta = 0.16) loses 95% of one arm.  A
heralded amplifier (an ancilla photon and a low-transmission splitter)
boosts the one-photon component back, at the price of a low success rate.
The script runs the exact Fock model and then the simulated acquisition:
detector traces, vacuum calibration and a phase fit to the drifting
two-mode covariance.
"""
import numpy as np

from artifact import channels as ch
from artifact import experiments as ex
from artifact import states as st
from artifact.homodyne import PhaseFitError

loss = st.LossSpec.from_power(1.0, 0.05)
rng = np.random.default_rng(1)

print(" g    P_succ    Vmin/Vin   LN before  LN after  F       DAQ Vmin   phase rms")
for g in (1, 4, 8, 12):
    spec = None if g == 1 else ch.CatalysisSpec.from_gain(g)
    rep = ch.distill(0.16, loss, spec, detection_eff=0.3)
    try:
        _, var, diag = ex.daq_variance_curve(rep.state, rng)
        daq = f"{np.nanmin(var):8.4f}   {diag['phase_rms_error']:.3f}"
    except PhaseFitError:
        daq = "  (too little correlation to lock the phase)"
    print(f"{g:3d}  {rep.success_probability:.2e}  {rep.min_variance / rep.input_min_variance:8.4f}"
          f"  {rep.log_negativity_before:9.4f} {rep.log_negativity_after:9.4f}  {rep.fidelity:.4f}  {daq}")

vin = st.tms_variance(0.16, theta_sum=np.linspace(0, 2 * np.pi, 721)).min()
print(f"\nlossless input minimum variance {vin:.4f}; through 30% efficient detection "
      f"{0.3 * vin + 0.7 * 0.5:.4f} (vacuum 0.5)")
