"""Photon subtraction on one arm of a delocalized Fock state.

Split |2> over two arms, tap a little light off arm A and keep the runs
where the tap detector clicks.  Recombining the arms gives |1> in the
original mode and nothing in the other port: the loss of a photon shows up
in the whole mode, not only in the arm it was taken from.  Compare with
what you would expect if only arm A lost a photon.
"""
import numpy as np

from artifact import channels as ch
from artifact.fock import partial_trace

np.set_printoptions(precision=4, suppress=True)

n, split = 2, 0.5
spec = ch.BeamsplitterSpec.from_mu_lambda(np.sqrt(split), np.sqrt(1 - split))
psi = ch.delocalized_fock(n, split)

res = ch.subtract_photon(psi, 0, np.sqrt(1 - 0.06 ** 2))
out = ch.beamsplit(res.state, (0, 1), spec.inverse())
print(f"click probability        {res.probability:.3e}")
print("recombined mode          ", partial_trace(out, [0]).diagonal())
print("other output port        ", partial_trace(out, [1]).diagonal())
print("naive local prediction   ", ch.naive_local_prediction(n).diagonal())

# background clicks dilute the heralded state as the tap gets weaker
taps = np.linspace(0.005, 0.15, 30)
bgs = np.linspace(0, 0.1, 20)
fmap = ch.vampire_fidelity_map(n, taps, bgs)
j = np.argmin(abs(bgs - 0.05))
print("\ntap   F(bg=0.05)")
for t, f in zip(taps[::5], fmap[::5, j]):
    print(f"{t:.3f} {f:.3f}")
print(f"working point t=0.06: F = {ch.vampire_fidelity(n, 0.06, 0.05):.4f}")
