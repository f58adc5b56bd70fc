"""Broadband detection: the memory engine reduces to ordinary quantum jumps.

With a single channel whose impulse response is a delta function the memory
window holds one grid step, and the engine must reproduce the textbook jump
trajectory of the driven atom. Both are driven here by the same stream of
uniform variates, so they can be compared path by path.
"""

import numpy as np

from nmtraj import oracles
from nmtraj.atom import AtomParams
from nmtraj.channels import markov_channel
from nmtraj.engine import run_trajectory

params = AtomParams(gamma=1.0, omega_rabi=10.0)
dt = 0.005
n_steps = 20_000
u = np.random.RandomState(2).random_sample(n_steps)

out = run_trajectory(params, [markov_channel(dt)], n_steps * dt, 0, uniforms=u, trace_stride=1,
                     max_in_window=2)
jumps, states = oracles.markov_mcwf(params, dt, u)
ref = np.array([oracles.BlochState.from_density(np.outer(s, s.conj())).as_array() for s in states])

print(f"detections: engine {out.n_detections}, reference {jumps.size}")
print(f"identical detection steps: {np.array_equal(out.detection_steps, jumps)}")
print(f"largest Bloch-vector difference along the path: {np.max(np.abs(out.trace_bloch - ref)):.2e}")

# the record's rate approaches gamma * rho_ee of the steady state
rate = out.n_detections / out.duration
print(f"rate {rate:.3f} vs steady state {oracles.saturation_excited_population(params):.3f}")
