"""Carry an 80 kg payload along a trotting path, with and without prediction.

Both controllers get the same identified payload estimate. The baseline
applies it as feedforward with PID on top; the composite controller also
plans ten steps ahead with a predictive model. Pass a trained checkpoint
(from `opipinnpc train`) to plan with the neural surrogate; without one the
identified rigid-body model stands in for it.

    python3 demos/track_with_mpc.py [surrogate.ckpt]
"""

import sys
import time

import numpy as np

from opipinnpc.harness import parse_config, run_metrics
from opipinnpc.harness.benchmark import make_controller
from opipinnpc.nmpc import ModelSurrogate
from opipinnpc.pinn import load_checkpoint
from opipinnpc.sim import identify_payload, run_scenario

cfg = parse_config("[scenario]\nduration = 4\n", seed=5)
params = cfg.robot_params()
payload = cfg.payload(80.0)

if len(sys.argv) > 1:
    surrogate = load_checkpoint(sys.argv[1])
    print(f"planning with the network in {sys.argv[1]}")
else:
    surrogate = ModelSurrogate(params, cfg.schedule())
    print("planning with the identified rigid-body model (no checkpoint given)")

omega_hat = identify_payload(params, payload, **cfg.identify_kwargs()).estimate
print(f"identified m_p = {omega_hat.m_p_hat:.2f} kg for a true {payload.m_p:.0f} kg\n")

for name in ("baseline", "opi-pinnpc"):
    ctrl = make_controller(name, cfg, omega_hat, surrogate)
    t0 = time.perf_counter()
    log = run_scenario(cfg.scenario(payload.m_p), ctrl, params)
    secs = time.perf_counter() - t0
    m = run_metrics(log, cfg["scenario"]["eval_start"])
    peak_z = np.max(np.abs(log.error[:, 2]))
    print(f"{name:>11}: position RMSE {m.rmse_position * 1000:6.2f} mm, orientation RMSE"
          f" {np.degrees(m.rmse_orientation):5.3f} deg, worst height error {peak_z * 1000:5.2f} mm"
          f"  ({secs / len(log.t) * 1000:.0f} ms per step)")
