"""Train a small physics-informed surrogate and look at what it learned.

The full training set has 20 payloads and five seconds of trotting each.
Here we use four payloads, two seconds each, and a short schedule so the
script finishes in well under a minute. The loss will not reach the level of a
full run, but the phases are the same: Adam on mini-batches, then L-BFGS
on the full set.
"""

import numpy as np

from opipinnpc.harness import default_config, parse_config
from opipinnpc.harness.pipeline import collect_from_config, train_from_config
from opipinnpc.pinn import IdentifiedDynamics, forward_batch, physics_residual

cfg = parse_config("""
[pinn]
instances = 4
instance_duration = 2
hidden = 48, 48
adam_epochs = 200
lbfgs_max_iter = 40
""", seed=1)

data = collect_from_config(cfg)
train_set, held_out = data.split(0.9, seed=cfg.seed)
print(f"collected {len(data)} samples; training on {len(train_set)}, holding out {len(held_out)}")
print(f"step sizes T range over [{data.T.min():.4f}, {data.T.max():.4f}] s")

model, hist = train_from_config(cfg, train_set.inputs(), train_set.Y)
for phase in ("init", "adam-end"):
    i = hist.phase.index(phase)
    print(f"{phase:>9}: total {hist.total[i]:.3e}  (data {hist.mse_data[i]:.3e}, physics {hist.mse_phy[i]:.3e})")
print(f"    final: total {hist.final_total:.3e} after {hist.phase.count('lbfgs')} L-BFGS iterations")

pred = forward_batch(model, held_out.inputs())
err = (pred - held_out.Y) / model.out_scale
print(f"\nheld-out one-step error, in label standard deviations: {np.sqrt(np.mean(err ** 2)):.3e}")
names = ["x", "y", "z", "roll", "pitch", "yaw", "vx", "vy", "vz", "wx", "wy", "wz"]
per = np.sqrt(np.mean(err ** 2, axis=0))
print("per coordinate: " + ", ".join(f"{n} {e:.1e}" for n, e in zip(names, per)))

dyn = IdentifiedDynamics(cfg.robot_params(), cfg.schedule())
r_train = np.mean(physics_residual(model, train_set.inputs(), dyn) ** 2)
r_held = np.mean(physics_residual(model, held_out.inputs(), dyn) ** 2)
print(f"mean squared physics residual: training {r_train:.3e}, held out {r_held:.3e}")
print(f"(the default configuration trains for {default_config(0)['pinn']['adam_epochs']} epochs instead of 200)")
