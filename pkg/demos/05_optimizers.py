# SAM on f(w) = w^2, the one-cycle curve, and an SWA running mean.

import numpy as np

from nanocnn import optim

# One SAM step from w=1 with lr=0.1, rho=0.1:
#   g = 2, eps = rho * g/|g| = 0.1, g at w+eps = 2.2, so w = 1 - 0.1*2.2 = 0.78
w = {"w": np.array([1.0])}
optim.sam_step(w, lambda: (float(w["w"][0] ** 2), {"w": 2 * w["w"].copy()}),
               optim.SamConfig(rho=0.1), optim.SgdState(lr=0.1, momentum=0.0, weight_decay=0.0))
print("after SAM:", w["w"][0])

sched = optim.OneCycleSchedule(lr_max=0.2, total_steps=11)
print("one-cycle:", [round(sched(i), 5) for i in range(11)])

# SWA over the last quarter of a 20-epoch run
s = optim.SwaState(start_fraction=0.75)
print("snapshot epochs:", [e for e in range(20) if optim.swa_should_update(e, 20, s)])
for k in range(5):
    optim.swa_update(s, {"w": np.full(3, float(k), np.float32)})
print("average:", s.avg_params["w"])   # mean of 0..4
