"""How much do predictions move when only the seed changes?

Trains three tiny surrogates on one manufactured cloud and reports where the
per-point variance of u is largest.
"""

import numpy as np

from ranspinn.evalreport import variance_study
from ranspinn.net import InputScaling, NetworkEnsemble
from ranspinn.sampler import default_caps, zone_sample
from ranspinn.trainer import TrainConfig, train
from ranspinn.workbench.mms import MmsSpec, mms_cloud

cloud, src = mms_cloud(MmsSpec(points_per_axis=16), 1500.0)
data = zone_sample(cloud, default_caps(cloud, 200), 0, src)
cfg = TrainConfig(epochs=8, batch_size=32)


def fit(seed):
    ens = NetworkEnsemble.create((12, 12), seed=seed, scaling=InputScaling.from_points(data.points))
    return train(TrainConfig(**{**cfg.__dict__, "seed": seed}), data, ens)[0]


res = variance_study(fit, [1, 2, 3], cloud.points())
var_u = res.variance["u"]
i = int(np.argmax(var_u))
print("seeds used:", res.seeds_used)
print(f"mean var(u) {var_u.mean():.3e}, max {var_u[i]:.3e} at (x, y) = ({cloud.xy[i, 0]:.3f}, {cloud.xy[i, 1]:.3f})")
