"""Walk through the derivative machinery on one small network.

Spatial jets carry value, gradient and Hessian through the network; the tape
then differentiates any loss built from them with respect to the weights.
Both are compared here against central finite differences.
"""

import numpy as np

from ranspinn.autodiff import loss_gradient
from ranspinn.net import DenseNet, NetworkEnsemble, ensemble_predict, eval_spatial_jets, init_params
from ranspinn.physics import ModelConstants, pde_residuals

rng = np.random.default_rng(0)
net = DenseNet((3, 16, 16, 1))
theta = init_params(net.layer_sizes, seed=0)
pts = np.column_stack([rng.uniform(-1, 1, (5, 2)), np.zeros(5)])

jet = eval_spatial_jets(net, theta, pts)
h = 1e-4
f = lambda dx, dy: net.forward(theta, pts + np.array([dx, dy, 0.0]))
fd_xx = (f(h, 0) - 2 * f(0, 0) + f(-h, 0)) / h**2
print("d2f/dx2 from jets   :", np.round(jet.dxx, 8))
print("d2f/dx2 from FD     :", np.round(fd_xx, 8))

# A residual loss mixes second derivatives of all five networks.
ens = NetworkEnsemble.create((8, 8), seed=1)
xy = np.column_stack([rng.uniform(-1, 1, (6, 2)), np.full(6, 1500.0)])


def loss(params):
    rx, ry, rc, rk, re = pde_residuals(ensemble_predict(ens, xy, params), ModelConstants())
    return (rx * rx).sum() + (ry * ry).sum() + (rc * rc).sum() + (rk * rk).sum() + (re * re).sum()


g = loss_gradient(ens.params, loss)
d = rng.normal(size=g.size)
eps = 1e-6
fd = (float(loss(ens.params + eps * d)) - float(loss(ens.params - eps * d))) / (2 * eps)
print(f"directional derivative: tape {g @ d:.10e}  FD {fd:.10e}")
