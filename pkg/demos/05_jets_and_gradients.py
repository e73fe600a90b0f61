"""Derivatives of a network two ways.

Second-order jets give the Laplacian of the output in one forward sweep;
reverse mode over that sweep gives parameter gradients of a PINN loss.  Both
are compared with finite differences.
"""

import numpy as np

from pde_arena import get_problem, init_params, jet2, total_loss, value_and_grad
from pde_arena.network import forward
from pde_arena.problems import sample_batch
from pde_arena.sampling import sample_rng

net = init_params((16, 16, 1), 0, 2)
x = np.random.default_rng(0).uniform(-1, 1, size=(5, 2))
h = 1e-4
fd = sum((forward(net, x + e)[:, 0] - 2 * forward(net, x)[:, 0] + forward(net, x - e)[:, 0]) / h**2
         for e in np.eye(2) * h)
print("Laplacian, jet vs finite differences:")
for a, b in zip(jet2(net, x).laplacian()[:, 0], fd):
    print(f"  {a:+.8f}  {b:+.8f}")

problem = get_problem("schrodinger1d")
net = init_params((8, 8, 2), 1, 2)
batch = sample_batch(problem, sample_rng(1), counts=(32, 8, 8))
loss, grad = value_and_grad(lambda p: total_loss(problem, p, batch), net)
theta = net.flat()
idx = np.random.default_rng(1).choice(theta.size, 5, replace=False)
print(f"\nSchrödinger loss {loss:.6f}, {theta.size} parameters; gradient spot checks:")
for i in idx:
    e = np.zeros_like(theta)
    e[i] = 1e-6
    fd = (float(total_loss(problem, net.with_flat(theta + e), batch))
          - float(total_loss(problem, net.with_flat(theta - e), batch))) / 2e-6
    print(f"  theta[{i:3d}]  reverse {grad[i]:+.8e}  fd {fd:+.8e}")
