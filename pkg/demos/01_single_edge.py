"""One edge, one layer: the smallest QAOA problem, checked against its closed form."""
import numpy as np

from qaoa_transfer.graphgen import Graph
from qaoa_transfer.optimizers import Objective, nelder_mead_minimize
from qaoa_transfer.pipeline import landscape_raster
from qaoa_transfer.simulator import QaoaParams, build_cut_table, qaoa_expectation

edge = Graph(2, ((0, 1, 1.0),))
table = build_cut_table(edge)
print("cut table (diagonal of H_C):", table.values)

# <C> = 1/2 + 1/2 sin(4 beta) sin(gamma) for a single edge
for gm, bt in [(0.0, 0.0), (np.pi / 2, np.pi / 8), (1.0, 0.3)]:
    sim = qaoa_expectation(table, QaoaParams([gm], [bt]))
    print(f"gamma={gm:.3f} beta={bt:.3f}  simulator {sim:.12f}  formula {0.5 + 0.5 * np.sin(4 * bt) * np.sin(gm):.12f}")

# Nelder-Mead finds the maximum from a poor start
init = QaoaParams([0.1], [0.1])
best, trace = nelder_mead_minimize(Objective(table, init), init)
print(f"optimum after {trace.n_evals} evaluations: gamma={best.gammas[0]:.5f} beta={best.betas[0]:.5f} "
      f"<C>={qaoa_expectation(table, best):.8f}")

# the whole p=1 landscape on a 64 x 64 grid; rows are beta, columns gamma
land = landscape_raster(edge)
i, j = np.unravel_index(np.argmax(land), land.shape)
print(f"grid maximum {land.max():.4f} at gamma={j * 2 * np.pi / 64:.3f}, beta={i * np.pi / 64:.3f}")
print("gamma = 0 column is flat:", np.allclose(land[:, 0], 0.5))

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots()
    im = ax.imshow(land, origin="lower", extent=(0, 2 * np.pi, 0, np.pi), aspect="auto")
    ax.set(xlabel="gamma", ylabel="beta", title="single edge, p = 1")
    fig.colorbar(im, label="<H_C>")
    fig.savefig("single_edge_landscape.svg")
    print("wrote single_edge_landscape.svg")
except ImportError:
    pass
