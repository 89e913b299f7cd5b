"""Which single layer is worth re-optimizing?  A small version of the layer-selection sweep."""
import numpy as np

from qaoa_transfer.optimizers import NelderMeadConfig
from qaoa_transfer.pipeline import StudyConfig, donor_for, layer_selection

cfg = StudyConfig(family="u3r", sizes=(8, 10), master_seed=0)
donor = donor_for(cfg)
print(f"donor r_f = {donor.r_f:.5f}")

# every layer k = 1..15 is optimized on its own for each fresh acceptor graph
sel = layer_selection("u3r", donor.params, sizes=(8, 10), experiments=6, gf_cfg=NelderMeadConfig(), seed=0)
np.set_printoptions(precision=2, suppress=True, linewidth=120)
print("win frequency, rows n_a = 8, 10; columns layer 1..15")
print(sel.matrix)
print("modal layer:", sel.modal_layer)
