"""Donor to acceptor: transfer the angles, then compare three ways of refining them.

Runs in about a minute on one core.
"""
import time

from qaoa_transfer.graphgen import GraphFamily
from qaoa_transfer.optimizers import AdagradConfig, Regularizer
from qaoa_transfer.params import ParameterBank, bank_dumps, tqa_init, transfer_init
from qaoa_transfer.pipeline import (
    efficiency,
    full_optimize_acceptor,
    sample_instance,
    targeted_single_layer,
    train_donor,
)

family = GraphFamily("u3r")
p, dt = 15, 0.75

# 1. an 8-vertex donor, TQA start, 100 Adagrad steps under a small L2 penalty
t0 = time.perf_counter()
donor = train_donor(family, 8, p, dt, AdagradConfig(), Regularizer("l2", 1e-4), seed=1)
print(f"donor trained in {time.perf_counter() - t0:.1f}s, r_f = {donor.r_f:.5f}")
inst, _ = sample_instance(family, 8, 1)
print(f"  (TQA start alone gave {inst.ratio(tqa_init(p, dt)):.5f})")

bank = ParameterBank()
bank.add(donor)
print(bank_dumps(bank)[:160], "...")

# 2. the same angles on bigger graphs of the family
angles = transfer_init(bank, ("u3r", 8, p))
for n in (10, 12):
    acceptor, _ = sample_instance(family, n, seed=100 + n)
    r_n = acceptor.ratio(angles)
    r_s, tr_s = targeted_single_layer(acceptor, angles, k=7)       # only layer 7 moves
    r_f, tr_f = full_optimize_acceptor(acceptor, angles)           # all 30 angles move
    print(f"n_a={n}: r_n={r_n:.5f} r_s={r_s:.5f} r_f={r_f:.5f}")
    print(f"        tau_s={tr_s.wall_time:.3f}s tau_f={tr_f.wall_time:.3f}s "
          f"eps_s={efficiency(r_s, r_n, tr_s.wall_time):.4f}/s eps_f={efficiency(r_f, r_n, tr_f.wall_time):.4f}/s")
