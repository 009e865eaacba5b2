"""Desk-scale calibration: full pipeline vs no-transfer baseline.

Prints per-stage losses and the accuracy-vs-SNR curve for both arms so
epoch counts for the acceptance suite can be chosen.
"""

import time

import numpy as np
import torch

from amcnr.datasets import build_modulation_dataset, build_periodic_dataset
from amcnr.evaluation import accuracy_vs_snr, snr_gain
from amcnr.models import ClassifierConfig
from amcnr.signals import ModulationScheme
from amcnr.training import (
    TrainConfig,
    pretrain,
    train_baseline_amc,
    train_baseline_nr_scratch,
    transfer_stage1,
    transfer_stage2,
)

torch.set_num_threads(2)

T = 256
SEED = 11
cfg = TrainConfig(
    epochs_pretrain=25,
    epochs_stage1=40,
    epochs_stage2=300,
    batch_size=64,
    lr_classify_end=1e-3,
    seed=SEED,
)

t0 = time.time()
periodic = build_periodic_dataset(1000, T, seed=100 + SEED)
mod = build_modulation_dataset(tuple(ModulationScheme), 200, T, seed=200 + SEED,
                               phase=0.0)
holdout = build_modulation_dataset(tuple(ModulationScheme), 100, T, seed=900 + SEED,
                                   phase=0.0)
print(f"datasets: {time.time()-t0:.1f}s", flush=True)

t0 = time.time()
p_store, p_rep = pretrain(periodic, cfg)
print(f"pretrain {time.time()-t0:.1f}s  init={p_rep.initial_val_loss:.4f} "
      f"final={p_rep.val_loss[-1]:.4f}", flush=True)

t0 = time.time()
nr_store, nr_rep = transfer_stage1(p_store, mod, cfg)
print(f"stage1 {time.time()-t0:.1f}s  init={nr_rep.initial_val_loss:.4f} "
      f"val={[round(v,4) for v in nr_rep.val_loss[::5]]}", flush=True)

t0 = time.time()
sc_store, sc_rep = train_baseline_nr_scratch(mod, cfg)
print(f"nr-scratch {time.time()-t0:.1f}s  init={sc_rep.initial_val_loss:.4f} "
      f"val={[round(v,4) for v in sc_rep.val_loss[::5]]}", flush=True)

lo = build_modulation_dataset(tuple(ModulationScheme), 40, T, snr_min=-8, snr_max=0,
                              seed=901 + SEED, phase=0.0)
print(f"snr_gain(stage1): {snr_gain(nr_store, lo):.2f} dB", flush=True)

t0 = time.time()
# reconstruction tap after layer 2: the anchor and classifier head then
# use different layers, which preserves the low-SNR benefit at this scale
mc_store, mc_rep = transfer_stage2(nr_store, mod, cfg,
                                   cls_cfg=ClassifierConfig(reconstruction_tap=2))
print(f"stage2 {time.time()-t0:.1f}s  acc={[round(a,3) for a in mc_rep.accuracy[::10]]}",
      flush=True)

t0 = time.time()
amc_store, amc_rep = train_baseline_amc(mod, cfg)
print(f"amc-baseline {time.time()-t0:.1f}s  acc={[round(a,3) for a in amc_rep.accuracy[::10]]}",
      flush=True)

for name, store in (("TNR", mc_store), ("AMC", amc_store)):
    curve = accuracy_vs_snr(store, holdout)
    print(name, [(c, round(a, 3), n) for c, a, n in curve], flush=True)
