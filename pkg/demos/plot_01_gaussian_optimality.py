"""
Gaussian sensors: the weighted average is optimal
==================================================

Sixty-four sensors start with Gaussian offsets of variance 1 and read each
other through Gaussian noise of variance 1. For Gaussians the Fisher
information bound is attained, so ALG's variance should sit right on the
floor ``1/J`` and its accuracy ``c`` should be the reciprocal of the variance.
"""

from pathlib import Path

import numpy as np

from fishersync.cli import load_run_config
from fishersync.montecarlo import check_unbiasedness, run_experiment
from fishersync.pattern import load_pattern

here = Path(__file__).parent / "configs"

cfg = load_run_config(here / "gaussian_tournament64.json")
pattern = load_pattern(cfg.pattern_path)
res = run_experiment(cfg.experiment(pattern))

# var * J is 1 in every cell up to sampling error
ratio = res.variance * res.fi_bound
print(f"{res.trials} trials, {pattern.n} sensors, depth {pattern.depth}")
print(f"var*J ranges over [{ratio.min():.4f}, {ratio.max():.4f}]")

# follow the eventual winner round by round
winner = pattern.events[-1].observer
for t in range(pattern.depth + 1):
    print(f"round {t}: variance {res.variance[t, winner]:.4f}  floor {1 / res.fi_bound[t, winner]:.4f}  1/c {1 / res.accuracy[t, winner]:.4f}")

# moving the start time by a million changes the means and nothing else
shifted = run_experiment(load_run_config(here / "gaussian_tournament64_offset.json").experiment(pattern))
print("max |mean shift - 1e6| :", np.max(np.abs(shifted.mean - res.mean - 1e6)))
print("max variance rel. diff :", np.max(np.abs(shifted.variance / res.variance - 1)))
print(check_unbiasedness(shifted, 1e6).line())
