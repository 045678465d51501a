"""
How many observations does it take?
===================================

Each observation can add at most ``J_N`` Fisher information, the capacity of
the noisy channel. Reaching variance ``ε²`` from ``J₀`` therefore needs at
least ``(1/ε² − J₀)/J_N`` observations per typical sensor.

Synchronous patterns run out of independent partners after ``log2 n``
rounds, so this demo uses a broadcast pattern: in round ``r`` every learner
observes source ``r``. That keeps the pattern independent for as long as we
like.
"""

from pathlib import Path

from fishersync import bounds
from fishersync.cli import load_run_config
from fishersync.montecarlo import run_experiment
from fishersync.pattern import gen_broadcast

cfg = load_run_config(Path(__file__).parent / "configs" / "broadcast_convergence.json")
pattern = gen_broadcast(130, 131)
res = run_experiment(cfg.experiment(pattern))

for eps in (0.1, 0.2, 0.5):
    lb = bounds.convergence_lower_bound(eps, [1.0] * pattern.n, res.j_noise)
    t = bounds.empirical_convergence_time(res, pattern, eps)
    print(f"eps={eps}: lower bound {lb.bound:7.2f}   observed {t:g}")

# each learner gains 1/(1 + 1/4) = 0.8 per round against a capacity of 4,
# which is why the observed times sit well above the bound
print("clamped case (1/eps^2 <= J0):", bounds.convergence_lower_bound(1.0, [1.0], 4.0).bound)
