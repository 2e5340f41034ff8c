"""Output-only identification of the 4-DOF spring-mass benchmark.

Walks through the whole workflow on simulated data:

1. build the chain and look at its exact modes,
2. see how the 100 Hz average-acceleration integrator shifts those frequencies,
3. train the separation network on 10 s of response and identify modes
   from the separated coordinates of a 30 min record,
4. compare with the eigen-solution.

Run from the repository root:  python3 demos/benchmark_4dof.py [seed] [out_dir]
"""

import sys

import numpy as np

from modalsep.dynamics import benchmark_4dof, eigen_modes, newmark_apparent_frequencies
from modalsep.pipeline import RunConfig, format_report, load_report, run_pipeline

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 3
out_dir = sys.argv[2] if len(sys.argv) > 2 else "demo-out/benchmark"

# --- the structure -------------------------------------------------------------
model = benchmark_4dof()
truth = eigen_modes(model)
print("mass diagonal     :", np.diag(model.mass))
print("natural freq [Hz] :", np.round(truth.frequencies, 4))
print("damping ratio [%] :", np.round(100 * truth.damping_ratios, 3))

# A 100 Hz trapezoidal integration oscillates slightly slower than the
# continuous system; these are the frequencies the simulated data contains.
apparent = newmark_apparent_frequencies(truth.frequencies, 100.0)
print("apparent at 100 Hz:", np.round(apparent, 4))

# --- identification --------------------------------------------------------------
config = RunConfig.from_dict({
    "input": "simulate:benchmark4dof",
    "output_dir": out_dir,
    "seed": seed,
    "train_samples": 1000,                       # 10 s of training data
    "preprocessing": {"demean": True, "standardize": True},
    "network": {"separation_dim": 4, "lambdas": [1.0, 0.001, 0.1, 0.1],
                "learning_rate": 0.01, "batch_size": 128, "epochs": 10000},
    "analysis": {"welch_segment_length": 4096},
})
print(f"\ntraining 10,000 epochs (seed {seed}) ...")
report = run_pipeline(config)
print(f"done in {report.wall_time_s:.1f} s, artifacts in {out_dir}/\n")
print(format_report(load_report(report.report_path)))

# The network sees only 10 s of data, so the result depends on how
# non-Gaussian each modal coordinate happens to be in that window: some seeds
# give MAC > 0.99 on every mode, others leave one mode near 0.9.
