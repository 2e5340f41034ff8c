"""A long-span-bridge stand-in: six closely spaced low-frequency modes.

The record is one hour of 10-channel acceleration at 10 Hz with 5 % sensor
noise. The separation layer is deliberately over-provisioned (10 neurons for
6 modes), so the workflow has to decide which separated columns are real
modes before refitting their shapes against the raw data.

Run from the repository root:  python3 demos/bridge_analog.py [seed] [out_dir]
"""

import sys

import numpy as np
from scipy.stats import kurtosis

from modalsep.pipeline import RunConfig, format_report, load_report, run_pipeline
from modalsep.synthetic import bridge_analog

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
out_dir = sys.argv[2] if len(sys.argv) > 2 else "demo-out/bridge"

# --- what the data look like ----------------------------------------------------------
record, truth = bridge_analog(seed=seed)
print("channels x samples :", record.samples.shape[::-1])
print("modal freqs [Hz]   :", np.round(truth.frequencies, 3))
print("damping [%]        :", np.round(100 * truth.damping_ratios, 2))

# Each mode is driven by broadband noise plus a slowly wandering tone near its
# own frequency, which makes the modal coordinates sub-Gaussian. A G3-type
# contrast relies on that; purely Gaussian modal responses would leave it
# nothing to separate.
q = np.linalg.lstsq(truth.shapes, record.samples.T, rcond=None)[0].T
print("modal kurtosis     :", np.round(kurtosis(q, fisher=False), 2))

gram = truth.shapes.T @ truth.shapes
off = np.abs(gram - np.diag(np.diag(gram))).max() / np.diag(gram).max()
print(f"largest shape cross-product (relative): {off:.2f}  (not orthogonal on the sensors)")

# --- identification ---------------------------------------------------------------------
config = RunConfig.from_dict({
    "input": "simulate:bridge-analog",
    "output_dir": out_dir,
    "seed": seed,
    "network": {"separation_dim": 10, "lambdas": [1.0, 0.001, 0.1, 0.1],
                "learning_rate": 0.001, "batch_size": 128, "epochs": 1000},
})
print("\ntraining 1,000 epochs on the raw record ...")
report = run_pipeline(config)
print(f"done in {report.wall_time_s:.1f} s; selected columns {report.selected_columns}\n")
print(format_report(load_report(report.report_path)))

# Frequencies and refitted shapes come out well. The damping column is low
# (around 0.05 %): the tonal part of the excitation keeps each mode ringing
# long after a random-decrement trigger, which looks like very light damping.
