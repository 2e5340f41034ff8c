"""Output-only modal identification with a self-coding separation network."""

from .analysis import (ModalEstimate, PsdEstimate, RdtSignature, SelectionCriteria, fit_damping,
                       mac, match_modes, pick_peak, rdt_extract, select_modes, welch_psd)
from .dynamics import (ExcitationSpec, ModalTruth, ResponseRecord, SystemModel, benchmark_4dof,
                       eigen_modes, newmark_apparent_frequencies, newmark_integrate)
from .network import (Activations, LossBreakdown, NetworkConfig, NetworkParams, OptimizerState,
                      extract_modal_responses, extract_mode_shapes, forward, gradients, loss,
                      negentropy_estimate, refit_shapes, rmsprop_step, train)
from .pipeline import RunConfig, RunReport, emit_plot_series, preprocess, run_pipeline
from .recordio import ingest_csv, write_record_csv

__version__ = "0.1.0"
