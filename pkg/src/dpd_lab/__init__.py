"""dpd-lab: a desk-scale laboratory for joint digital predistortion of a
simulated IQ-modulator + power-amplifier transmitter with multiple
operating states."""

from .signals import ComplexSignal, WaveformSpec, dbm_to_rms, generate_ofdm, set_rms
from .transmitter import (IqImbalanceConfig, IqPaChain, PaModel, chain_forward,
                          iq_kernels, iq_modulate, pa_forward, perturbed_pa)
from .nets import LayerSpec, OptimizerState, adam_step, init_params, nn_backward, nn_forward
from .predistorters import (MODEL_KINDS, DpdModel, build_model, hyper_generate,
                            make_input_window, predistort_sample, predistort_signal,
                            state_vector, window_matrix)
from .training import (Dataset, StateGrid, TrainConfig, build_dataset, deploy_and_measure,
                       loss_state, parallel_batches, train_ila)
from .metrics import (MetricsReport, PsdEstimate, acpr_db, band_power, evaluate_models,
                      nmse_db, welch_psd)
from .config import ExperimentConfig, build_chain, build_grid, load_config

__version__ = "0.1.0"
