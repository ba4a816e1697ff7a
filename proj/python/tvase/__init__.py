"""Causal joint acoustic-echo-cancellation and noise-suppression engine."""

from ._core import (  # noqa: F401
    HOP,
    SAMPLE_RATE,
    WIN_LEN,
    ModelWeights,
    TvaseError,
    __version__,
    build_weights,
    compressed_mse,
    consistency_project,
    enhance,
    erle_db,
    estimate_delay,
    far_single_talk_labels,
    istft,
    load_weights,
    measure_levels,
    mix,
    model_forward,
    nonlinear_distort,
    power_law_compress,
    run_gradcheck,
    simulate_rir,
    stft,
)
