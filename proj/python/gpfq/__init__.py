"""Greedy path-following post-training weight quantization."""

try:
    from ._gpfq_core import (  # installed package layout
        Alphabet,
        DegenerateAlphabetError,
        NeuronQuantizationResult,
        build_alphabet,
        exhaustive_optimal_quantize,
        level_set_check,
        msq_quantize,
        quantize_model_file,
        quantize_neuron_first_layer,
        quantize_neuron_hidden_layer,
        radius_from_weights,
        scalar_quantize,
        special_case_suite,
    )
except ImportError:
    from _gpfq_core import (  # build-tree layout used by ctest
        Alphabet,
        DegenerateAlphabetError,
        NeuronQuantizationResult,
        build_alphabet,
        exhaustive_optimal_quantize,
        level_set_check,
        msq_quantize,
        quantize_model_file,
        quantize_neuron_first_layer,
        quantize_neuron_hidden_layer,
        radius_from_weights,
        scalar_quantize,
        special_case_suite,
    )

__all__ = [
    "Alphabet",
    "DegenerateAlphabetError",
    "NeuronQuantizationResult",
    "build_alphabet",
    "exhaustive_optimal_quantize",
    "level_set_check",
    "msq_quantize",
    "quantize_model_file",
    "quantize_neuron_first_layer",
    "quantize_neuron_hidden_layer",
    "radius_from_weights",
    "scalar_quantize",
    "special_case_suite",
]
