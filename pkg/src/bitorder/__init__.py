"""Bit-transition analysis and popcount-based transmission ordering for NoC DNN accelerators."""

__version__ = "0.1.0"

from .bitcore import (BitWord, Flit, FlitKind, LinkStatsCounter, bit_transitions, encode_float32,
                      popcount, quantize_fixed8)
from .ordering import OrderingScheme, PairBlock, PermutationIndex
from .estimators import FlitOrderer, Fixed8Quantizer, Float32Encoder

__all__ = [
    "BitWord", "Flit", "FlitKind", "LinkStatsCounter", "bit_transitions", "encode_float32",
    "popcount", "quantize_fixed8", "OrderingScheme", "PairBlock", "PermutationIndex",
    "FlitOrderer", "Fixed8Quantizer", "Float32Encoder",
]
