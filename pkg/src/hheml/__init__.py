"""Hybrid homomorphic encryption toolkit.

Layers, bottom up: ``ring`` (RNS/NTT polynomial arithmetic), ``he`` (leveled
BFV), ``pasta`` (the symmetric stream cipher), ``hhe`` (transciphering and
the encrypted linear layer), ``protocol`` (parties, envelopes, sessions),
``data`` and ``ml`` (ECG datasets and quantised inference), ``bench`` and
``cli``.
"""

from .errors import HheError
from .hhe import (HheProfile, LinearLayerCircuit, hhe_dec, hhe_decomp, hhe_enc, hhe_eval,
                  hhe_keygen, make_profile)

__version__ = "0.1.0"

__all__ = ["HheError", "HheProfile", "LinearLayerCircuit", "hhe_dec", "hhe_decomp", "hhe_enc",
           "hhe_eval", "hhe_keygen", "make_profile", "__version__"]
