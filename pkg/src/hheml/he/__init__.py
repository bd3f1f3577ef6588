"""Leveled BFV with RNS/NTT arithmetic, batching, relinearisation and rotations."""

from .encoder import BatchedPlaintext, BatchEncoder, PeriodicEncoder
from .evaluator import Ciphertext, Evaluator, OpCounter, diff_counts, rotate_plain
from .keys import (EvaluationKey, GaloisKeys, HeKeys, KeySwitchKey, PublicKey,
                   SecretKey, galois_element, keygen)
from .params import PROFILES, HeParams, get_profile

__all__ = [
    "BatchedPlaintext", "BatchEncoder", "PeriodicEncoder", "Ciphertext", "Evaluator",
    "OpCounter", "diff_counts", "rotate_plain", "EvaluationKey", "GaloisKeys", "HeKeys",
    "KeySwitchKey", "PublicKey", "SecretKey", "galois_element", "keygen", "PROFILES",
    "HeParams", "get_profile",
]
