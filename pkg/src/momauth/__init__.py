"""Database-free chip authentication from back-end capacitor mismatch.

Behavioral simulation of unit-capacitor mismatch read out through a
modified SAR ADC, plus the statistics used to tune and judge it.
"""

from momauth.process import FabProcess, Geometry, ChipInstance, sample_chip, apply_temperature
from momauth.frontend import ComparatorModel, OffsetCapBank, cof_value, compare, mismatch_compare
from momauth.signature import SignatureTrace, extract_signature, majority_vote, average_trace, default_cof_grid
from momauth.auth import ACCard, AuthDecision, enroll, d_auth, d_auth_weighted, authenticate, weight_assign
from momauth.estimators import SignatureExtractor, ACAuthenticator

__version__ = "0.1.0"

__all__ = [
    "FabProcess",
    "Geometry",
    "ChipInstance",
    "sample_chip",
    "apply_temperature",
    "ComparatorModel",
    "OffsetCapBank",
    "cof_value",
    "compare",
    "mismatch_compare",
    "SignatureTrace",
    "extract_signature",
    "majority_vote",
    "average_trace",
    "default_cof_grid",
    "ACCard",
    "AuthDecision",
    "enroll",
    "d_auth",
    "d_auth_weighted",
    "authenticate",
    "weight_assign",
    "SignatureExtractor",
    "ACAuthenticator",
]
