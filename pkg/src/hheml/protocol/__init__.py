"""Multi-party protocol simulation: envelopes, parties, sessions and audits."""

from .envelope import Envelope, MessageType, iter_envelopes, open_envelope, read_envelope, seal, write_envelope
from .hygiene import Finding, scan
from .parties import ANALYST_ID, CSP_ID, FIRST_USER_ID, TEE_ID, Analyst, Csp, Tee, User
from .session import (MODES, Session, classify, classify_3party, classify_tee, eval_at_csp,
                      eval_request, setup, transcript_export, transcript_jsonl, upload)

__all__ = [
    "Envelope", "MessageType", "iter_envelopes", "open_envelope", "read_envelope", "seal",
    "write_envelope", "Finding", "scan", "ANALYST_ID",
    "CSP_ID", "FIRST_USER_ID", "TEE_ID", "Analyst", "Csp", "Tee", "User", "MODES", "Session",
    "classify", "classify_3party", "classify_tee", "eval_at_csp", "eval_request", "setup",
    "transcript_export", "transcript_jsonl", "upload",
]
