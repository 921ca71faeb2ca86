"""Deterministic seed derivation.

Every random decision in a run flows from one master seed. Per-purpose
seeds are derived by hashing the master seed together with a short label,
so a single integer reproduces a whole run while the individual stages
stay statistically independent. SHA-256 keeps the derivation stable across
platforms and numpy versions.
"""

import hashlib


def derive_seed(master_seed: int, label: str) -> int:
    """Derive a 64-bit unsigned seed for `label` from the master seed."""
    payload = f"{int(master_seed)}:{label}".encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "big")
