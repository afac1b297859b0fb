import hashlib
import json
from typing import Any

from pydantic import BaseModel


def canonical_json(payload: Any) -> str:
    """Stable JSON: sorted keys, no whitespace variance."""
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def fingerprint(payload: Any) -> str:
    """SHA-256 of the canonical JSON form."""
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def get_formatted_json(record: Any, pretty: bool = False) -> str:
    """One structured line (or an indented document) with a stable key order."""
    if isinstance(record, BaseModel):
        record = record.model_dump(mode="json")
    if pretty:
        return json.dumps(record, sort_keys=True, indent=2) + "\n"
    return json.dumps(record, sort_keys=True)


def derive_seed(*parts: Any) -> int:
    """Deterministic 63-bit seed from arbitrary parts (e.g. seed and pair_id)."""
    digest = hashlib.sha256("/".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
