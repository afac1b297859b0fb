"""Style feature face-swap detection."""
