"""Exception hierarchy and JSON record helpers."""
