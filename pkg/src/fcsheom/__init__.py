"""Transient full counting statistics with a counting-field hierarchy."""
