"""Verification harness: test corpora, estimate suites, config, records and CLI."""
