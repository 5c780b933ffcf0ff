//! Brute-force reference implementations used only by tests.
