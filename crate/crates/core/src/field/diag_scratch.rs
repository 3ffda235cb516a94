//! Scratch diagnostics (not part of the build).
