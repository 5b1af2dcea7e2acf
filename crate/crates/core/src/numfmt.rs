//! Fixed decimal formatting for emitted tables.
//!
//! Output files round to at most six fractional digits with trailing zeros
//! trimmed, so regeneration from identical inputs is byte-stable.

use alloc::string::String;

/// Format with up to six fractional digits, trimming trailing zeros and a
/// dangling point. `-0` collapses to `0`.
pub fn format_fixed(value: f64) -> String {
    debug_assert!(value.is_finite());
    let mut s = alloc::format!("{value:.6}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s.clear();
        s.push('0');
    }
    s
}
