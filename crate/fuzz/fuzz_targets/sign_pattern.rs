//! The sign-pattern parser ("+,-,0,...") must never panic and must round
//! trip through its display form.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(pattern) = text.parse::<cvxreg::SignPattern>() else {
        return;
    };
    let shown = pattern.to_string();
    let back: cvxreg::SignPattern = shown.parse().expect("display form parses");
    assert_eq!(back, pattern);
});
