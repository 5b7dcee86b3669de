//! The dataset CSV reader must never panic on arbitrary bytes, and anything
//! it accepts must survive a bit-exact write/read round trip.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(parsed) = cvxreg::io::read_dataset_csv(data) else {
        return;
    };
    let mut buf = Vec::new();
    cvxreg::io::write_dataset_csv(&mut buf, &parsed).expect("accepted datasets serialize");
    let back = cvxreg::io::read_dataset_csv(&buf[..]).expect("own output parses");
    assert_eq!(back.x.as_slice(), parsed.x.as_slice());
    assert_eq!(back.y, parsed.y);
});
