//! The model JSON loader must never panic on arbitrary bytes; accepted
//! documents must re-serialize and re-parse to bit-identical arrays, and the
//! model must be safe to evaluate.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok((model, smooth)) = cvxreg::io::model_from_json(text) else {
        return;
    };
    let out = cvxreg::io::model_to_json(&model, smooth.as_ref()).expect("valid models serialize");
    let (back, _) = cvxreg::io::model_from_json(&out).expect("own output parses");
    assert_eq!(back.theta, model.theta);
    assert_eq!(back.xi.as_slice(), model.xi.as_slice());
    assert_eq!(back.anchors.as_slice(), model.anchors.as_slice());
    let query = vec![0.5; model.d()];
    let _ = model.eval_max_rule(&query).expect("finite queries evaluate");
});
