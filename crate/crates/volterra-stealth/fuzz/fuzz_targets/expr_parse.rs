//! Fuzzes the coefficient-expression parser: arbitrary input must either be
//! rejected with an error or produce an expression that evaluates and
//! serde-round-trips without panicking.

#![no_main]

use libfuzzer_sys::fuzz_target;
use volterra_stealth::expr::CoefExpr;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok(expr) = CoefExpr::parse(src) {
        // Evaluation may produce ±inf (e.g. t^64 at large t) but must not
        // panic; finiteness is enforced later, per config, on [0, t_end].
        for t in [0.0, 1.0, -2.5, 1e6, f64::MAX] {
            let _ = expr.eval(t);
        }
        // Accepted expressions serialize to a form that re-parses to the
        // same tree.
        let json = serde_json::to_string(&expr).expect("serializes");
        let back: CoefExpr = serde_json::from_str(&json).expect("serialized form re-parses");
        assert_eq!(back.ast(), expr.ast(), "serde round-trip preserves the tree");
    }
});
