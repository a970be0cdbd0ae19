#![no_main]
use libfuzzer_sys::fuzz_target;
use sl2c::symalg::AFactorProduct;

fuzz_target!(|data: &str| {
    if let Ok(p) = AFactorProduct::from_json(data) {
        let c = p.canonicalize();
        assert!(c.canonical_eq(&p));
        let back = AFactorProduct::from_json(&c.to_canonical_json()).unwrap();
        assert!(back.canonical_eq(&c));
        let _ = p.inverse().times(&p).canonicalize();
    }
});
