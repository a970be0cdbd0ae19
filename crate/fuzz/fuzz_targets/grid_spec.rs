#![no_main]
use libfuzzer_sys::fuzz_target;
use sl2c_cli::{GridSpec, SWEEPS};

// first byte: bit 0 picks the identity, bit 1 picks TOML over JSON
fuzz_target!(|data: &[u8]| {
    let Some((&sel, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let identity = SWEEPS[(sel & 1) as usize];
    if let Ok(spec) = GridSpec::parse(identity, text, sel & 2 != 0) {
        let values = match &spec {
            GridSpec::TRegularization(g) => &g.values,
            GridSpec::GustafsonNMax(g) => &g.values,
        };
        assert!(!values.is_empty() && values.iter().all(|v| *v > 0.0 && v.is_finite()));
    }
});
