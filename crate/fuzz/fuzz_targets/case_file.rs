#![no_main]
use libfuzzer_sys::fuzz_target;
use sl2c::cases::{select, CaseFile, RunSettings, Suite};

fuzz_target!(|data: &str| {
    if let Ok(f) = CaseFile::from_json(data) {
        let cases = select(&f.cases, &Suite::ALL, None, None, true);
        let s = RunSettings::default();
        for c in cases.iter().take(64) {
            let _ = s.target_for(c);
        }
        let back = serde_json::to_string(&f).unwrap();
        assert_eq!(CaseFile::from_json(&back).unwrap(), f);
    }
});
