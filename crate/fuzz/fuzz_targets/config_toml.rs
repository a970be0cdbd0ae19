#![no_main]
use libfuzzer_sys::fuzz_target;
use sl2c_cli::Config;

fuzz_target!(|data: &str| {
    if let Ok(c) = Config::from_toml(data) {
        assert!(c.validate().is_ok());
        let _ = c.effective_budget(None);
    }
});
