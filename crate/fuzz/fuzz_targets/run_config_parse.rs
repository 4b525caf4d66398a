#![no_main]

use codedlf_cli::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = RunConfig::from_toml(text) {
        let _ = cfg.validate();
        let _ = RunConfig::from_toml(&cfg.to_toml().unwrap());
    }
});
