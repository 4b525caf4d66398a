#![no_main]

use codedlf::io::{format_mask_text, parse_mask_text};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(tile) = parse_mask_text(text) {
        assert_eq!(parse_mask_text(&format_mask_text(&tile)).unwrap(), tile);
    }
});
