#![no_main]

use codedlf::io::{decode_pfm, encode_pfm};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(pfm) = decode_pfm(data) {
        let again = decode_pfm(&encode_pfm(&pfm.data).unwrap()).unwrap();
        assert_eq!(again.data.dim(), pfm.data.dim());
    }
});
