#![no_main]

//! Input layout: u32 little-endian manifest length, the manifest, then the
//! array payloads back to back in manifest order, each prefixed by its u32 length.

use libfuzzer_sys::fuzz_target;
use longdpm::io::{decode_container, encode_container};

fn split(data: &[u8]) -> Option<(&[u8], &[u8])> {
    let len = u32::from_le_bytes(data.get(..4)?.try_into().ok()?) as usize;
    let rest = &data[4..];
    (len <= rest.len()).then(|| rest.split_at(len))
}

fuzz_target!(|data: &[u8]| {
    let Some((manifest, mut rest)) = split(data) else { return };
    let decoded = decode_container(manifest, |_| {
        let (array, tail) = split(rest).unwrap_or((rest, &[]));
        rest = tail;
        Ok(array)
    });
    if let Ok(c) = decoded {
        // whatever decodes must encode and decode to the same container
        let (m, files) = encode_container(&c.chunk, c.object_ids.as_deref()).unwrap();
        let mut files = files.iter();
        let again = decode_container(&m, |_| Ok(files.next().unwrap().1.as_slice())).unwrap();
        assert_eq!(again.chunk, c.chunk);
        assert_eq!(again.object_ids, c.object_ids);
    }
});
