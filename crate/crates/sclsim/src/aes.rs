//! AES-128 with a byte-level operation trace.
//!
//! The cipher is the standard table-based implementation; what makes it a
//! device model is that every S-box, AddRoundKey and MixColumns output byte
//! is reported as an [`OpEvent`](crate::dut::OpEvent) through a tracer
//! callback, in a schedule that is independent of plaintext and key.

pub const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

const RCON: [u8; 10] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36];

fn xtime(b: u8) -> u8 {
    (b << 1) ^ if b & 0x80 != 0 { 0x1b } else { 0x00 }
}

/// Expand a 128-bit key into the 11 round keys.
pub fn expand_key(key: &[u8; 16]) -> [[u8; 16]; 11] {
    let mut w = [[0u8; 4]; 44];
    for (i, chunk) in key.chunks_exact(4).enumerate() {
        w[i].copy_from_slice(chunk);
    }
    for i in 4..44 {
        let mut t = w[i - 1];
        if i % 4 == 0 {
            t.rotate_left(1);
            for b in t.iter_mut() {
                *b = SBOX[*b as usize];
            }
            t[0] ^= RCON[i / 4 - 1];
        }
        for j in 0..4 {
            w[i][j] = w[i - 4][j] ^ t[j];
        }
    }
    let mut rk = [[0u8; 16]; 11];
    for (r, round_key) in rk.iter_mut().enumerate() {
        for c in 0..4 {
            round_key[4 * c..4 * c + 4].copy_from_slice(&w[4 * r + c]);
        }
    }
    rk
}

/// Row `r` of the state lives at indices `r, r+4, r+8, r+12` and rotates left by `r`.
fn shift_rows(state: &mut [u8; 16]) {
    let s = *state;
    for r in 1..4 {
        for c in 0..4 {
            state[4 * c + r] = s[4 * ((c + r) % 4) + r];
        }
    }
}

fn mix_columns(state: &[u8; 16]) -> [u8; 16] {
    let mut out = [0u8; 16];
    for c in 0..4 {
        let a = &state[4 * c..4 * c + 4];
        out[4 * c] = xtime(a[0]) ^ xtime(a[1]) ^ a[1] ^ a[2] ^ a[3];
        out[4 * c + 1] = a[0] ^ xtime(a[1]) ^ xtime(a[2]) ^ a[2] ^ a[3];
        out[4 * c + 2] = a[0] ^ a[1] ^ xtime(a[2]) ^ xtime(a[3]) ^ a[3];
        out[4 * c + 3] = xtime(a[0]) ^ a[0] ^ a[1] ^ a[2] ^ xtime(a[3]);
    }
    out
}

/// One byte-level operation stage reported to the tracer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    SboxOut,
    AddRoundKeyOut,
    MixColumnsOut,
}

/// Encrypt one block, reporting every byte-level output through `trace`.
///
/// The callback receives `(stage, byte_index, value, prev_value)` where
/// `prev_value` is the byte the operation overwrote. The callback invocation
/// sequence (stage, byte index) is a fixed schedule: 16 AddRoundKey bytes for
/// round 0, then per middle round 16 S-box + 16 MixColumns + 16 AddRoundKey
/// bytes, then 16 S-box + 16 AddRoundKey bytes for the last round.
pub fn encrypt_traced<F>(plaintext: &[u8; 16], key: &[u8; 16], mut trace: F) -> [u8; 16]
where
    F: FnMut(Stage, usize, u8, u8),
{
    let rk = expand_key(key);
    let mut st = *plaintext;

    for i in 0..16 {
        let prev = st[i];
        st[i] ^= rk[0][i];
        trace(Stage::AddRoundKeyOut, i, st[i], prev);
    }
    for round in 1..=9 {
        for i in 0..16 {
            let prev = st[i];
            st[i] = SBOX[st[i] as usize];
            trace(Stage::SboxOut, i, st[i], prev);
        }
        shift_rows(&mut st);
        let mixed = mix_columns(&st);
        for i in 0..16 {
            trace(Stage::MixColumnsOut, i, mixed[i], st[i]);
        }
        st = mixed;
        for i in 0..16 {
            let prev = st[i];
            st[i] ^= rk[round][i];
            trace(Stage::AddRoundKeyOut, i, st[i], prev);
        }
    }
    for i in 0..16 {
        let prev = st[i];
        st[i] = SBOX[st[i] as usize];
        trace(Stage::SboxOut, i, st[i], prev);
    }
    shift_rows(&mut st);
    for i in 0..16 {
        let prev = st[i];
        st[i] ^= rk[10][i];
        trace(Stage::AddRoundKeyOut, i, st[i], prev);
    }
    st
}

/// Number of traced byte operations per block: 16 + 9*48 + 32.
pub const EVENTS_PER_BLOCK: usize = 480;
