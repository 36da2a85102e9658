//! Counter-based random numbers (Philox4x32-10).
//!
//! Every draw is a pure function of `(seed, stream tag, chunk, index, draw
//! number)`, so a simulation split into chunks produces the same numbers no
//! matter how the chunks are scheduled across threads.

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = (a as u64) * (b as u64);
    ((p >> 32) as u32, p as u32)
}

/// The Philox4x32 bijection with 10 rounds.
#[derive(Clone, Copy, Debug)]
pub struct Philox4x32 {
    key: [u32; 2],
}

impl Philox4x32 {
    pub fn new(key: u64) -> Self {
        Self { key: [key as u32, (key >> 32) as u32] }
    }

    pub fn from_words(key: [u32; 2]) -> Self {
        Self { key }
    }

    #[inline]
    pub fn block(&self, ctr: [u32; 4]) -> [u32; 4] {
        let mut c = ctr;
        let mut k = self.key;
        for round in 0..10 {
            if round > 0 {
                k[0] = k[0].wrapping_add(W0);
                k[1] = k[1].wrapping_add(W1);
            }
            let (hi0, lo0) = mulhilo(M0, c[0]);
            let (hi1, lo1) = mulhilo(M1, c[2]);
            c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
        }
        c
    }
}

/// Independent stream families. The tag is folded into the key so that, for
/// example, Brownian-bridge uniforms never alias the path normals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Terminal,
    PathNormals,
    BridgeUniforms,
    Extension,
    Lattice,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Terminal => 0x7465_726d_696e_616c,
            Stream::PathNormals => 0x7061_7468_6e6f_726d,
            Stream::BridgeUniforms => 0x6272_6964_6765_7531,
            Stream::Extension => 0x6578_7465_6e73_696f,
            Stream::Lattice => 0x6c61_7474_6963_6531,
        }
    }
}

/// One lane of draws: a fixed `(seed, stream, chunk, index)` with a running
/// block counter.
#[derive(Clone, Debug)]
pub struct Lane {
    gen: Philox4x32,
    ctr: [u32; 4],
    buf: [u32; 4],
    pos: usize,
    spare: Option<f64>,
}

impl Lane {
    pub fn new(seed: u64, stream: Stream, chunk: u64, index: u32) -> Self {
        Self {
            gen: Philox4x32::new(seed ^ stream.tag()),
            ctr: [0, index, chunk as u32, (chunk >> 32) as u32],
            buf: [0; 4],
            pos: 4,
            spare: None,
        }
    }

    #[inline]
    pub fn next_u32(&mut self) -> u32 {
        if self.pos == 4 {
            self.buf = self.gen.block(self.ctr);
            self.ctr[0] = self.ctr[0].wrapping_add(1);
            self.pos = 0;
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let lo = self.next_u32() as u64;
        let hi = self.next_u32() as u64;
        (hi << 32) | lo
    }

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by Box–Muller; draws come in pairs.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}
