use crate::{Error, Result};

/// One RGB image with 8-bit channels, pixels interleaved row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation("frame dimensions must be positive"));
        }
        if data.len() != 3 * width * height {
            return Err(Error::validation(format!(
                "{width}x{height} frame needs {} bytes, got {}",
                3 * width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Frame filled with one color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(3 * width * height).collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Interleaved RGB payload.
    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// Encode as binary PPM: `P6\n<w> <h>\n255\n` followed by the payload.
pub fn encode_ppm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.data);
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    source: &'a str,
}

impl Header<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(self.source, format!("byte {}", self.pos), message)
    }

    /// Skip whitespace and `#` comments.
    fn skip_blank(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_blank();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(self.source, format!("byte {start}"), format!("{what} out of range")))
    }
}

/// Decode a binary PPM (P6, maxval 255). `source` names the input in errors.
pub fn parse_ppm(bytes: &[u8], source: &str) -> Result<Frame> {
    let mut h = Header {
        bytes,
        pos: 0,
        source,
    };
    if !bytes.starts_with(b"P6") {
        return Err(h.err("missing P6 magic number"));
    }
    h.pos = 2;
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(h.err(format!("zero image dimension {width}x{height}")));
    }
    if maxval != 255 {
        return Err(h.err(format!("maxval {maxval} unsupported, only 255")));
    }
    match bytes.get(h.pos) {
        Some(c) if c.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(h.err("expected a single whitespace byte after maxval")),
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| h.err("image dimensions overflow"))?;
    let available = bytes.len() - h.pos;
    if available < need {
        return Err(Error::parse(
            source,
            format!("byte {}", bytes.len()),
            format!("truncated pixel data: expected {need} bytes, found {available}"),
        ));
    }
    if available > need {
        return Err(Error::parse(
            source,
            format!("byte {}", h.pos + need),
            format!("{} trailing bytes after pixel data", available - need),
        ));
    }
    Frame::new(width, height, bytes[h.pos..].to_vec())
}
