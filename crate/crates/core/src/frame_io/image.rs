use crate::error::{ensure, Result};

/// `height × width × channels` image, interleaved row-major, values nominally in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        ensure!(
            data.len() == height * width * channels,
            Dimension,
            "{}×{}×{} image needs {} values, got {}",
            height,
            width,
            channels,
            height * width * channels,
            data.len()
        );
        Ok(Self { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    pub fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self { height, width, channels, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.dims() == other.dims()
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        ensure!(
            top + height <= self.height && left + width <= self.width,
            Dimension,
            "crop {}×{} at ({}, {}) exceeds {}×{}",
            height,
            width,
            top,
            left,
            self.height,
            self.width
        );
        Ok(Image::from_fn(height, width, self.channels, |y, x, c| self.get(top + y, left + x, c)))
    }

    pub fn mirror_horizontal(&self) -> Image {
        Image::from_fn(self.height, self.width, self.channels, |y, x, c| self.get(y, self.width - 1 - x, c))
    }

    pub fn clamp01(mut self) -> Image {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    /// ITU-R BT.601 luma of an RGB image; single-channel images are returned as is.
    pub fn to_luma(&self) -> Image {
        if self.channels != 3 {
            return self.clone();
        }
        let data = self
            .data
            .chunks(3)
            .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) as f32)
            .collect();
        Image { height: self.height, width: self.width, channels: 1, data }
    }
}

/// Reference frame plus its temporal neighbours, all of identical size.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Image>,
    reference: usize,
}

impl FrameSequence {
    pub fn new(frames: Vec<Image>, reference: usize) -> Result<Self> {
        ensure!(!frames.is_empty(), Argument, "empty frame sequence");
        ensure!(
            reference < frames.len(),
            Argument,
            "reference index {} out of {} frames",
            reference,
            frames.len()
        );
        let d = frames[0].dims();
        ensure!(
            d.2 == 1 || d.2 == 3,
            Dimension,
            "frames must have 1 or 3 channels, got {}",
            d.2
        );
        for (i, f) in frames.iter().enumerate() {
            ensure!(f.dims() == d, Dimension, "frame {} is {:?}, expected {:?}", i, f.dims(), d);
        }
        Ok(Self { frames, reference })
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Image> {
        self.frames
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn reference_frame(&self) -> &Image {
        &self.frames[self.reference]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.frames[0].dims()
    }

    pub fn map_frames(&self, f: impl Fn(&Image) -> Result<Image>) -> Result<FrameSequence> {
        FrameSequence::new(self.frames.iter().map(f).collect::<Result<_>>()?, self.reference)
    }
}

/// Backward optical flow from a reference frame to a supporting frame: the
/// supporting frame is sampled at `(x + u, y + v)`, in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        ensure!(
            u.len() == height * width && v.len() == height * width,
            Dimension,
            "{}×{} flow needs {} values per component",
            height,
            width,
            height * width
        );
        ensure!(
            u.iter().chain(&v).all(|x| x.is_finite()),
            Numerical,
            "flow contains non-finite values"
        );
        Ok(Self { height, width, u, v })
    }

    pub fn constant(height: usize, width: usize, u: f32, v: f32) -> Self {
        Self { height, width, u: vec![u; height * width], v: vec![v; height * width] }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::constant(height, width, 0.0, 0.0)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<FlowField> {
        ensure!(
            top + height <= self.height && left + width <= self.width,
            Dimension,
            "flow crop exceeds {}×{}",
            self.height,
            self.width
        );
        let mut u = Vec::with_capacity(height * width);
        let mut v = Vec::with_capacity(height * width);
        for y in top..top + height {
            let row = y * self.width;
            u.extend_from_slice(&self.u[row + left..row + left + width]);
            v.extend_from_slice(&self.v[row + left..row + left + width]);
        }
        Ok(FlowField { height, width, u, v })
    }

    /// Adds `(du, dv)` to every vector.
    pub fn offset(&self, du: f32, dv: f32) -> FlowField {
        FlowField {
            height: self.height,
            width: self.width,
            u: self.u.iter().map(|x| x + du).collect(),
            v: self.v.iter().map(|x| x + dv).collect(),
        }
    }

    pub fn map_vectors(&self, mut f: impl FnMut(f32, f32) -> (f32, f32)) -> FlowField {
        let (u, v) = self.u.iter().zip(&self.v).map(|(&a, &b)| f(a, b)).unzip();
        FlowField { height: self.height, width: self.width, u, v }
    }
}
