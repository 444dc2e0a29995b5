use crate::error::{Error, Result};

/// Smallest accepted image side, in pixels.
pub const MIN_SIDE: usize = 8;

/// Planar float image with `C` channels, values in `[0, 1]`.
///
/// Storage is channel-major (`c * H * W + y * W + x`), which is also the layout the
/// networks consume, so conversion to tensors is a copy.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<const C: usize> {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

/// Three-channel RGB scene image.
pub type ImageRgb = Image<3>;

/// Four-channel text layer; channel 3 is alpha.
pub type TextLayerRgba = Image<4>;

impl<const C: usize> Image<C> {
    pub const CHANNELS: usize = C;

    /// Image filled with a constant value on every channel.
    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::check_dims(width, height)?;
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Config(format!("fill value {value} outside [0,1]")));
        }
        Ok(Self {
            width,
            height,
            data: vec![value; C * width * height],
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, 0.0)
    }

    /// Wraps planar data, validating length, size and value range.
    pub fn from_planes(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        Self::check_dims(width, height)?;
        if data.len() != C * width * height {
            return Err(Error::Dimension(format!(
                "expected {} values for {C}x{height}x{width}, got {}",
                C * width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("pixel value {v} outside [0,1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Wraps planar data, clamping every value into `[0, 1]` (NaN becomes 0).
    pub fn from_planes_clamped(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
        for v in data.iter_mut() {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::from_planes(width, height, data)
    }

    fn check_dims(width: usize, height: usize) -> Result<()> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::Dimension(format!(
                "image {width}x{height} smaller than minimum side {MIN_SIDE}"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn same_dims<const D: usize>(&self, other: &Image<D>) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.pixel_count();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Sets one value, clamped into `[0, 1]`.
    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f32) {
        let idx = (c * self.height + y) * self.width + x;
        self.data[idx] = v.clamp(0.0, 1.0);
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; C] {
        std::array::from_fn(|c| self.get(c, x, y))
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, px: [f32; C]) {
        for (c, v) in px.into_iter().enumerate() {
            self.set(c, x, y, v);
        }
    }

    /// Copies a rectangular window into a new image.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::Dimension(format!(
                "crop ({x},{y},{w},{h}) exceeds {}x{}",
                self.width, self.height
            )));
        }
        Self::check_dims(w, h)?;
        let mut data = Vec::with_capacity(C * w * h);
        for c in 0..C {
            for yy in y..y + h {
                let row = (c * self.height + yy) * self.width;
                data.extend_from_slice(&self.data[row + x..row + x + w]);
            }
        }
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }
}

impl TextLayerRgba {
    #[inline]
    pub fn alpha(&self, x: usize, y: usize) -> f32 {
        self.get(3, x, y)
    }

    /// Number of pixels with nonzero alpha.
    pub fn alpha_count(&self) -> usize {
        self.plane(3).iter().filter(|&&a| a > 0.0).count()
    }

    /// True when every alpha value is exactly 0 or 1.
    pub fn is_binary_alpha(&self) -> bool {
        self.plane(3).iter().all(|&a| a == 0.0 || a == 1.0)
    }
}
