use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextureRole {
    NeutralStatic,
    Expression,
    Compress,
    Stretch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextureChannel {
    Albedo,
    Specular,
    Displacement,
}

impl TextureChannel {
    pub const ALL: [TextureChannel; 3] = [
        TextureChannel::Albedo,
        TextureChannel::Specular,
        TextureChannel::Displacement,
    ];

    pub fn components(self) -> usize {
        match self {
            TextureChannel::Albedo => 3,
            _ => 1,
        }
    }

    /// Storable value range; displacement is unbounded.
    pub fn range(self) -> Option<(f32, f32)> {
        match self {
            TextureChannel::Displacement => None,
            _ => Some((0.0, 1.0)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TextureChannel::Albedo => "albedo",
            TextureChannel::Specular => "specular",
            TextureChannel::Displacement => "displacement",
        }
    }
}

/// Low- and high-frequency parts of a displacement map. Kept in f64 so that
/// `low + high` gives back the original f32 values exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementBands {
    pub width: usize,
    pub height: usize,
    pub sigma: f64,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl DisplacementBands {
    pub fn reconstruct(&self) -> Raster {
        let data = self.low.iter().zip(&self.high).map(|(l, h)| (l + h) as f32).collect();
        Raster::from_data(self.width, self.height, 1, data).expect("band sizes are consistent")
    }

    pub fn low_raster(&self) -> Raster {
        Raster::from_data(self.width, self.height, 1, self.low.iter().map(|v| *v as f32).collect())
            .expect("band sizes are consistent")
    }

    /// Rounded to f32; add to [`Self::low_raster`] in f64 for exact recovery.
    pub fn high_raster(&self) -> Raster {
        Raster::from_data(self.width, self.height, 1, self.high.iter().map(|v| *v as f32).collect())
            .expect("band sizes are consistent")
    }
}

/// Albedo, specular and displacement rasters of one texture state.
#[derive(Debug, Clone, PartialEq)]
pub struct TexturePack {
    pub role: TextureRole,
    width: usize,
    height: usize,
    albedo: Option<Raster>,
    specular: Option<Raster>,
    displacement: Option<Raster>,
    bands: Option<DisplacementBands>,
}

impl TexturePack {
    pub fn new(
        role: TextureRole,
        albedo: Option<Raster>,
        specular: Option<Raster>,
        displacement: Option<Raster>,
    ) -> Result<Self> {
        let present: Vec<(TextureChannel, &Raster)> = [
            (TextureChannel::Albedo, albedo.as_ref()),
            (TextureChannel::Specular, specular.as_ref()),
            (TextureChannel::Displacement, displacement.as_ref()),
        ]
        .into_iter()
        .filter_map(|(c, r)| r.map(|r| (c, r)))
        .collect();
        let (_, first) = present
            .first()
            .ok_or_else(|| Error::ChannelMismatch("texture pack has no channels".into()))?;
        let (width, height) = (first.width(), first.height());
        for (c, r) in &present {
            if r.channels() != c.components() {
                return Err(Error::ChannelMismatch(format!(
                    "{} needs {} components, got {}",
                    c.name(),
                    c.components(),
                    r.channels()
                )));
            }
            if r.width() != width || r.height() != height {
                return Err(Error::dim(
                    format!("{} resolution", c.name()),
                    width * height,
                    r.width() * r.height(),
                ));
            }
        }
        Ok(TexturePack {
            role,
            width,
            height,
            albedo,
            specular,
            displacement,
            bands: None,
        })
    }

    /// Attaches a low/high split; the displacement channel becomes their sum.
    pub fn with_bands(mut self, bands: DisplacementBands) -> Result<Self> {
        if bands.width != self.width || bands.height != self.height {
            return Err(Error::dim("displacement bands", self.width * self.height, bands.width * bands.height));
        }
        self.displacement = Some(bands.reconstruct());
        self.bands = Some(bands);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channel(&self, c: TextureChannel) -> Option<&Raster> {
        match c {
            TextureChannel::Albedo => self.albedo.as_ref(),
            TextureChannel::Specular => self.specular.as_ref(),
            TextureChannel::Displacement => self.displacement.as_ref(),
        }
    }

    pub fn bands(&self) -> Option<&DisplacementBands> {
        self.bands.as_ref()
    }

    pub fn channels(&self) -> Vec<TextureChannel> {
        TextureChannel::ALL
            .into_iter()
            .filter(|c| self.channel(*c).is_some())
            .collect()
    }

    pub(crate) fn ensure_compatible(&self, other: &TexturePack, what: &str) -> Result<()> {
        if self.channels() != other.channels() {
            return Err(Error::ChannelMismatch(format!(
                "{what}: channels {:?} vs {:?}",
                other.channels(),
                self.channels()
            )));
        }
        if self.width != other.width || self.height != other.height {
            return Err(Error::dim(format!("{what} resolution"), self.width * self.height, other.width * other.height));
        }
        Ok(())
    }

    pub(crate) fn from_channels(role: TextureRole, width: usize, height: usize, planes: Vec<(TextureChannel, Raster)>) -> Self {
        let mut pack = TexturePack {
            role,
            width,
            height,
            albedo: None,
            specular: None,
            displacement: None,
            bands: None,
        };
        for (c, r) in planes {
            match c {
                TextureChannel::Albedo => pack.albedo = Some(r),
                TextureChannel::Specular => pack.specular = Some(r),
                TextureChannel::Displacement => pack.displacement = Some(r),
            }
        }
        pack
    }
}

/// Index into `0..n` with symmetric reflection at both ends.
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Separable Gaussian blur of every channel with reflected borders, radius
/// `ceil(4 sigma)`, weights summing to one. Returns f64 values.
pub fn gaussian_blur(raster: &Raster, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Precondition(format!("sigma must be positive, got {sigma}")));
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    let kernel: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let (w, h, ch) = (raster.width(), raster.height(), raster.channels());
    let src = raster.data();

    let mut horiz = vec![0.0f64; w * h * ch];
    for j in 0..h {
        for i in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (t, k) in kernel.iter().enumerate() {
                    let x = reflect(i as isize + t as isize - radius, w);
                    acc += k * src[(j * w + x) * ch + c] as f64;
                }
                horiz[(j * w + i) * ch + c] = acc;
            }
        }
    }
    let mut out = vec![0.0f64; w * h * ch];
    for j in 0..h {
        for i in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (t, k) in kernel.iter().enumerate() {
                    let y = reflect(j as isize + t as isize - radius, h);
                    acc += k * horiz[(y * w + i) * ch + c];
                }
                out[(j * w + i) * ch + c] = acc;
            }
        }
    }
    Ok(out)
}

/// Low band is the Gaussian blur (rounded to f32 values), high band is the
/// f64 remainder.
pub fn split_displacement(displacement: &Raster, sigma: f64) -> Result<DisplacementBands> {
    if displacement.channels() != 1 {
        return Err(Error::ChannelMismatch(format!(
            "displacement must be single-channel, got {}",
            displacement.channels()
        )));
    }
    let low: Vec<f64> = gaussian_blur(displacement, sigma)?
        .into_iter()
        .map(|v| v as f32 as f64)
        .collect();
    let high = displacement
        .data()
        .iter()
        .zip(&low)
        .map(|(d, l)| *d as f64 - l)
        .collect();
    Ok(DisplacementBands {
        width: displacement.width(),
        height: displacement.height(),
        sigma,
        low,
        high,
    })
}
