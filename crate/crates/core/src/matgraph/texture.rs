use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::imageio::{read_ppm, ImageError, Rgb8Image};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WrapMode {
    #[default]
    Repeat,
    Clamp,
}

/// An RGB texture with texel values in linear [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Texture {
    pub width: usize,
    pub height: usize,
    texels: Vec<[f32; 3]>,
}

impl Texture {
    pub fn new(width: usize, height: usize, texels: Vec<[f32; 3]>) -> Texture {
        assert!(width > 0 && height > 0, "empty texture");
        assert_eq!(texels.len(), width * height);
        Texture {
            width,
            height,
            texels,
        }
    }

    pub fn from_rgb8(img: &Rgb8Image) -> Texture {
        let texels = img
            .data
            .chunks_exact(3)
            .map(|c| [c[0] as f32 / 255.0, c[1] as f32 / 255.0, c[2] as f32 / 255.0])
            .collect();
        Texture::new(img.width, img.height, texels)
    }

    #[inline]
    fn texel(&self, x: i64, y: i64, wrap: WrapMode) -> [f32; 3] {
        let (w, h) = (self.width as i64, self.height as i64);
        let (x, y) = match wrap {
            WrapMode::Repeat => (x.rem_euclid(w), y.rem_euclid(h)),
            WrapMode::Clamp => (x.clamp(0, w - 1), y.clamp(0, h - 1)),
        };
        self.texels[(y * w + x) as usize]
    }

    /// Bilinear lookup; texel centers sit at `(i + 0.5) / size`. `v = 0` is
    /// the top row of the image.
    pub fn sample(&self, u: f32, v: f32, wrap: WrapMode) -> [f32; 3] {
        let (u, v) = match wrap {
            WrapMode::Repeat => (u - u.floor(), v - v.floor()),
            WrapMode::Clamp => (u.clamp(0.0, 1.0), v.clamp(0.0, 1.0)),
        };
        let x = u * self.width as f32 - 0.5;
        let y = v * self.height as f32 - 0.5;
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let t00 = self.texel(x0, y0, wrap);
        let t10 = self.texel(x0 + 1, y0, wrap);
        let t01 = self.texel(x0, y0 + 1, wrap);
        let t11 = self.texel(x0 + 1, y0 + 1, wrap);
        let mut out = [0.0; 3];
        for c in 0..3 {
            let top = t00[c] + (t10[c] - t00[c]) * fx;
            let bottom = t01[c] + (t11[c] - t01[c]) * fx;
            out[c] = top + (bottom - top) * fy;
        }
        out
    }
}

/// A texture bound to the name it was referenced by in a material file.
#[derive(Clone, Debug)]
pub struct TextureRef {
    pub name: String,
    pub texture: Arc<Texture>,
}

impl PartialEq for TextureRef {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

/// Resolves texture names found in material documents.
pub trait TextureSource {
    fn load(&self, name: &str) -> Result<Arc<Texture>, ImageError>;
}

/// Loads binary PPM files relative to a root directory, sharing repeats.
pub struct DirTextures {
    root: PathBuf,
    loaded: Mutex<HashMap<String, Arc<Texture>>>,
}

impl DirTextures {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirTextures {
            root: root.into(),
            loaded: Mutex::new(HashMap::new()),
        }
    }
}

impl TextureSource for DirTextures {
    fn load(&self, name: &str) -> Result<Arc<Texture>, ImageError> {
        if let Some(t) = self.loaded.lock().unwrap().get(name) {
            return Ok(t.clone());
        }
        let file = File::open(self.root.join(name))?;
        let img = read_ppm(&mut BufReader::new(file))?;
        let tex = Arc::new(Texture::from_rgb8(&img));
        self.loaded
            .lock()
            .unwrap()
            .insert(name.to_string(), tex.clone());
        Ok(tex)
    }
}

/// In-memory textures, used by generators and tests.
#[derive(Default, Clone)]
pub struct MemoryTextures(pub HashMap<String, Arc<Texture>>);

impl MemoryTextures {
    pub fn insert(&mut self, name: &str, tex: Texture) -> TextureRef {
        let texture = Arc::new(tex);
        self.0.insert(name.to_string(), texture.clone());
        TextureRef {
            name: name.to_string(),
            texture,
        }
    }
}

impl TextureSource for MemoryTextures {
    fn load(&self, name: &str) -> Result<Arc<Texture>, ImageError> {
        self.0.get(name).cloned().ok_or_else(|| {
            ImageError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("no texture named {name:?}"),
            ))
        })
    }
}
