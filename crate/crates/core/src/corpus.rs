//! Procedural aligned (RGB image, height map) pairs.
//!
//! Five material families stand in for fabric weaves, brushed/striped
//! surfaces, rough rock, grainy composites and smooth plastics. Every field
//! is a pure function of its recipe, including the seed, so corpora rebuild
//! bit-identically.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::heightmap::{HeightMap, ImageRgb};
use crate::rng::{lattice_hash, mix, Rng};
use crate::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaterialKind {
    Weave,
    Stripes,
    FractalRock,
    GrainBlobs,
    SmoothPlastic,
}

impl MaterialKind {
    pub fn all() -> [MaterialKind; 5] {
        [
            MaterialKind::Weave,
            MaterialKind::Stripes,
            MaterialKind::FractalRock,
            MaterialKind::GrainBlobs,
            MaterialKind::SmoothPlastic,
        ]
    }

    pub fn category_name(self) -> &'static str {
        match self {
            MaterialKind::Weave => "fabrics",
            MaterialKind::Stripes => "metals",
            MaterialKind::FractalRock => "rigid",
            MaterialKind::GrainBlobs => "plants",
            MaterialKind::SmoothPlastic => "plastics",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialRecipe {
    pub kind: MaterialKind,
    /// Spatial period (weave/stripes) or feature scale (noise kinds), pixels.
    pub feature_scale: f64,
    /// Orientation of anisotropic patterns, radians.
    pub angle: f64,
    /// Relief amplitude in [0, 1]; 0 yields a constant field.
    pub amplitude: f64,
    pub albedo: [f32; 3],
    pub seed: u64,
}

impl MaterialRecipe {
    /// Same recipe, new seed — used for per-pair patch variation.
    pub fn with_seed(&self, seed: u64) -> Self {
        MaterialRecipe { seed, ..self.clone() }
    }
}

/// Bilinear value noise on a hashed integer lattice, output in [0, 1).
pub fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let x0 = libm::floor(x);
    let y0 = libm::floor(y);
    let fx = x - x0;
    let fy = y - y0;
    let (xi, yi) = (x0 as i64, y0 as i64);
    let v00 = lattice_hash(xi, yi, seed);
    let v10 = lattice_hash(xi + 1, yi, seed);
    let v01 = lattice_hash(xi, yi + 1, seed);
    let v11 = lattice_hash(xi + 1, yi + 1, seed);
    let top = v00 + (v10 - v00) * fx;
    let bot = v01 + (v11 - v01) * fx;
    top + (bot - top) * fy
}

const TAU: f64 = 2.0 * core::f64::consts::PI;

/// Fraction of the pattern budget spent on broadband micro-roughness.
///
/// Real captured height maps carry a sensor/micro-geometry noise floor; an
/// analytically clean sinusoid has off-peak spectral bins at the log floor,
/// which would turn the log-PSD metric into a measure of sampler noise
/// instead of texture structure. Scaled by the recipe amplitude so a zero
/// amplitude still yields a constant field.
pub const MICRO_ROUGHNESS: f64 = 0.04;

pub fn gen_height_field(recipe: &MaterialRecipe, width: usize, height: usize) -> Result<HeightMap> {
    if width < 16 || height < 16 {
        return Err(contract(format_args!("height field {width}x{height} below 16")));
    }
    if !(0.0..=1.0).contains(&recipe.amplitude) {
        return Err(contract(format_args!("amplitude {} outside [0,1]", recipe.amplitude)));
    }
    if recipe.feature_scale <= 0.0 {
        return Err(contract(format_args!("feature scale {} must be positive", recipe.feature_scale)));
    }
    let mut rng = Rng::stream(recipe.seed, 0x6669656C64);
    let amp = recipe.amplitude;

    // Every kind produces a structural pattern in [-1, 1]; the field is
    // 0.5 + 0.5 * amp * (0.96 * pattern + 0.04 * micro), so values stay in
    // [0, 1] and amplitude 0 collapses to a constant.
    let mut pattern = vec![0.0f64; width * height];
    match recipe.kind {
        MaterialKind::Weave => {
            // product of two phase-shifted sinusoids
            let phase_x = rng.uniform_in(0.0, TAU);
            let phase_y = rng.uniform_in(0.0, TAU);
            let f = TAU / recipe.feature_scale;
            for y in 0..height {
                let sy = libm::sin(f * y as f64 + phase_y);
                for x in 0..width {
                    let sx = libm::sin(f * x as f64 + phase_x);
                    pattern[y * width + x] = sx * sy;
                }
            }
        }
        MaterialKind::Stripes => {
            // 1D sinusoid rotated by the anisotropy angle
            let phase = rng.uniform_in(0.0, TAU);
            let f = TAU / recipe.feature_scale;
            let (ca, sa) = (libm::cos(recipe.angle), libm::sin(recipe.angle));
            for y in 0..height {
                for x in 0..width {
                    let u = x as f64 * ca + y as f64 * sa;
                    pattern[y * width + x] = libm::sin(f * u + phase);
                }
            }
        }
        MaterialKind::FractalRock => {
            // 4-octave value noise, per-octave gain 0.5
            let octave_seeds: [u64; 4] = core::array::from_fn(|i| mix(recipe.seed ^ (i as u64 + 1)));
            let total: f64 = 1.0 + 0.5 + 0.25 + 0.125;
            for y in 0..height {
                for x in 0..width {
                    let mut n = 0.0;
                    let mut gain = 1.0;
                    for (o, &os) in octave_seeds.iter().enumerate() {
                        let s = (1 << o) as f64 / recipe.feature_scale;
                        n += gain * value_noise(x as f64 * s, y as f64 * s, os);
                        gain *= 0.5;
                    }
                    pattern[y * width + x] = n / total * 2.0 - 1.0;
                }
            }
        }
        MaterialKind::GrainBlobs => {
            // Poisson-ish point process: one candidate per cell of a grid at
            // the feature scale, smoothed by a cosine bump, soft-thresholded.
            let cell = recipe.feature_scale.max(2.0);
            let radius = cell * 0.75;
            let cells_x = (width as f64 / cell) as i64 + 2;
            let cells_y = (height as f64 / cell) as i64 + 2;
            let mut points = Vec::new();
            for cy in -1..cells_y {
                for cx in -1..cells_x {
                    let h1 = lattice_hash(cx, cy, mix(recipe.seed ^ 0xB10B));
                    let h2 = lattice_hash(cx, cy, mix(recipe.seed ^ 0xB10C));
                    points.push((cx as f64 * cell + h1 * cell, cy as f64 * cell + h2 * cell));
                }
            }
            for y in 0..height {
                for x in 0..width {
                    let mut v: f64 = 0.0;
                    for &(px, py) in &points {
                        let d2 = (x as f64 - px) * (x as f64 - px) + (y as f64 - py) * (y as f64 - py);
                        if d2 < radius * radius {
                            let d = libm::sqrt(d2) / radius;
                            v += 0.5 * (1.0 + libm::cos(core::f64::consts::PI * d));
                        }
                    }
                    // soft threshold around 0.5 coverage
                    let t = smoothstep((v - 0.45) / 0.5);
                    pattern[y * width + x] = t * 2.0 - 1.0;
                }
            }
        }
        MaterialKind::SmoothPlastic => {
            // low-amplitude single-octave noise
            let os = mix(recipe.seed ^ 0x514D);
            for y in 0..height {
                for x in 0..width {
                    let n = value_noise(
                        x as f64 / recipe.feature_scale,
                        y as f64 / recipe.feature_scale,
                        os,
                    );
                    pattern[y * width + x] = n * 2.0 - 1.0;
                }
            }
        }
    }

    let micro_seed = mix(recipe.seed ^ 0x4D4943);
    let mut values = vec![0.0f32; width * height];
    for y in 0..height {
        for x in 0..width {
            let micro = lattice_hash(x as i64, y as i64, micro_seed) * 2.0 - 1.0;
            let s = (1.0 - MICRO_ROUGHNESS) * pattern[y * width + x] + MICRO_ROUGHNESS * micro;
            values[y * width + x] = (0.5 + 0.5 * amp * s) as f32;
        }
    }
    HeightMap::new(width, height, values)
}

fn smoothstep(x: f64) -> f64 {
    let t = x.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Height relief multiplier applied before computing shading normals.
pub const RELIEF_FACTOR: f64 = 4.0;

/// Default corpus light: oblique so shading depends on slope, not height.
pub fn default_light() -> [f64; 3] {
    [0.5, 0.3, libm::sqrt(0.66)]
}

/// Lambertian shading of the height field under a directional light.
///
/// Normals come from central differences of the relief-scaled height, so
/// luminance is a nonlinear function of slope — deliberately not an affine
/// remap of height.
pub fn shade_to_rgb(h: &HeightMap, light_dir: [f64; 3], albedo: [f32; 3]) -> Result<ImageRgb> {
    if light_dir[2] <= 0.0 {
        return Err(contract(format_args!("degenerate light z = {}", light_dir[2])));
    }
    let norm = libm::sqrt(light_dir.iter().map(|v| v * v).sum::<f64>());
    if norm <= 0.0 {
        return Err(contract("zero light vector"));
    }
    let l = [light_dir[0] / norm, light_dir[1] / norm, light_dir[2] / norm];
    let (w, hh) = (h.width, h.height);
    let mut data = vec![0.0f32; w * hh * 3];
    let sample = |x: isize, y: isize| -> f64 {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, hh as isize - 1) as usize;
        h.values[yc * w + xc] as f64 * RELIEF_FACTOR
    };
    for y in 0..hh {
        for x in 0..w {
            let gx = (sample(x as isize + 1, y as isize) - sample(x as isize - 1, y as isize)) / 2.0;
            let gy = (sample(x as isize, y as isize + 1) - sample(x as isize, y as isize - 1)) / 2.0;
            let inv = 1.0 / libm::sqrt(gx * gx + gy * gy + 1.0);
            let ndotl = ((-gx) * l[0] + (-gy) * l[1] + l[2]) * inv;
            let shade = ndotl.max(0.0);
            for c in 0..3 {
                data[(y * w + x) * 3 + c] = ((albedo[c] as f64) * shade).clamp(0.0, 1.0) as f32;
            }
        }
    }
    ImageRgb::new(w, hh, data)
}

/// One aligned visual/height pair with its provenance.
#[derive(Debug, Clone)]
pub struct PairedSample {
    pub id: String,
    pub category: String,
    pub material: String,
    pub image: ImageRgb,
    pub height: HeightMap,
}

/// Generate the k-th pair of a material: same recipe, per-pair seed.
pub fn gen_pair(
    recipe: &MaterialRecipe,
    category: &str,
    material: &str,
    pair_index: usize,
    width: usize,
    height: usize,
) -> Result<PairedSample> {
    let pair_recipe = recipe.with_seed(mix(recipe.seed ^ (pair_index as u64 + 1)));
    let hm = gen_height_field(&pair_recipe, width, height)?;
    let image = shade_to_rgb(&hm, default_light(), recipe.albedo)?;
    Ok(PairedSample {
        id: format!("{category}/{material}/pair_{pair_index:04}"),
        category: String::from(category),
        material: String::from(material),
        image,
        height: hm,
    })
}

/// One material per category — the five-recipe benchmark set.
pub fn default5(seed: u64) -> Vec<(String, String, MaterialRecipe)> {
    let kinds = MaterialKind::all();
    let scales = [8.0, 16.0, 6.0, 5.0, 9.0];
    let angles = [0.0, 0.6, 0.0, 0.0, 0.0];
    let amps = [0.8, 0.7, 0.9, 0.8, 0.15];
    let albedos: [[f32; 3]; 5] = [
        [0.82, 0.55, 0.35],
        [0.70, 0.72, 0.78],
        [0.55, 0.52, 0.48],
        [0.35, 0.62, 0.30],
        [0.85, 0.25, 0.25],
    ];
    kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            (
                String::from(kind.category_name()),
                format!("{}_00", kind.category_name()),
                MaterialRecipe {
                    kind,
                    feature_scale: scales[i],
                    angle: angles[i],
                    amplitude: amps[i],
                    albedo: albedos[i],
                    seed: mix(seed ^ (i as u64 + 0x100)),
                },
            )
        })
        .collect()
}

/// The two-class conditioning benchmark: weave period 8 vs stripes period 16.
pub fn two_class(seed: u64) -> Vec<(String, String, MaterialRecipe)> {
    vec![
        (
            String::from("fabrics"),
            String::from("weave8"),
            MaterialRecipe {
                kind: MaterialKind::Weave,
                feature_scale: 8.0,
                angle: 0.0,
                amplitude: 0.8,
                albedo: [0.85, 0.55, 0.30],
                seed: mix(seed ^ 0xA1),
            },
        ),
        (
            String::from("metals"),
            String::from("stripes16"),
            MaterialRecipe {
                kind: MaterialKind::Stripes,
                feature_scale: 16.0,
                angle: 0.0,
                amplitude: 0.8,
                albedo: [0.30, 0.55, 0.85],
                seed: mix(seed ^ 0xA2),
            },
        ),
    ]
}

/// Paper-shaped layout: 5 categories x 20 materials, parameters swept
/// deterministically per material.
pub fn paper_shaped(seed: u64) -> Vec<(String, String, MaterialRecipe)> {
    let mut out = Vec::new();
    for (ki, kind) in MaterialKind::all().iter().enumerate() {
        for m in 0..20usize {
            let mut rng = Rng::stream(seed, (ki as u64) << 8 | m as u64);
            let feature_scale = match kind {
                MaterialKind::Weave => 5.0 + 1.0 * m as f64 % 12.0 + rng.uniform_in(0.0, 1.0),
                MaterialKind::Stripes => 6.0 + (m % 10) as f64 * 1.5,
                MaterialKind::FractalRock => 4.0 + (m % 8) as f64,
                MaterialKind::GrainBlobs => 4.0 + (m % 6) as f64,
                MaterialKind::SmoothPlastic => 6.0 + (m % 9) as f64,
            };
            let angle = rng.uniform_in(0.0, core::f64::consts::PI);
            let amplitude = match kind {
                MaterialKind::SmoothPlastic => 0.05 + 0.02 * (m % 5) as f64,
                _ => 0.5 + 0.4 * rng.uniform(),
            };
            let albedo = [
                0.25 + 0.65 * rng.uniform() as f32,
                0.25 + 0.65 * rng.uniform() as f32,
                0.25 + 0.65 * rng.uniform() as f32,
            ];
            out.push((
                String::from(kind.category_name()),
                format!("{}_{m:02}", kind.category_name()),
                MaterialRecipe {
                    kind: *kind,
                    feature_scale,
                    angle,
                    amplitude,
                    albedo,
                    seed: mix(seed ^ ((ki as u64) << 16 | (m as u64) << 4)),
                },
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral;

    fn weave_recipe() -> MaterialRecipe {
        MaterialRecipe {
            kind: MaterialKind::Weave,
            feature_scale: 8.0,
            angle: 0.0,
            amplitude: 0.8,
            albedo: [0.8, 0.6, 0.4],
            seed: 7,
        }
    }

    #[test]
    fn determinism_bit_identical() {
        let r = weave_recipe();
        let a = gen_height_field(&r, 32, 32).unwrap();
        let b = gen_height_field(&r, 32, 32).unwrap();
        assert_eq!(a, b);
        let ia = shade_to_rgb(&a, default_light(), r.albedo).unwrap();
        let ib = shade_to_rgb(&b, default_light(), r.albedo).unwrap();
        assert_eq!(ia, ib);
    }

    #[test]
    fn amplitude_zero_is_constant() {
        for kind in MaterialKind::all() {
            let r = MaterialRecipe { amplitude: 0.0, kind, ..weave_recipe() };
            let h = gen_height_field(&r, 16, 16).unwrap();
            let (lo, hi) = h.min_max();
            assert_eq!(lo, hi, "{kind:?} not constant");
        }
    }

    #[test]
    fn heights_stay_in_unit_range() {
        for kind in MaterialKind::all() {
            let r = MaterialRecipe { kind, ..weave_recipe() };
            let h = gen_height_field(&r, 32, 32).unwrap();
            let (lo, hi) = h.min_max();
            assert!(lo >= 0.0 && hi <= 1.0, "{kind:?}: [{lo}, {hi}]");
        }
    }

    #[test]
    fn stripes_period8_peaks_at_bin4() {
        let r = MaterialRecipe {
            kind: MaterialKind::Stripes,
            feature_scale: 8.0,
            angle: 0.0,
            ..weave_recipe()
        };
        let h = gen_height_field(&r, 32, 32).unwrap();
        let field: alloc::vec::Vec<f64> = h.values.iter().map(|&v| v as f64).collect();
        let (ky, kx) = spectral::dominant_peak(&field, 32, 32).unwrap();
        // 32 / 8 = 4 cycles across: horizontal-frequency bin 4 (or conjugate 28)
        assert_eq!(ky, 0);
        assert!(kx == 4 || kx == 28, "peak at kx={kx}");
    }

    #[test]
    fn constant_height_shades_to_albedo() {
        let h = HeightMap::constant(16, 16, 0.4);
        let img = shade_to_rgb(&h, [0.0, 0.0, 1.0], [0.3, 0.5, 0.7]).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let px = img.pixel(x, y);
                assert!((px[0] - 0.3).abs() < 1e-6);
                assert!((px[1] - 0.5).abs() < 1e-6);
                assert!((px[2] - 0.7).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn tilted_plane_shades_uniform() {
        // h(x, y) = x / W: constant gradient, constant normal, uniform image
        let w = 32;
        let vals: alloc::vec::Vec<f32> = (0..w * w).map(|i| (i % w) as f32 / w as f32).collect();
        let h = HeightMap::new(w, w, vals).unwrap();
        let img = shade_to_rgb(&h, default_light(), [1.0, 1.0, 1.0]).unwrap();
        // interior only: border normals are clamped
        let reference = img.pixel(5, 5)[0];
        for y in 1..w - 1 {
            for x in 1..w - 1 {
                assert!((img.pixel(x, y)[0] - reference).abs() < 1e-6);
            }
        }
        assert!(reference > 0.0);
    }

    #[test]
    fn degenerate_light_rejected() {
        let h = HeightMap::constant(16, 16, 0.5);
        assert!(shade_to_rgb(&h, [0.0, 1.0, 0.0], [1.0; 3]).is_err());
        assert!(shade_to_rgb(&h, [0.0, 0.0, -1.0], [1.0; 3]).is_err());
    }

    #[test]
    fn weave_luminance_decorrelates_from_height() {
        let r = weave_recipe();
        let h = gen_height_field(&r, 32, 32).unwrap();
        let img = shade_to_rgb(&h, default_light(), r.albedo).unwrap();
        let proxy = crate::heightmap::grayscale_proxy(&img);
        // Pearson correlation between luminance and height below 0.95
        let n = h.values.len() as f64;
        let mean = |v: &[f32]| v.iter().map(|&x| x as f64).sum::<f64>() / n;
        let (mh, mp) = (mean(&h.values), mean(&proxy.values));
        let mut cov = 0.0;
        let mut vh = 0.0;
        let mut vp = 0.0;
        for i in 0..h.values.len() {
            let a = h.values[i] as f64 - mh;
            let b = proxy.values[i] as f64 - mp;
            cov += a * b;
            vh += a * a;
            vp += b * b;
        }
        let corr = cov / libm::sqrt(vh * vp).max(1e-12);
        assert!(corr.abs() < 0.95, "corr {corr}");
    }

    #[test]
    fn pair_ids_and_alignment() {
        let sets = default5(42);
        for (cat, mat, recipe) in &sets {
            let p = gen_pair(recipe, cat, mat, 3, 32, 32).unwrap();
            assert_eq!(p.image.width, p.height.width);
            assert_eq!(p.image.height, p.height.height);
            assert!(p.id.contains(mat.as_str()));
        }
    }

    #[test]
    fn paper_shaped_is_5x20() {
        let materials = paper_shaped(1);
        assert_eq!(materials.len(), 100);
        for kind in MaterialKind::all() {
            let n = materials.iter().filter(|(c, ..)| c == kind.category_name()).count();
            assert_eq!(n, 20);
        }
    }
}
