use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Procedural forest parameters. Lengths in metres, densities per hectare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    pub extent_x: f64,
    pub extent_y: f64,
    pub tree_density: f64,
    pub min_spacing: f64,
    pub trunk_radius: [f64; 2],
    pub trunk_height: [f64; 2],
    pub max_lean_deg: f64,
    pub crown_radius: [f64; 2],
    pub crown_half_height: [f64; 2],
    pub shrub_density: f64,
    pub shrub_radius: [f64; 2],
    pub shrub_half_height: [f64; 2],
    pub terrain_amplitude: f64,
    pub terrain_wavelength: f64,
    pub terrain_octaves: u32,
    pub terrain_cell: f64,
    pub canopy_porosity: f64,
    pub shell_noise: f64,
    pub epoch_jitter: f64,
    pub placement_attempts: u32,
    /// Correlation length of the stand-structure fields.
    pub stand_wavelength: f64,
    /// Log-amplitude of the tree density field.
    pub density_variation: f64,
    /// Fractional amplitude of the tree size field.
    pub size_variation: f64,
    /// Log-amplitude of the shrub density field.
    pub shrub_variation: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            extent_x: 200.0,
            extent_y: 200.0,
            tree_density: 200.0,
            min_spacing: 3.0,
            trunk_radius: [0.12, 0.3],
            trunk_height: [7.0, 13.0],
            max_lean_deg: 3.0,
            crown_radius: [2.0, 3.5],
            crown_half_height: [2.0, 3.5],
            shrub_density: 100.0,
            shrub_radius: [0.6, 1.4],
            shrub_half_height: [0.4, 0.9],
            terrain_amplitude: 2.5,
            terrain_wavelength: 40.0,
            terrain_octaves: 3,
            terrain_cell: 1.0,
            canopy_porosity: 0.3,
            shell_noise: 0.1,
            epoch_jitter: 0.25,
            placement_attempts: 30,
            stand_wavelength: 30.0,
            density_variation: 0.7,
            size_variation: 0.25,
            shrub_variation: 1.2,
        }
    }
}

impl WorldParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if !(self.extent_x > 0.0 && self.extent_y > 0.0) {
            return bad("world extent must be positive");
        }
        if self.tree_density < 0.0 || self.shrub_density < 0.0 {
            return bad("densities must be non-negative");
        }
        if !(self.terrain_cell > 0.0) || !(self.terrain_wavelength > 0.0) {
            return bad("terrain cell and wavelength must be positive");
        }
        if !(self.stand_wavelength > 0.0) {
            return bad("stand_wavelength must be positive");
        }
        if self.density_variation < 0.0 || self.shrub_variation < 0.0 || !(0.0..1.0).contains(&self.size_variation) {
            return bad("stand variations must be non-negative and size_variation below 1");
        }
        if !(0.0..1.0).contains(&self.canopy_porosity) {
            return bad("canopy_porosity must be in [0, 1)");
        }
        for r in [
            self.trunk_radius,
            self.trunk_height,
            self.crown_radius,
            self.crown_half_height,
            self.shrub_radius,
            self.shrub_half_height,
        ] {
            if !(r[0] > 0.0 && r[0] <= r[1]) {
                return bad("ranges must satisfy 0 < lo <= hi");
            }
        }
        Ok(())
    }

    pub fn area_ha(&self) -> f64 {
        self.extent_x * self.extent_y / 10_000.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trunk {
    pub base: Point3,
    pub radius: f64,
    pub height: f64,
    pub lean: Vector3<f64>,
}

impl Trunk {
    pub fn top(&self) -> Point3 {
        self.base + self.lean * self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CanopyKind {
    Crown,
    Shrub,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Canopy {
    pub center: Point3,
    pub semi_axes: Vector3<f64>,
    pub kind: CanopyKind,
}

/// Regular height grid with bilinear interpolation; clamps outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightfield {
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    pub heights: Vec<f64>,
}

impl Heightfield {
    pub fn height(&self, x: f64, y: f64) -> f64 {
        let fx = (x / self.cell).clamp(0.0, (self.nx - 1) as f64);
        let fy = (y / self.cell).clamp(0.0, (self.ny - 1) as f64);
        let ix = (fx.floor() as usize).min(self.nx - 2);
        let iy = (fy.floor() as usize).min(self.ny - 2);
        let (u, v) = (fx - ix as f64, fy - iy as f64);
        let h = |i: usize, j: usize| self.heights[j * self.nx + i];
        let a = h(ix, iy) * (1.0 - u) + h(ix + 1, iy) * u;
        let b = h(ix, iy + 1) * (1.0 - u) + h(ix + 1, iy + 1) * u;
        a * (1.0 - v) + b * v
    }

    /// Upward unit normal from central differences over `h` metres.
    pub fn normal(&self, x: f64, y: f64, h: f64) -> Vector3<f64> {
        let dx = (self.height(x + h, y) - self.height(x - h, y)) / (2.0 * h);
        let dy = (self.height(x, y + h) - self.height(x, y - h)) / (2.0 * h);
        Vector3::new(-dx, -dy, 1.0).normalize()
    }

    pub fn max_height(&self) -> f64 {
        self.heights.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_height(&self) -> f64 {
        self.heights.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestWorld {
    pub params: WorldParams,
    pub seed: u64,
    pub trunks: Vec<Trunk>,
    pub canopies: Vec<Canopy>,
    pub ground: Heightfield,
    pub stand: StandFields,
}

impl ForestWorld {
    pub fn contains_xy(&self, p: &Point3) -> bool {
        (0.0..=self.params.extent_x).contains(&p.x) && (0.0..=self.params.extent_y).contains(&p.y)
    }
}

fn lerp_range(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

struct NoiseSpec {
    extent: [f64; 2],
    cell: f64,
    amplitude: f64,
    wavelength: f64,
    octaves: u32,
}

fn value_noise(spec: &NoiseSpec, rng: &mut ChaCha8Rng) -> Heightfield {
    let nx = (spec.extent[0] / spec.cell).ceil() as usize + 1;
    let ny = (spec.extent[1] / spec.cell).ceil() as usize + 1;
    let mut heights = vec![0.0; nx * ny];
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut amp = spec.amplitude;
    let mut wl = spec.wavelength;
    for _ in 0..spec.octaves {
        let gx = (spec.extent[0] / wl).ceil() as usize + 2;
        let gy = (spec.extent[1] / wl).ceil() as usize + 2;
        let lattice: Vec<f64> = (0..gx * gy).map(|_| rng.random_range(-1.0..1.0)).collect();
        for j in 0..ny {
            for i in 0..nx {
                let (x, y) = (i as f64 * spec.cell / wl, j as f64 * spec.cell / wl);
                let (x0, y0) = (x.floor() as usize, y.floor() as usize);
                let (u, v) = (smooth(x - x0 as f64), smooth(y - y0 as f64));
                let l = |a: usize, b: usize| lattice[b * gx + a];
                let a = l(x0, y0) * (1.0 - u) + l(x0 + 1, y0) * u;
                let b = l(x0, y0 + 1) * (1.0 - u) + l(x0 + 1, y0 + 1) * u;
                heights[j * nx + i] += amp * (a * (1.0 - v) + b * v);
            }
        }
        amp *= 0.5;
        wl *= 0.5;
    }
    Heightfield {
        cell: spec.cell,
        nx,
        ny,
        heights,
    }
}

/// Dart-throwing Poisson-disk sampler over a rectangle.
/// Stand-structure fields in [-1, 1] over the world extent.
#[derive(Debug, Clone, PartialEq)]
pub struct StandFields {
    pub density: Heightfield,
    pub size: Heightfield,
    pub shrubs: Heightfield,
}

impl StandFields {
    /// Zero fields, a homogeneous stand.
    pub fn uniform(params: &WorldParams) -> Self {
        let nx = (params.extent_x / 2.0).ceil() as usize + 1;
        let ny = (params.extent_y / 2.0).ceil() as usize + 1;
        let flat = Heightfield {
            cell: 2.0,
            nx,
            ny,
            heights: vec![0.0; nx * ny],
        };
        Self {
            density: flat.clone(),
            size: flat.clone(),
            shrubs: flat,
        }
    }

    fn generate(params: &WorldParams, rng: &mut ChaCha8Rng) -> Self {
        let mut field = || {
            value_noise(
                &NoiseSpec {
                    extent: [params.extent_x, params.extent_y],
                    cell: 2.0,
                    amplitude: 1.0,
                    wavelength: params.stand_wavelength,
                    octaves: 2,
                },
                rng,
            )
        };
        let (density, size, shrubs) = (field(), field(), field());
        Self { density, size, shrubs }
    }
}

/// Relative intensity `exp(a·f)` of a field, with its upper bound.
fn intensity(f: &Heightfield, a: f64, x: f64, y: f64) -> (f64, f64) {
    ((a * f.height(x, y)).exp(), (a * 1.5).exp())
}

fn poisson_disk(
    n: usize,
    params: &WorldParams,
    fields: &StandFields,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, f64)>> {
    let spacing = params.min_spacing.max(1e-6);
    let cell = spacing / 2f64.sqrt();
    let gx = (params.extent_x / cell).ceil() as usize + 1;
    let gy = (params.extent_y / cell).ceil() as usize + 1;
    let mut grid: Vec<Option<usize>> = vec![None; gx * gy];
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(n);
    let thinning = (params.density_variation * 1.5).exp();
    let budget = (n as f64 * params.placement_attempts.max(1) as f64 * thinning) as u64;
    let mut attempts = 0u64;
    while out.len() < n && attempts < budget {
        attempts += 1;
        let x = rng.random_range(0.0..params.extent_x);
        let y = rng.random_range(0.0..params.extent_y);
        let (w, wmax) = intensity(&fields.density, params.density_variation, x, y);
        if rng.random::<f64>() * wmax > w {
            continue;
        }
        let (ci, cj) = ((x / cell) as usize, (y / cell) as usize);
        let mut ok = true;
        'scan: for j in cj.saturating_sub(2)..(cj + 3).min(gy) {
            for i in ci.saturating_sub(2)..(ci + 3).min(gx) {
                if let Some(k) = grid[j * gx + i] {
                    let (px, py) = out[k];
                    if (px - x).powi(2) + (py - y).powi(2) < spacing * spacing {
                        ok = false;
                        break 'scan;
                    }
                }
            }
        }
        if ok {
            grid[cj * gx + ci] = Some(out.len());
            out.push((x, y));
        }
    }
    if out.len() < n {
        return Err(Error::PlacementFailure {
            placed: out.len(),
            requested: n,
        });
    }
    Ok(out)
}

/// Deterministic procedural forest: same `(params, seed)` gives a
/// bit-identical world.
pub fn generate_world(params: &WorldParams, seed: u64) -> Result<ForestWorld> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ground = value_noise(
        &NoiseSpec {
            extent: [params.extent_x, params.extent_y],
            cell: params.terrain_cell,
            amplitude: params.terrain_amplitude,
            wavelength: params.terrain_wavelength,
            octaves: params.terrain_octaves,
        },
        &mut rng,
    );
    let fields = StandFields::generate(params, &mut rng);
    let n_trees = (params.tree_density * params.area_ha()).round() as usize;
    let sites = poisson_disk(n_trees, params, &fields, &mut rng)?;

    let mut trunks = Vec::with_capacity(n_trees);
    let mut canopies = Vec::with_capacity(n_trees);
    for &(x, y) in &sites {
        let base = Point3::new(x, y, ground.height(x, y));
        let scale = 1.0 + params.size_variation * fields.size.height(x, y).clamp(-1.0, 1.0);
        let radius = lerp_range(&mut rng, params.trunk_radius);
        let height = lerp_range(&mut rng, params.trunk_height) * scale;
        let tilt = rng.random_range(0.0..params.max_lean_deg.max(0.0) + 1e-12).to_radians();
        let az = rng.random_range(0.0..std::f64::consts::TAU);
        let lean = Vector3::new(tilt.sin() * az.cos(), tilt.sin() * az.sin(), tilt.cos());
        let trunk = Trunk {
            base,
            radius,
            height,
            lean,
        };
        let r = lerp_range(&mut rng, params.crown_radius) * scale.sqrt();
        let ry = r * rng.random_range(0.85..1.15);
        let c = lerp_range(&mut rng, params.crown_half_height);
        // trunk top sits inside the lower half of the crown
        let center = trunk.top() + Vector3::new(0.0, 0.0, 0.5 * c);
        canopies.push(Canopy {
            center,
            semi_axes: Vector3::new(r, ry, c),
            kind: CanopyKind::Crown,
        });
        trunks.push(trunk);
    }

    let n_shrubs = (params.shrub_density * params.area_ha()).round() as usize;
    let mut placed = 0;
    while placed < n_shrubs {
        let x = rng.random_range(0.0..params.extent_x);
        let y = rng.random_range(0.0..params.extent_y);
        let (w, wmax) = intensity(&fields.shrubs, params.shrub_variation, x, y);
        if rng.random::<f64>() * wmax > w {
            continue;
        }
        placed += 1;
        let r = lerp_range(&mut rng, params.shrub_radius);
        let c = lerp_range(&mut rng, params.shrub_half_height);
        canopies.push(Canopy {
            center: Point3::new(x, y, ground.height(x, y) + 0.6 * c),
            semi_axes: Vector3::new(r, r * rng.random_range(0.8..1.2), c),
            kind: CanopyKind::Shrub,
        });
    }
    Ok(ForestWorld {
        params: params.clone(),
        seed,
        trunks,
        canopies,
        ground,
        stand: fields,
    })
}
