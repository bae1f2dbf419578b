//! Seeded random instance generator.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed, so a given
//! parameter set produces the same instance bytes on every platform.

use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::problem::{InstanceMeta, ProblemInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub n: usize,
    pub m: usize,
    /// Due-date tightness.
    pub tau: f64,
    /// Due-date range.
    #[serde(rename = "range_R")]
    pub range_r: f64,
    pub setup_ratio_beta: f64,
    pub elig_density_delta: f64,
    pub lambda_arrival: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            n: 20,
            m: 5,
            tau: 0.4,
            range_r: 0.6,
            setup_ratio_beta: 0.25,
            elig_density_delta: 1.0,
            lambda_arrival: 0.5,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(CoreError::InvalidParams(msg.to_string()));
        if self.n < 1 || self.m < 1 {
            return bad("n and m must be at least 1");
        }
        if !(self.elig_density_delta > 0.0 && self.elig_density_delta <= 1.0) {
            return bad("delta must lie in (0, 1]");
        }
        for (name, v) in [
            ("tau", self.tau),
            ("range_R", self.range_r),
            ("beta", self.setup_ratio_beta),
            ("lambda", self.lambda_arrival),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CoreError::InvalidParams(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    /// Number of eligible machines per job, `⌈δ·m⌉`.
    pub fn eligible_count(&self) -> usize {
        // The epsilon keeps products such as 0.6 * 5 = 3.0000000000000004 from rounding up.
        let raw = (self.elig_density_delta * self.m as f64 - 1e-9).ceil();
        (raw as usize).clamp(1, self.m)
    }
}

pub const TAU_LEVELS: [f64; 3] = [0.2, 0.4, 0.6];
pub const RANGE_LEVELS: [f64; 3] = [0.2, 0.6, 1.0];
pub const SETUP_RATIO_LEVELS: [f64; 2] = [0.1, 0.25];
pub const DENSITY_LEVELS: [f64; 2] = [0.75, 1.0];

/// Every (τ, R, β, δ) combination of the experimental design for one size,
/// τ outermost and δ fastest. Seeds are left at 0.
pub fn parameter_grid(n: usize, m: usize) -> Vec<GenParams> {
    let mut out = Vec::with_capacity(36);
    for tau in TAU_LEVELS {
        for range_r in RANGE_LEVELS {
            for setup_ratio_beta in SETUP_RATIO_LEVELS {
                for elig_density_delta in DENSITY_LEVELS {
                    out.push(GenParams {
                        n,
                        m,
                        tau,
                        range_r,
                        setup_ratio_beta,
                        elig_density_delta,
                        ..GenParams::default()
                    });
                }
            }
        }
    }
    out
}

/// Rounds half-up (towards +∞ on ties), used for every real-valued DU endpoint.
pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Due-date window for a job released at `release` whose mean eligible
/// processing time is `p_bar_j`. Bounds are swapped if rounding inverts them
/// and clamped below at 0.
pub fn due_date_bounds(release: i64, p_bar_j: f64, tau: f64, range_r: f64) -> (i64, i64) {
    let r = release as f64;
    let mut lo = round_half_up(r + p_bar_j * (1.0 - tau - range_r / 2.0));
    let mut hi = round_half_up(r + p_bar_j * (1.0 - tau + range_r / 2.0));
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    (lo.max(0), hi.max(0))
}

pub fn generate_instance(params: &GenParams) -> Result<ProblemInstance> {
    params.validate()?;
    let (n, m) = (params.n, params.m);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let processing: Vec<Vec<i64>> =
        (0..n).map(|_| (0..m).map(|_| rng.gen_range(1..=100)).collect()).collect();
    let total: i64 = processing.iter().flatten().sum();
    let p_bar = total as f64 / (n * m) as f64;

    let release_hi = round_half_up(params.lambda_arrival * p_bar).max(0);
    let release: Vec<i64> = (0..n).map(|_| rng.gen_range(0..=release_hi)).collect();
    let weight: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=10)).collect();

    let setup_hi = round_half_up(params.setup_ratio_beta * p_bar).max(0);
    let mut setup = vec![vec![vec![0i64; m]; n]; n + 1];
    for (row, plane) in setup.iter_mut().enumerate() {
        for (j, line) in plane.iter_mut().enumerate() {
            for value in line.iter_mut() {
                let drawn = rng.gen_range(0..=setup_hi);
                // Row j + 1 is "job j last"; a job never follows itself.
                *value = if row == j + 1 { 0 } else { drawn };
            }
        }
    }

    let count = params.eligible_count();
    let eligible: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let mut picked = index::sample(&mut rng, m, count).into_vec();
            picked.sort_unstable();
            picked
        })
        .collect();

    let due: Vec<i64> = (0..n)
        .map(|j| {
            let p_bar_j = eligible[j].iter().map(|&k| processing[j][k]).sum::<i64>() as f64
                / eligible[j].len() as f64;
            let (lo, hi) = due_date_bounds(release[j], p_bar_j, params.tau, params.range_r);
            rng.gen_range(lo..=hi).max(0)
        })
        .collect();

    Ok(ProblemInstance {
        n,
        m,
        processing,
        release,
        due,
        weight,
        setup,
        eligible,
        meta: InstanceMeta { params: Some(params.clone()), seed: Some(params.seed) },
    })
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `rep` in grid cell `cell`.
pub fn derive_seed(base: u64, cell: usize, rep: usize) -> u64 {
    let a = mix64(base.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let b = mix64(a ^ (cell as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    mix64(b ^ (rep as u64).wrapping_add(0x632b_e59b_d9b4_e019))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub params: GenParams,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub instances: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Loads every instance listed, resolving file names against the
    /// manifest's directory.
    pub fn load_instances(&self, manifest_path: &Path) -> Result<Vec<(String, ProblemInstance)>> {
        let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        self.instances
            .iter()
            .map(|e| {
                let path = dir.join(&e.file);
                let text = fs::read_to_string(&path).map_err(|source| CoreError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                Ok((e.file.clone(), ProblemInstance::from_json(&text)?))
            })
            .collect()
    }
}

/// Generates `per_cell` replicates of every grid cell. The `seed` stored in
/// each cell's params is ignored in favor of the derived per-replicate seed.
pub fn generate_suite(
    grid: &[GenParams],
    per_cell: usize,
    base_seed: u64,
) -> Result<Vec<(ManifestEntry, ProblemInstance)>> {
    if per_cell == 0 {
        return Err(CoreError::InvalidParams("instances per cell must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(grid.len() * per_cell);
    for (cell, base) in grid.iter().enumerate() {
        for rep in 0..per_cell {
            let seed = derive_seed(base_seed, cell, rep);
            let params = GenParams { seed, ..base.clone() };
            let inst = generate_instance(&params)?;
            let file = format!("inst_c{cell:03}_r{rep:03}.json");
            out.push((ManifestEntry { file, params, seed }, inst));
        }
    }
    Ok(out)
}

/// Writes instance files and `manifest.json` into `dir`.
pub fn write_suite(suite: &[(ManifestEntry, ProblemInstance)], dir: &Path) -> Result<Manifest> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| CoreError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    for (entry, inst) in suite {
        let path = dir.join(&entry.file);
        fs::write(&path, inst.to_json()).map_err(io(&path))?;
    }
    let manifest = Manifest { instances: suite.iter().map(|(e, _)| e.clone()).collect() };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(io(&path))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::validate_instance;

    #[test]
    fn grid_covers_every_level_once() {
        let grid = parameter_grid(20, 5);
        assert_eq!(grid.len(), 36);
        assert!(grid.iter().all(|g| g.n == 20 && g.m == 5 && g.lambda_arrival == 0.5 && g.validate().is_ok()));
        for (i, a) in grid.iter().enumerate() {
            for b in &grid[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn due_window_examples() {
        assert_eq!(due_date_bounds(10, 20.0, 0.4, 0.2), (20, 24));
        assert_eq!(due_date_bounds(7, 13.0, 0.0, 0.0), (20, 20));
        assert_eq!(due_date_bounds(0, 10.0, 0.6, 1.0), (0, 9));
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(-0.5), 0);
        assert_eq!(round_half_up(-1.2), -1);
        assert_eq!(round_half_up(25.25), 25);
    }

    #[test]
    fn eligible_count_is_ceiling() {
        let p = |m, delta| GenParams { m, elig_density_delta: delta, ..GenParams::default() };
        assert_eq!(p(10, 0.75).eligible_count(), 8);
        assert_eq!(p(5, 0.6).eligible_count(), 3);
        assert_eq!(p(5, 0.75).eligible_count(), 4);
        assert_eq!(p(5, 1.0).eligible_count(), 5);
        assert_eq!(p(1, 0.01).eligible_count(), 1);
    }

    #[test]
    fn generated_instances_are_valid_and_bounded() {
        let params = GenParams { n: 15, m: 10, elig_density_delta: 0.75, seed: 11, ..GenParams::default() };
        let inst = generate_instance(&params).unwrap();
        assert!(validate_instance(&inst).is_empty());
        assert!(inst.processing.iter().flatten().all(|&p| (1..=100).contains(&p)));
        assert!(inst.eligible.iter().all(|e| e.len() == 8));
        assert!(inst.weight.iter().all(|&w| (1..=10).contains(&w)));
        for j in 0..inst.n {
            for k in 0..inst.m {
                assert_eq!(inst.setup[j + 1][j][k], 0);
            }
        }
    }

    #[test]
    fn zero_lambda_releases_everything_at_zero() {
        for seed in 0..5 {
            let params = GenParams { lambda_arrival: 0.0, seed, ..GenParams::default() };
            assert!(generate_instance(&params).unwrap().release.iter().all(|&r| r == 0));
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let params = GenParams { seed: 99, ..GenParams::default() };
        let a = generate_instance(&params).unwrap().to_json();
        let b = generate_instance(&params).unwrap().to_json();
        assert_eq!(a, b);
        let c = generate_instance(&GenParams { seed: 100, ..params }).unwrap().to_json();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(generate_instance(&GenParams { n: 0, ..GenParams::default() }).is_err());
        assert!(generate_instance(&GenParams { elig_density_delta: 0.0, ..GenParams::default() }).is_err());
        assert!(generate_instance(&GenParams { tau: -0.1, ..GenParams::default() }).is_err());
    }

    #[test]
    fn suite_seeds_are_distinct() {
        let suite = generate_suite(&[GenParams::default()], 50, 7).unwrap();
        assert_eq!(suite.len(), 50);
        let mut seeds: Vec<u64> = suite.iter().map(|(e, _)| e.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 50);
        assert!(generate_suite(&[], 3, 7).unwrap().is_empty());
        assert!(generate_suite(&[GenParams::default()], 0, 7).is_err());
    }
}
