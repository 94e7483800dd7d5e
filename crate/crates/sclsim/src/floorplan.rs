//! Chip floorplan grid, sensor placement and the ring-oscillator sensor model.
//!
//! The die is a `width x height` grid of cells. Regions occupy cells
//! row-major, operations are assigned to regions by an [`OpMapPolicy`], and
//! sensors observe region power through the attenuation kernel
//! `w(d) = 1 / (1 + d^2)` with `d` the Euclidean cell distance.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dut::OpKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FloorplanError {
    /// More regions than grid cells.
    TooManyRegions { regions: usize, cells: usize },
    /// A fixed op-map target outside the region range.
    BadOpMapRegion { region: usize, n_regions: usize },
}

impl fmt::Display for FloorplanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FloorplanError::TooManyRegions { regions, cells } => {
                write!(f, "floorplan: {regions} regions do not fit in {cells} grid cells")
            }
            FloorplanError::BadOpMapRegion { region, n_regions } => {
                write!(f, "floorplan: op_map targets region {region}, have {n_regions}")
            }
        }
    }
}

impl std::error::Error for FloorplanError {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlacementError {
    NotPerfectSquare { n_sensors: usize },
    GridTooSmall { side: usize, width: usize, height: usize },
}

impl fmt::Display for PlacementError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlacementError::NotPerfectSquare { n_sensors } => {
                write!(f, "floorplan: sensor count {n_sensors} is not a perfect square")
            }
            PlacementError::GridTooSmall { side, width, height } => {
                write!(f, "floorplan: {side}x{side} sensor lattice exceeds {width}x{height} grid")
            }
        }
    }
}

impl std::error::Error for PlacementError {}

/// How emitted operations map onto floorplan regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpMapPolicy {
    /// Byte `i` of the cipher state goes to region `i mod n_regions`,
    /// regardless of operation kind.
    ByteMod,
    /// Every operation lands in one region (single-source leak scenarios).
    Fixed(usize),
}

#[derive(Debug, Clone)]
pub struct Floorplan {
    width: usize,
    height: usize,
    cells: Vec<(usize, usize)>,
    op_map: OpMapPolicy,
}

impl Floorplan {
    /// Dense row-major grid layout: region `r` occupies cell `(r % width, r / width)`.
    pub fn grid(
        width: usize,
        height: usize,
        n_regions: usize,
        op_map: OpMapPolicy,
    ) -> Result<Self, FloorplanError> {
        if n_regions > width * height {
            return Err(FloorplanError::TooManyRegions { regions: n_regions, cells: width * height });
        }
        if let OpMapPolicy::Fixed(r) = op_map {
            if r >= n_regions {
                return Err(FloorplanError::BadOpMapRegion { region: r, n_regions });
            }
        }
        let cells = (0..n_regions).map(|r| (r % width, r / width)).collect();
        Ok(Floorplan { width, height, cells, op_map })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_regions(&self) -> usize {
        self.cells.len()
    }

    pub fn region_cell(&self, region: usize) -> (usize, usize) {
        self.cells[region]
    }

    pub fn op_map(&self) -> OpMapPolicy {
        self.op_map
    }

    /// Region receiving the power of one byte-level operation. Total over
    /// every (kind, byte index) the device emits.
    pub fn region_for(&self, _kind: OpKind, byte_index: usize) -> usize {
        match self.op_map {
            OpMapPolicy::ByteMod => byte_index % self.cells.len(),
            OpMapPolicy::Fixed(r) => r,
        }
    }
}

/// Squared Euclidean distance between two grid cells.
fn dist2(a: (usize, usize), b: (usize, usize)) -> f64 {
    let dx = a.0 as f64 - b.0 as f64;
    let dy = a.1 as f64 - b.1 as f64;
    dx * dx + dy * dy
}

/// Attenuation kernel: 1 at the sensor's own cell, strictly decreasing in
/// distance.
pub fn attenuation(d2: f64) -> f64 {
    1.0 / (1.0 + d2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorPlacement {
    pub sensor_id: usize,
    pub x: usize,
    pub y: usize,
}

/// Place `n_sensors = k*k` sensors at the centers of a k-by-k uniform
/// partition of the grid: `x_i = floor((2i+1) * width / (2k))`, same for y.
pub fn place_sensors_even(
    width: usize,
    height: usize,
    n_sensors: usize,
) -> Result<Vec<SensorPlacement>, PlacementError> {
    let side = (n_sensors as f64).sqrt().round() as usize;
    if side * side != n_sensors {
        return Err(PlacementError::NotPerfectSquare { n_sensors });
    }
    if side > width || side > height {
        return Err(PlacementError::GridTooSmall { side, width, height });
    }
    let mut out = Vec::with_capacity(n_sensors);
    for j in 0..side {
        for i in 0..side {
            out.push(SensorPlacement {
                sensor_id: j * side + i,
                x: (2 * i + 1) * width / (2 * side),
                y: (2 * j + 1) * height / (2 * side),
            });
        }
    }
    Ok(out)
}

/// Distance-weighted sum of region powers as seen from one sensor.
pub fn local_power(region_powers: &[f64], sensor: &SensorPlacement, floorplan: &Floorplan) -> f64 {
    debug_assert_eq!(region_powers.len(), floorplan.n_regions());
    let s = (sensor.x, sensor.y);
    region_powers
        .iter()
        .enumerate()
        .map(|(r, &p)| p * attenuation(dist2(s, floorplan.region_cell(r))))
        .sum()
}

/// Precomputed `w(d)` per (sensor, region), in the same region order as
/// [`local_power`] so both paths produce bit-identical sums.
pub fn sensor_weights(placements: &[SensorPlacement], floorplan: &Floorplan) -> Vec<Vec<f64>> {
    placements
        .iter()
        .map(|s| {
            (0..floorplan.n_regions())
                .map(|r| attenuation(dist2((s.x, s.y), floorplan.region_cell(r))))
                .collect()
        })
        .collect()
}

/// Ring-oscillator sensor parameters.
#[derive(Debug, Clone, Copy)]
pub struct SensorParams {
    /// Free-running oscillations per time step.
    pub f0: f64,
    /// Power-to-frequency sensitivity; more power means fewer counts.
    pub gamma: f64,
    /// Time steps per sampling window.
    pub window: usize,
    /// Count-domain noise standard deviation.
    pub sigma_jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorReading {
    pub sensor_id: usize,
    pub window_idx: u64,
    pub count: u64,
    pub saturated: bool,
}

/// Windowed oscillation count for the mean local power over one window.
///
/// `count = round(max(0, f0 * window * (1 - gamma * p_mean)) + N(0, sigma_jitter))`,
/// clamped at zero; `saturated` reflects the pre-noise clamp.
pub fn ro_count(
    sensor_id: usize,
    window_idx: u64,
    p_mean: f64,
    params: &SensorParams,
    rng: &mut impl Rng,
) -> SensorReading {
    let droop = 1.0 - params.gamma * p_mean;
    let saturated = droop <= 0.0;
    let ideal = (params.f0 * params.window as f64 * droop).max(0.0);
    let jitter = Normal::new(0.0, params.sigma_jitter).expect("sigma_jitter >= 0");
    let noisy = ideal + jitter.sample(rng);
    let count = noisy.round().max(0.0) as u64;
    SensorReading { sensor_id, window_idx, count, saturated }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn params(f0: f64, gamma: f64, window: usize, sigma_jitter: f64) -> SensorParams {
        SensorParams { f0, gamma, window, sigma_jitter }
    }

    #[test]
    fn even_placement_4x4_grid_4_sensors() {
        let got = place_sensors_even(4, 4, 4).unwrap();
        let coords: Vec<(usize, usize)> = got.iter().map(|s| (s.x, s.y)).collect();
        assert_eq!(coords, vec![(1, 1), (3, 1), (1, 3), (3, 3)]);
        assert_eq!(got.iter().map(|s| s.sensor_id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn even_placement_single_sensor_centers() {
        let got = place_sensors_even(8, 8, 1).unwrap();
        assert_eq!((got[0].x, got[0].y), (4, 4));
    }

    #[test]
    fn placement_errors() {
        assert_eq!(
            place_sensors_even(2, 2, 16),
            Err(PlacementError::GridTooSmall { side: 4, width: 2, height: 2 })
        );
        assert_eq!(place_sensors_even(4, 4, 3), Err(PlacementError::NotPerfectSquare { n_sensors: 3 }));
    }

    #[test]
    fn local_power_kernel_arithmetic() {
        let fp = Floorplan::grid(4, 1, 2, OpMapPolicy::ByteMod).unwrap();
        let sensor = SensorPlacement { sensor_id: 0, x: 0, y: 0 };
        // single region at the sensor's own cell
        assert_eq!(local_power(&[2.0, 0.0], &sensor, &fp), 2.0);
        // d=0 with power 2.0 plus d=1 with power 4.0
        assert_eq!(local_power(&[2.0, 4.0], &sensor, &fp), 2.0 + 4.0 / 2.0);
        assert_eq!(local_power(&[0.0, 0.0], &sensor, &fp), 0.0);
    }

    #[test]
    fn kernel_shape() {
        assert_eq!(attenuation(0.0), 1.0);
        let mut last = attenuation(0.0);
        for d2 in [1.0, 2.0, 4.0, 9.0, 100.0] {
            let w = attenuation(d2);
            assert!(w < last);
            last = w;
        }
    }

    #[test]
    fn ro_count_examples() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let r = ro_count(0, 0, 123.0, &params(1000.0, 0.0, 1, 0.0), &mut rng);
        assert_eq!((r.count, r.saturated), (1000, false));
        let r = ro_count(0, 0, 5.0, &params(1000.0, 0.05, 1, 0.0), &mut rng);
        assert_eq!(r.count, 750);
        let r = ro_count(0, 0, 2.0, &params(1000.0, 1.0, 1, 0.0), &mut rng);
        assert_eq!((r.count, r.saturated), (0, true));
    }

    #[test]
    fn locality_impulse_maps_to_nearest_sensor() {
        let fp = Floorplan::grid(4, 4, 16, OpMapPolicy::ByteMod).unwrap();
        let sensors = place_sensors_even(4, 4, 4).unwrap();
        let p = params(1000.0, 0.01, 1, 0.0);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        for r in 0..16 {
            let mut powers = vec![0.0; 16];
            powers[r] = 1.0;
            let deltas: Vec<f64> = sensors
                .iter()
                .map(|s| {
                    let base = ro_count(s.sensor_id, 0, 0.0, &p, &mut rng).count as f64;
                    let hit = ro_count(s.sensor_id, 0, local_power(&powers, s, &fp), &p, &mut rng).count as f64;
                    (hit - base).abs()
                })
                .collect();
            let responding = (0..4)
                .max_by(|&a, &b| deltas[a].partial_cmp(&deltas[b]).unwrap().then(b.cmp(&a)))
                .unwrap();
            let nearest = (0..4)
                .min_by(|&a, &b| {
                    let da = dist2((sensors[a].x, sensors[a].y), fp.region_cell(r));
                    let db = dist2((sensors[b].x, sensors[b].y), fp.region_cell(r));
                    da.partial_cmp(&db).unwrap().then(a.cmp(&b))
                })
                .unwrap();
            assert_eq!(responding, nearest, "region {r}");
        }
    }

    proptest! {
        #[test]
        fn count_noise_free_monotone_in_power(p1 in 0.0..50.0f64, p2 in 0.0..50.0f64) {
            let sp = params(5000.0, 0.02, 4, 0.0);
            let mut rng = ChaCha12Rng::seed_from_u64(1);
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let c_lo = ro_count(0, 0, lo, &sp, &mut rng).count;
            let c_hi = ro_count(0, 0, hi, &sp, &mut rng).count;
            prop_assert!(c_hi <= c_lo);
        }

        #[test]
        fn deterministic_under_fixed_seed(p in 0.0..10.0f64, seed in 0u64..1000) {
            let sp = params(2000.0, 0.01, 2, 3.0);
            let a = ro_count(1, 7, p, &sp, &mut ChaCha12Rng::seed_from_u64(seed));
            let b = ro_count(1, 7, p, &sp, &mut ChaCha12Rng::seed_from_u64(seed));
            prop_assert_eq!(a, b);
        }
    }
}
