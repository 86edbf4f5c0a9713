//! Planar geometry for the service area: local projection, Manhattan
//! distance, K-means station siting and nearest-station sub-regions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Kilometres per degree of longitude at the equator.
pub const KM_PER_DEG_LON: f64 = 111.32;
/// Kilometres per degree of latitude.
pub const KM_PER_DEG_LAT: f64 = 110.57;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("k-means needs at least k={k} points, got {points}")]
    TooFewPoints { k: usize, points: usize },
    #[error("k must be at least 1")]
    ZeroClusters,
    #[error("station layout is empty")]
    EmptyLayout,
    #[error("station ids must be dense 0..k, found id {found} at position {index}")]
    NonDenseIds { index: usize, found: usize },
    #[error("station {0} has zero chargers")]
    NoChargers(usize),
    #[error("non-finite coordinate")]
    NonFinite,
}

/// A raw WGS84 position in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LonLat {
    pub lon: f64,
    pub lat: f64,
}

impl LonLat {
    pub fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
    }
}

/// A point on the local plane, kilometres east (`x`) and north (`y`) of the
/// projection reference.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
}

impl GeoPoint {
    pub const ORIGIN: GeoPoint = GeoPoint { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn squared_euclidean(&self, other: &GeoPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Local equirectangular projection around a reference position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub reference: LonLat,
}

impl Projection {
    pub fn new(reference: LonLat) -> Self {
        Self { reference }
    }

    fn lon_scale(&self) -> f64 {
        self.reference.lat.to_radians().cos() * KM_PER_DEG_LON
    }

    pub fn project(&self, p: LonLat) -> GeoPoint {
        GeoPoint {
            x: (p.lon - self.reference.lon) * self.lon_scale(),
            y: (p.lat - self.reference.lat) * KM_PER_DEG_LAT,
        }
    }

    /// Inverse of [`Projection::project`].
    pub fn unproject(&self, p: GeoPoint) -> LonLat {
        LonLat {
            lon: self.reference.lon + p.x / self.lon_scale(),
            lat: self.reference.lat + p.y / KM_PER_DEG_LAT,
        }
    }
}

/// Projects `(lon, lat)` onto the plane centred at `reference`.
pub fn project(lon: f64, lat: f64, reference: LonLat) -> GeoPoint {
    Projection::new(reference).project(LonLat::new(lon, lat))
}

/// L1 distance in kilometres.
pub fn manhattan(a: GeoPoint, b: GeoPoint) -> f64 {
    (a.x - b.x).abs() + (a.y - b.y).abs()
}

pub type StationId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: StationId,
    pub centroid: GeoPoint,
    pub chargers: usize,
}

/// Charging stations indexed densely by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationLayout {
    stations: Vec<Station>,
}

impl StationLayout {
    pub fn new(stations: Vec<Station>) -> Result<Self, GeoError> {
        if stations.is_empty() {
            return Err(GeoError::EmptyLayout);
        }
        for (index, st) in stations.iter().enumerate() {
            if st.id != index {
                return Err(GeoError::NonDenseIds { index, found: st.id });
            }
            if st.chargers == 0 {
                return Err(GeoError::NoChargers(st.id));
            }
            if !st.centroid.x.is_finite() || !st.centroid.y.is_finite() {
                return Err(GeoError::NonFinite);
            }
        }
        Ok(Self { stations })
    }

    /// Builds a layout from centroids with a uniform charger count.
    pub fn uniform(centroids: &[GeoPoint], chargers: usize) -> Result<Self, GeoError> {
        Self::new(
            centroids
                .iter()
                .enumerate()
                .map(|(id, &centroid)| Station { id, centroid, chargers })
                .collect(),
        )
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn get(&self, id: StationId) -> Option<&Station> {
        self.stations.get(id)
    }

    pub fn centroid(&self, id: StationId) -> GeoPoint {
        self.stations[id].centroid
    }
}

/// Sub-region of `p`: the station with the smallest Manhattan distance to
/// its centroid, smallest id on ties.
pub fn assign_subregion(p: GeoPoint, layout: &StationLayout) -> StationId {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for st in layout.stations() {
        let d = manhattan(p, st.centroid);
        if d < best_d {
            best = st.id;
            best_d = d;
        }
    }
    best
}

/// Distance from `p` to the centroid of its own sub-region.
pub fn distance_to_nearest_station(p: GeoPoint, layout: &StationLayout) -> f64 {
    manhattan(p, layout.centroid(assign_subregion(p, layout)))
}

/// The `m` stations nearest to `station` (centroid to centroid, Manhattan),
/// ascending by distance then id. `station` itself is never included.
pub fn adjacent_subregions(station: StationId, layout: &StationLayout, m: usize) -> Vec<StationId> {
    let here = layout.centroid(station);
    let mut others: Vec<(f64, StationId)> = layout
        .stations()
        .iter()
        .filter(|st| st.id != station)
        .map(|st| (manhattan(here, st.centroid), st.id))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    others.into_iter().take(m).map(|(_, id)| id).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (km).
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { k: 12, seed: 0, max_iter: 300, tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: Vec<GeoPoint>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after each assignment step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KMeansResult {
    pub fn into_layout(self, chargers: usize) -> Result<StationLayout, GeoError> {
        StationLayout::uniform(&self.centroids, chargers)
    }
}

/// Lloyd's algorithm with k-means++ seeding.
pub fn kmeans(points: &[GeoPoint], config: &KMeansConfig) -> Result<KMeansResult, GeoError> {
    let k = config.k;
    if k == 0 {
        return Err(GeoError::ZeroClusters);
    }
    if points.len() < k {
        return Err(GeoError::TooFewPoints { k, points: points.len() });
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(GeoError::NonFinite);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let mut assignments = vec![0usize; points.len()];
    let mut distances = vec![0.0f64; points.len()];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        assign_points(points, &centroids, &mut assignments, &mut distances);
        reseed_empty(k, &mut assignments, &mut distances, &mut centroids, points);
        history.push(distances.iter().sum());

        let updated = cluster_means(points, &assignments, &centroids);
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| a.squared_euclidean(b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        if shift < config.tol {
            converged = true;
            break;
        }
    }

    assign_points(points, &centroids, &mut assignments, &mut distances);
    reseed_empty(k, &mut assignments, &mut distances, &mut centroids, points);
    history.push(distances.iter().sum());

    Ok(KMeansResult { centroids, assignments, objective_history: history, iterations, converged })
}

/// Within-cluster squared Euclidean sum for the given centroids.
pub fn kmeans_objective(points: &[GeoPoint], centroids: &[GeoPoint]) -> f64 {
    points
        .iter()
        .map(|p| centroids.iter().map(|c| p.squared_euclidean(c)).fold(f64::INFINITY, f64::min))
        .sum()
}

fn seed_plus_plus(points: &[GeoPoint], k: usize, rng: &mut ChaCha8Rng) -> Vec<GeoPoint> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| p.squared_euclidean(&centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            // every point already coincides with a centroid
            rng.random_range(0..points.len())
        };
        let c = points[next];
        centroids.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(p.squared_euclidean(&c));
        }
    }
    centroids
}

fn assign_points(points: &[GeoPoint], centroids: &[GeoPoint], assignments: &mut [usize], distances: &mut [f64]) {
    for (i, p) in points.iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, c) in centroids.iter().enumerate() {
            let d = p.squared_euclidean(c);
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        assignments[i] = best;
        distances[i] = best_d;
    }
}

/// Moves every empty cluster onto the point farthest from its current
/// centroid. Each move takes that point's cost to zero.
fn reseed_empty(
    k: usize,
    assignments: &mut [usize],
    distances: &mut [f64],
    centroids: &mut [GeoPoint],
    points: &[GeoPoint],
) {
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for cluster in 0..k {
        if counts[cluster] > 0 {
            continue;
        }
        let far = distances
            .iter()
            .enumerate()
            .filter(|(i, _)| counts[assignments[*i]] > 1)
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i);
        let Some(i) = far else { continue };
        counts[assignments[i]] -= 1;
        counts[cluster] += 1;
        assignments[i] = cluster;
        distances[i] = 0.0;
        centroids[cluster] = points[i];
    }
}

fn cluster_means(points: &[GeoPoint], assignments: &[usize], previous: &[GeoPoint]) -> Vec<GeoPoint> {
    let k = previous.len();
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); k];
    for (p, &a) in points.iter().zip(assignments) {
        sums[a].0 += p.x;
        sums[a].1 += p.y;
        sums[a].2 += 1;
    }
    sums.iter()
        .zip(previous)
        .map(|(&(sx, sy, n), &prev)| if n == 0 { prev } else { GeoPoint::new(sx / n as f64, sy / n as f64) })
        .collect()
}
