use etaxi::geo::{self, GeoPoint, KMeansConfig, LonLat, Projection, StationLayout};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn point() -> impl Strategy<Value = GeoPoint> {
    (-1e3f64..1e3, -1e3f64..1e3).prop_map(|(x, y)| GeoPoint::new(x, y))
}

fn layout_strategy() -> impl Strategy<Value = StationLayout> {
    prop::collection::vec(point(), 1..15).prop_map(|c| StationLayout::uniform(&c, 2).unwrap())
}

proptest! {
    #[test]
    fn manhattan_is_a_metric(a in point(), b in point(), c in point()) {
        prop_assert_eq!(geo::manhattan(a, a), 0.0);
        prop_assert_eq!(geo::manhattan(a, b), geo::manhattan(b, a));
        prop_assert!(geo::manhattan(a, b) >= 0.0);
        prop_assert!(geo::manhattan(a, c) <= geo::manhattan(a, b) + geo::manhattan(b, c) + 1e-9);
    }

    #[test]
    fn subregion_is_exhaustive_min(layout in layout_strategy(), p in point()) {
        let got = geo::assign_subregion(p, &layout);
        let mut best = 0;
        for s in layout.stations() {
            if geo::manhattan(p, s.centroid) < geo::manhattan(p, layout.centroid(best)) {
                best = s.id;
            }
        }
        prop_assert_eq!(got, best);
    }

    #[test]
    fn adjacency_matches_sort(layout in layout_strategy(), m in 0usize..20) {
        for s in 0..layout.len() {
            let here = layout.centroid(s);
            let mut brute: Vec<(f64, usize)> = (0..layout.len())
                .filter(|&o| o != s)
                .map(|o| (geo::manhattan(here, layout.centroid(o)), o))
                .collect();
            brute.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expected: Vec<usize> = brute.into_iter().take(m).map(|(_, o)| o).collect();
            prop_assert_eq!(geo::adjacent_subregions(s, &layout, m), expected);
        }
    }

    #[test]
    fn kmeans_objective_never_increases(seed in 0u64..1000, n in 5usize..120, k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<GeoPoint> = (0..n).map(|_| GeoPoint::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0))).collect();
        let r = geo::kmeans(&pts, &KMeansConfig { k, seed, ..Default::default() }).unwrap();
        for w in r.objective_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", r.objective_history);
        }
    }
}

#[test]
fn projection_anchors() {
    let reference = LonLat::new(116.397, 39.908);
    let proj = Projection::new(reference);
    assert_eq!(proj.project(reference), GeoPoint::ORIGIN);
    let north = proj.project(LonLat::new(reference.lon, reference.lat + 1.0));
    assert!((north.y - 110.57).abs() < 1e-9 && north.x.abs() < 1e-12);
}

#[test]
fn projection_injective_on_grid() {
    let reference = LonLat::new(116.397, 39.908);
    let proj = Projection::new(reference);
    let n = 101;
    let mut seen = std::collections::HashSet::new();
    for i in 0..n {
        for j in 0..n {
            let lon = 115.9 + i as f64 / (n - 1) as f64;
            let lat = 39.4 + j as f64 / (n - 1) as f64;
            let p = proj.project(LonLat::new(lon, lat));
            assert!(seen.insert((p.x.to_bits(), p.y.to_bits())), "collision at ({lon}, {lat})");
            let back = proj.unproject(p);
            assert!((back.lon - lon).abs() < 1e-9 && (back.lat - lat).abs() < 1e-9);
        }
    }
}

#[test]
fn two_blobs_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let centers = [GeoPoint::new(-15.0, 5.0), GeoPoint::new(12.0, -8.0)];
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut pts = Vec::new();
    let mut means = [GeoPoint::ORIGIN; 2];
    for (i, c) in centers.iter().enumerate() {
        let blob: Vec<GeoPoint> =
            (0..500).map(|_| GeoPoint::new(c.x + noise.sample(&mut rng), c.y + noise.sample(&mut rng))).collect();
        means[i] = GeoPoint::new(blob.iter().map(|p| p.x).sum::<f64>() / 500.0, blob.iter().map(|p| p.y).sum::<f64>() / 500.0);
        pts.extend(blob);
    }
    let r = geo::kmeans(&pts, &KMeansConfig { k: 2, seed: 1, ..Default::default() }).unwrap();
    assert!(r.converged);
    for m in means {
        let nearest = r.centroids.iter().map(|&c| geo::manhattan(c, m)).fold(f64::INFINITY, f64::min);
        assert!(nearest < 1e-6, "blob mean {m:?} not recovered: {:?}", r.centroids);
    }
}

#[test]
fn kmeans_into_layout() {
    let pts: Vec<GeoPoint> = (0..40).map(|i| GeoPoint::new((i % 8) as f64, (i / 8) as f64)).collect();
    let r = geo::kmeans(&pts, &KMeansConfig { k: 4, seed: 2, ..Default::default() }).unwrap();
    let obj = geo::kmeans_objective(&pts, &r.centroids);
    assert!((obj - r.objective_history.last().unwrap()).abs() < 1e-9);
    let layout = r.into_layout(5).unwrap();
    assert_eq!(layout.len(), 4);
    assert!(layout.stations().iter().all(|s| s.chargers == 5));
}
