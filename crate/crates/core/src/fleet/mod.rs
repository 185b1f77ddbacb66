//! Fleet-level tools: metadata clustering, representative homes and synthetic
//! fleets with known ground truth.

mod kmeans;
mod synth;

pub use kmeans::{
    diminishing_return, kmeans, kmeans_path, nearest, select_k, sse_curve, sse_of, KMeans,
    KSelection, DEFAULT_FLAT_THRESHOLD_PCT, DEFAULT_RESTARTS, MAX_LLOYD_ITERATIONS,
};
pub use synth::{
    analytic_coeffs, synth_fleet, write_fleet, Archetype, FleetConfig, FleetManifest,
    GeneratedHome, ManifestHome, ManifestSeason, ParameterLinks, SeasonProfile, SeasonSettings,
    SyntheticFleet, SyntheticHome, FLEET_CONFIG_VERSION,
};

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeMetadata {
    pub home_id: String,
    pub floor_area: f64,
    pub year_built: i32,
    #[serde(default)]
    pub province: Option<String>,
    #[serde(default)]
    pub city: Option<String>,
}

impl HomeMetadata {
    pub fn validate(&self) -> Result<()> {
        if !(self.floor_area.is_finite() && self.floor_area > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{}: floor area must be positive",
                self.home_id
            )));
        }
        if !(1800..=2100).contains(&self.year_built) {
            return Err(Error::InvalidParameter(format!(
                "{}: year built outside 1800..=2100",
                self.home_id
            )));
        }
        Ok(())
    }

    pub fn features(&self) -> [f64; 2] {
        [self.floor_area, f64::from(self.year_built)]
    }
}

/// `home_id,floor_area,year_built,province,city`.
pub fn read_metadata<R: Read>(source: R) -> Result<Vec<HomeMetadata>> {
    let mut reader = csv::Reader::from_reader(source);
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let m: HomeMetadata = row?;
        m.validate()?;
        out.push(m);
    }
    Ok(out)
}

pub fn write_metadata<W: Write>(homes: &[HomeMetadata], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for h in homes {
        w.serialize(h)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metadata_file(path: impl AsRef<Path>) -> Result<Vec<HomeMetadata>> {
    read_metadata(std::fs::File::open(path)?)
}

/// Per-feature z-score parameters. A zero spread is stored as 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl Standardization {
    pub fn fit(homes: &[HomeMetadata]) -> Result<Self> {
        if homes.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = homes.len() as f64;
        let mut mean = [0.0; 2];
        let mut std = [0.0; 2];
        for j in 0..2 {
            mean[j] = homes.iter().map(|h| h.features()[j]).sum::<f64>() / n;
            let var = homes
                .iter()
                .map(|h| (h.features()[j] - mean[j]).powi(2))
                .sum::<f64>()
                / n;
            std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Ok(Standardization { mean, std })
    }

    pub fn apply(&self, m: &HomeMetadata) -> Vec<f64> {
        let f = m.features();
        (0..2)
            .map(|j| (f[j] - self.mean[j]) / self.std[j])
            .collect()
    }
}

/// Metadata clustering in standardized `(floor_area, year_built)` space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: BTreeMap<String, usize>,
    pub sse: f64,
    pub standardization: Standardization,
}

impl Clustering {
    pub fn members(&self, cluster: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &c)| c == cluster)
            .map(|(h, _)| h.as_str())
            .collect()
    }
}

fn unique_ids(homes: &[HomeMetadata]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for h in homes {
        h.validate()?;
        if !seen.insert(h.home_id.as_str()) {
            return Err(Error::InvalidParameter(format!(
                "duplicate home id {}",
                h.home_id
            )));
        }
    }
    Ok(())
}

fn from_run(homes: &[HomeMetadata], z: Standardization, run: KMeans) -> Clustering {
    let assignments = homes
        .iter()
        .zip(&run.labels)
        .map(|(h, &l)| (h.home_id.clone(), l))
        .collect();
    Clustering {
        k: run.centroids.len(),
        centroids: run.centroids,
        assignments,
        sse: run.sse,
        standardization: z,
    }
}

pub fn cluster_homes(
    homes: &[HomeMetadata],
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<Clustering> {
    unique_ids(homes)?;
    let z = Standardization::fit(homes)?;
    let points: Vec<Vec<f64>> = homes.iter().map(|h| z.apply(h)).collect();
    let run = kmeans(&points, k, seed, restarts)?;
    Ok(from_run(homes, z, run))
}

/// Elbow analysis over `1..=k_max` and the clustering at the selected `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowReport {
    pub sse: Vec<f64>,
    pub diminishing_return_pct: Vec<f64>,
    pub threshold_pct: f64,
    pub k: usize,
    pub flat: bool,
    pub clustering: Clustering,
}

pub fn cluster_by_elbow(
    homes: &[HomeMetadata],
    k_max: usize,
    seed: u64,
    threshold_pct: f64,
) -> Result<ElbowReport> {
    unique_ids(homes)?;
    let z = Standardization::fit(homes)?;
    let points: Vec<Vec<f64>> = homes.iter().map(|h| z.apply(h)).collect();
    let k_max = k_max.min(points.len());
    let path = kmeans_path(&points, k_max, seed, DEFAULT_RESTARTS)?;
    let sse: Vec<f64> = path.iter().map(|r| r.sse).collect();
    let (d, sel) = if sse.len() >= 2 && sse[0] > 0.0 {
        // positions past a zero SSE carry no information; treat as flat
        let limit = sse
            .iter()
            .position(|&s| s == 0.0)
            .map_or(sse.len(), |i| i + 1);
        let d = diminishing_return(&sse[..limit])?;
        let mut sel = select_k(&d, threshold_pct);
        if limit < sse.len() && !sel.flat {
            sel = KSelection {
                k: limit,
                flat: true,
            };
        }
        (d, sel)
    } else {
        (Vec::new(), KSelection { k: 1, flat: true })
    };
    let run = path[sel.k - 1].clone();
    Ok(ElbowReport {
        sse,
        diminishing_return_pct: d,
        threshold_pct,
        k: sel.k,
        flat: sel.flat,
        clustering: from_run(homes, z, run),
    })
}

/// Member nearest the centroid; ties go to the smallest id.
pub fn representative(
    clustering: &Clustering,
    cluster: usize,
    homes: &[HomeMetadata],
) -> Result<String> {
    let centroid = clustering
        .centroids
        .get(cluster)
        .ok_or_else(|| Error::Infeasible(format!("no cluster {cluster}")))?;
    let mut best: Option<(f64, &str)> = None;
    for h in homes {
        if clustering.assignments.get(&h.home_id) != Some(&cluster) {
            continue;
        }
        let p = clustering.standardization.apply(h);
        let d: f64 = p.iter().zip(centroid).map(|(a, b)| (a - b) * (a - b)).sum();
        let better = match best {
            None => true,
            Some((bd, bid)) => d < bd || (d == bd && h.home_id.as_str() < bid),
        };
        if better {
            best = Some((d, h.home_id.as_str()));
        }
    }
    best.map(|(_, id)| id.to_string())
        .ok_or_else(|| Error::Infeasible(format!("cluster {cluster} is empty")))
}

pub fn assign(metadata: &HomeMetadata, clustering: &Clustering) -> usize {
    nearest(
        &clustering.standardization.apply(metadata),
        &clustering.centroids,
    )
}
