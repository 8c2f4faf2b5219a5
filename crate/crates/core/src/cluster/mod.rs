//! Aggregation of projected detections into lamp clusters, per-cluster
//! identification and localization statistics against reference lamps.

mod report;

pub use report::{write_clusters_csv, write_confusion_csv, write_lamp_fragment, write_svg};

use std::collections::BTreeMap;

use crate::bim::Detection;
use crate::error::{invalid, Result};
use crate::pose::Vec3;

pub const DEFAULT_CLUSTER_RADIUS: f64 = 0.5;

/// Clusters further than this from every unmatched reference stay unlinked.
pub const REFERENCE_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Mean of the member positions.
    pub center: Vec3,
    /// Indices into the detection slice, in insertion order.
    pub members: Vec<usize>,
    /// Summed detection score per model id.
    pub accumulated_score: BTreeMap<u32, f64>,
    pub winning_model: u32,
    pub state: bool,
    pub reference_id: Option<usize>,
}

/// A ground-truth lamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub position: Vec3,
    pub model_id: u32,
    pub state: bool,
}

/// Greedy single-pass clustering. Detections are visited by frame (stable in
/// input order); each joins the nearest cluster whose running center lies
/// within `radius`, the earliest cluster on ties, or seeds a new one.
pub fn cluster(detections: &[Detection], radius: f64) -> Result<Vec<Cluster>> {
    if !(radius > 0.0) {
        return Err(invalid(format!("cluster radius {radius} must be positive")));
    }
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by_key(|&i| detections[i].frame_index);
    let mut clusters: Vec<Cluster> = Vec::new();
    for i in order {
        let p = detections[i].position;
        let nearest = clusters
            .iter()
            .enumerate()
            .map(|(k, c)| (k, (c.center - p).norm()))
            .filter(|&(_, d)| d <= radius)
            .fold(None, |best: Option<(usize, f64)>, cand| match best {
                Some(b) if b.1 <= cand.1 => Some(b),
                _ => Some(cand),
            });
        match nearest {
            Some((k, _)) => {
                let c = &mut clusters[k];
                c.members.push(i);
                c.center += (p - c.center) / c.members.len() as f64;
            }
            None => clusters.push(Cluster {
                center: p,
                members: vec![i],
                accumulated_score: BTreeMap::new(),
                winning_model: 0,
                state: false,
                reference_id: None,
            }),
        }
    }
    for c in &mut clusters {
        // Recomputed from scratch so the center is the exact member mean.
        c.center = c.members.iter().map(|&i| detections[i].position).sum::<Vec3>()
            / c.members.len() as f64;
        c.accumulated_score.clear();
        for &i in &c.members {
            *c.accumulated_score.entry(detections[i].model_id).or_insert(0.0) += detections[i].score;
        }
        (c.winning_model, c.state) = identify(c, detections);
    }
    Ok(clusters)
}

/// Model with the highest accumulated score, lowest id on ties; state by
/// score-weighted majority, off on ties.
pub fn identify(cluster: &Cluster, detections: &[Detection]) -> (u32, bool) {
    let mut model = 0;
    let mut best = f64::NEG_INFINITY;
    // BTreeMap iterates ids in ascending order, so strict > keeps the lowest.
    for (&m, &s) in &cluster.accumulated_score {
        if s > best {
            best = s;
            model = m;
        }
    }
    let (on, off) = cluster.members.iter().fold((0.0, 0.0), |(on, off), &i| {
        let d = &detections[i];
        if d.state {
            (on + d.score, off)
        } else {
            (on, off + d.score)
        }
    });
    (model, on > off)
}

/// Greedy nearest-pair matching: pairs within `REFERENCE_RADIUS` are taken
/// in increasing distance, each cluster and reference at most once.
pub fn associate(clusters: &[Cluster], references: &[Reference]) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ci, c) in clusters.iter().enumerate() {
        for (ri, r) in references.iter().enumerate() {
            let d = (c.center - r.position).norm();
            if d <= REFERENCE_RADIUS {
                pairs.push((d, ci, ri));
            }
        }
    }
    pairs.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let mut links = vec![None; clusters.len()];
    let mut taken = vec![false; references.len()];
    for (_, ci, ri) in pairs {
        if links[ci].is_none() && !taken[ri] {
            links[ci] = Some(ri);
            taken[ri] = true;
        }
    }
    links
}

/// Population mean and variance; `(0, 0)` for an empty sample.
fn mean_var(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelStats {
    pub clusters: usize,
    pub detections: usize,
    pub mean_dist_to_center: f64,
    pub var_dist_to_center: f64,
    pub mean_dist_to_reference: Option<f64>,
}

/// Distances in centimetres, variances in cm².
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalizationStats {
    /// Over all detections, each against its own cluster center.
    pub mean_dist_to_center: f64,
    pub var_dist_to_center: f64,
    /// Over clusters, each against its nearest reference; `None` without
    /// references.
    pub mean_dist_to_reference: Option<f64>,
    /// Keyed by the clusters' winning model.
    pub per_model: BTreeMap<u32, ModelStats>,
}

/// `counts[e][d]` counts detections of model `models[d]` whose cluster links
/// to a reference of model `models[e]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfusionMatrix {
    pub models: Vec<u32>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn get(&self, expected: u32, detected: u32) -> usize {
        match (self.index(expected), self.index(detected)) {
            (Some(e), Some(d)) => self.counts[e][d],
            _ => 0,
        }
    }

    fn index(&self, model: u32) -> Option<usize> {
        self.models.binary_search(&model).ok()
    }

    pub fn trace(&self) -> usize {
        (0..self.models.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Fraction of linked detections carrying their reference's model;
    /// `None` when nothing was linked.
    pub fn accuracy(&self) -> Option<f64> {
        let t = self.total();
        (t > 0).then(|| self.trace() as f64 / t as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectionCounts {
    pub detections: usize,
    pub clusters: usize,
    pub references: usize,
    pub linked_clusters: usize,
    /// Linked clusters whose winning model matches the reference.
    pub identified_clusters: usize,
    /// Linked clusters whose state matches the reference.
    pub correct_states: usize,
    /// Detections whose cluster links to a reference of the detection's model.
    pub correct_detections: usize,
}

impl DetectionCounts {
    pub fn cluster_identification(&self) -> Option<f64> {
        (self.linked_clusters > 0)
            .then(|| self.identified_clusters as f64 / self.linked_clusters as f64)
    }

    pub fn detection_identification_error(&self) -> Option<f64> {
        (self.detections > 0)
            .then(|| 1.0 - self.correct_detections as f64 / self.detections as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterStats {
    pub localization: LocalizationStats,
    /// Empty when there are no references.
    pub confusion: ConfusionMatrix,
    pub counts: DetectionCounts,
    /// Reference index per cluster, from [`associate`].
    pub links: Vec<Option<usize>>,
}

pub fn compute_stats(
    clusters: &[Cluster],
    detections: &[Detection],
    references: &[Reference],
) -> ClusterStats {
    const CM: f64 = 100.0;
    let links = associate(clusters, references);
    let nearest_ref = |c: &Cluster| {
        references
            .iter()
            .map(|r| (c.center - r.position).norm() * CM)
            .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))))
    };

    let mut all = Vec::new();
    let mut by_model: BTreeMap<u32, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut ref_dists = Vec::new();
    for c in clusters {
        let entry = by_model.entry(c.winning_model).or_default();
        entry.0 += 1;
        for &i in &c.members {
            let d = (detections[i].position - c.center).norm() * CM;
            all.push(d);
            entry.1.push(d);
        }
        if let Some(d) = nearest_ref(c) {
            ref_dists.push(d);
            entry.2.push(d);
        }
    }
    let (mean, var) = mean_var(&all);
    let per_model = by_model
        .into_iter()
        .map(|(m, (n, ds, rs))| {
            let (mean, var) = mean_var(&ds);
            let stats = ModelStats {
                clusters: n,
                detections: ds.len(),
                mean_dist_to_center: mean,
                var_dist_to_center: var,
                mean_dist_to_reference: (!rs.is_empty()).then(|| mean_var(&rs).0),
            };
            (m, stats)
        })
        .collect();
    let localization = LocalizationStats {
        mean_dist_to_center: mean,
        var_dist_to_center: var,
        mean_dist_to_reference: (!references.is_empty()).then(|| mean_var(&ref_dists).0),
        per_model,
    };

    let mut models: Vec<u32> = references.iter().map(|r| r.model_id).collect();
    if !references.is_empty() {
        models.extend(detections.iter().map(|d| d.model_id));
    }
    models.sort_unstable();
    models.dedup();
    let mut confusion = ConfusionMatrix {
        counts: vec![vec![0; models.len()]; models.len()],
        models,
    };
    let mut counts = DetectionCounts {
        detections: detections.len(),
        clusters: clusters.len(),
        references: references.len(),
        ..Default::default()
    };
    for (c, link) in clusters.iter().zip(&links) {
        let Some(r) = link.map(|r| &references[r]) else {
            continue;
        };
        counts.linked_clusters += 1;
        counts.identified_clusters += usize::from(c.winning_model == r.model_id);
        counts.correct_states += usize::from(c.state == r.state);
        let e = confusion.index(r.model_id).expect("reference models are indexed");
        for &i in &c.members {
            let m = detections[i].model_id;
            counts.correct_detections += usize::from(m == r.model_id);
            let d = confusion.index(m).expect("detection models are indexed");
            confusion.counts[e][d] += 1;
        }
    }
    ClusterStats {
        localization,
        confusion,
        counts,
        links,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(p: [f64; 3], model: u32, score: f64, state: bool, frame: usize) -> Detection {
        Detection::new(Vec3::new(p[0], p[1], p[2]), Vec3::new(0.0, 0.0, -10.0), model, score, state, frame).unwrap()
    }

    /// Straightforward re-implementation used as an oracle: running sums
    /// instead of incremental means, linear scan over frames.
    fn reference_clusters(ds: &[Detection], radius: f64) -> Vec<Vec<usize>> {
        let max_frame = ds.iter().map(|d| d.frame_index).max().unwrap_or(0);
        let mut sums: Vec<(Vec3, Vec<usize>)> = Vec::new();
        for f in 0..=max_frame {
            for (i, d) in ds.iter().enumerate().filter(|(_, d)| d.frame_index == f) {
                let mut best: Option<(usize, f64)> = None;
                for (k, (s, m)) in sums.iter().enumerate() {
                    let dist = (s / m.len() as f64 - d.position).norm();
                    if dist <= radius && best.map_or(true, |b| dist < b.1) {
                        best = Some((k, dist));
                    }
                }
                match best {
                    Some((k, _)) => {
                        sums[k].0 += d.position;
                        sums[k].1.push(i);
                    }
                    None => sums.push((d.position, vec![i])),
                }
            }
        }
        sums.into_iter().map(|(_, m)| m).collect()
    }

    #[test]
    fn two_groups() {
        let mut ds = Vec::new();
        for i in 0..5 {
            ds.push(det([0.05 * i as f64, 0.0, 3.0], 1, 1.0, true, i));
            ds.push(det([2.0 + 0.05 * i as f64, 0.0, 3.0], 2, 1.0, false, i));
        }
        let cs = cluster(&ds, 0.5).unwrap();
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].members.len(), 5);
        assert_eq!((cs[0].winning_model, cs[0].state), (1, true));
        assert_eq!((cs[1].winning_model, cs[1].state), (2, false));
        assert!(cluster(&[], 0.5).unwrap().is_empty());
        assert!(cluster(&ds, 0.0).is_err());
    }

    #[test]
    fn chain_matches_reference_implementation() {
        let ds: Vec<Detection> = (0..12)
            .map(|i| det([0.4 * i as f64, 0.0, 3.0], 1, 1.0, true, (7 * i) % 5))
            .collect();
        let got: Vec<Vec<usize>> = cluster(&ds, 0.5).unwrap().into_iter().map(|c| c.members).collect();
        assert_eq!(got, reference_clusters(&ds, 0.5));
    }

    #[test]
    fn identification_rules() {
        let ds = vec![
            det([0.0, 0.0, 3.0], 1, 1.0, true, 0),
            det([0.0, 0.0, 3.0], 1, 1.0, false, 1),
            det([0.0, 0.0, 3.0], 2, 0.95, true, 2),
            det([0.0, 0.0, 3.0], 2, 0.95, false, 3),
        ];
        let c = &cluster(&ds, 0.5).unwrap()[0];
        assert_eq!(c.accumulated_score[&1], 2.0);
        assert_eq!(c.winning_model, 1);
        // On and off carry equal weight.
        assert!(!c.state);

        let tie = vec![det([0.0, 0.0, 3.0], 4, 0.5, true, 0), det([0.0, 0.0, 3.0], 3, 0.5, true, 1)];
        assert_eq!(identify(&cluster(&tie, 0.5).unwrap()[0], &tie), (3, true));
    }

    #[test]
    fn stats_examples() {
        let ds = vec![det([1.0, 1.0, 3.0], 1, 1.0, true, 0), det([1.0, 1.0, 3.0], 1, 1.0, true, 1)];
        let cs = cluster(&ds, 0.5).unwrap();
        let s = compute_stats(&cs, &ds, &[]);
        assert_eq!((s.localization.mean_dist_to_center, s.localization.var_dist_to_center), (0.0, 0.0));
        assert_eq!(s.localization.mean_dist_to_reference, None);
        assert!(s.confusion.models.is_empty());

        let ds = vec![det([0.9, 1.0, 3.0], 2, 1.0, true, 0), det([1.1, 1.0, 3.0], 2, 1.0, true, 1)];
        let cs = cluster(&ds, 0.5).unwrap();
        let refs = [Reference { position: Vec3::new(1.0, 1.0, 3.1), model_id: 2, state: true }];
        let s = compute_stats(&cs, &ds, &refs);
        assert!((s.localization.mean_dist_to_center - 10.0).abs() < 1e-9);
        assert!(s.localization.var_dist_to_center.abs() < 1e-9);
        assert!((s.localization.mean_dist_to_reference.unwrap() - 10.0).abs() < 1e-9);
        assert_eq!(s.links, vec![Some(0)]);
        assert_eq!(s.counts.correct_detections, 2);
        assert_eq!(s.confusion.accuracy(), Some(1.0));
    }

    #[test]
    fn references_are_matched_once() {
        let ds = vec![det([0.0, 0.0, 3.0], 1, 1.0, true, 0), det([0.55, 0.0, 3.0], 1, 1.0, true, 1)];
        let cs = cluster(&ds, 0.5).unwrap();
        assert_eq!(cs.len(), 2);
        let refs = [Reference { position: Vec3::new(0.3, 0.0, 3.0), model_id: 1, state: true }];
        // Cluster 1 is 0.25 m away, cluster 0 is 0.3 m away.
        assert_eq!(associate(&cs, &refs), vec![None, Some(0)]);
        let s = compute_stats(&cs, &ds, &refs);
        assert_eq!(s.counts.linked_clusters, 1);
        assert_eq!(s.confusion.total(), 1);
    }

    fn detections() -> impl Strategy<Value = Vec<Detection>> {
        proptest::collection::vec(
            ((0.0f64..4.0, 0.0f64..4.0, 2.8f64..3.2), 1u32..6, 0.01f64..1.0, any::<bool>(), 0usize..20),
            0..60,
        )
        .prop_map(|v| v.into_iter().map(|((x, y, z), m, s, on, f)| det([x, y, z], m, s, on, f)).collect())
    }

    proptest! {
        #[test]
        fn centers_are_member_means_and_partition(ds in detections(), radius in 0.1f64..1.5) {
            let cs = cluster(&ds, radius).unwrap();
            let mut seen: Vec<usize> = cs.iter().flat_map(|c| c.members.clone()).collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..ds.len()).collect::<Vec<_>>());
            for c in &cs {
                let mean = c.members.iter().map(|&i| ds[i].position).sum::<Vec3>() / c.members.len() as f64;
                prop_assert!((c.center - mean).norm() < 1e-9);
                let best = c.accumulated_score.values().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(c.accumulated_score[&c.winning_model], best);
                prop_assert!(c.accumulated_score.iter().all(|(&m, &s)| s < best || m >= c.winning_model));
            }
            let got: Vec<Vec<usize>> = cs.into_iter().map(|c| c.members).collect();
            prop_assert_eq!(got, reference_clusters(&ds, radius));
        }

        #[test]
        fn identification_ignores_score_scale(ds in detections(), k in 0.01f64..1.0) {
            let scaled: Vec<Detection> = ds.iter().map(|d| Detection { score: d.score * k, ..d.clone() }).collect();
            let a = cluster(&ds, 0.5).unwrap();
            let b = cluster(&scaled, 0.5).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.winning_model, y.winning_model);
            }
        }

        #[test]
        fn confusion_rows_and_trace(ds in detections(), n_refs in 1usize..8) {
            let cs = cluster(&ds, 0.5).unwrap();
            let refs: Vec<Reference> = (0..n_refs)
                .map(|i| Reference { position: Vec3::new(0.5 * i as f64, 0.5 * i as f64, 3.0), model_id: 1 + (i as u32 % 5), state: true })
                .collect();
            let s = compute_stats(&cs, &ds, &refs);
            prop_assert!(s.localization.var_dist_to_center >= 0.0);
            for (e, &m) in s.confusion.models.iter().enumerate() {
                let expected: usize = cs.iter().zip(&s.links)
                    .filter(|(_, l)| l.map_or(false, |r| refs[r].model_id == m))
                    .map(|(c, _)| c.members.len())
                    .sum();
                prop_assert_eq!(s.confusion.counts[e].iter().sum::<usize>(), expected);
            }
            prop_assert_eq!(s.confusion.trace(), s.counts.correct_detections);

            // Relabel every detection with its linked reference's model.
            let mut relabeled = ds.clone();
            for (c, l) in cs.iter().zip(&s.links) {
                if let Some(r) = l {
                    for &i in &c.members {
                        relabeled[i].model_id = refs[*r].model_id;
                    }
                }
            }
            let t = compute_stats(&cs, &relabeled, &refs);
            if t.confusion.total() > 0 {
                prop_assert_eq!(t.confusion.accuracy(), Some(1.0));
            }
        }
    }
}
