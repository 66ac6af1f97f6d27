//! Pilot assignment by k-means clustering, uplink training and local LMMSE
//! channel estimation at every AP and BS.

use log::warn;
use nalgebra::{Cholesky, DVector, Dyn};
use rand::{Rng, SeedableRng};

use crate::error::{Result, SimError};
use crate::geometry::Point;
use crate::linalg::{circular_normal, CMat, CVec, C64, SOLVE_RIDGE};
use crate::propagation::{ChannelSet, LargeScaleSet};

pub const KMEANS_MAX_ITERS: usize = 100;

/// Orthonormal pilot book realized as the columns of the `tau_p x tau_p`
/// identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotBook {
    pub tau_p: usize,
    /// Pilot index (0-based) per user.
    pub assignment: Vec<usize>,
    /// k-means cluster per user.
    pub clusters: Vec<usize>,
}

impl PilotBook {
    pub fn sequence(&self, pilot: usize) -> CVec {
        DVector::from_fn(self.tau_p, |i, _| if i == pilot { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    pub fn pilot_of(&self, k: usize) -> usize {
        self.assignment[k]
    }

    /// `|phi_i^H phi_k|^2`.
    pub fn overlap(&self, i: usize, k: usize) -> f64 {
        if self.assignment[i] == self.assignment[k] {
            1.0
        } else {
            0.0
        }
    }

    pub fn n_users(&self) -> usize {
        self.assignment.len()
    }

    pub fn co_pilot_users(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let p = self.assignment[k];
        self.assignment.iter().enumerate().filter(move |(_, &q)| q == p).map(|(i, _)| i)
    }

    /// `user_id,pilot_id,cluster_id` rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["user_id", "pilot_id", "cluster_id"])?;
        for (k, (&p, &c)) in self.assignment.iter().zip(&self.clusters).enumerate() {
            wr.serialize((k, p, c))?;
        }
        wr.flush().map_err(|e| SimError::io("<pilots>", e))?;
        Ok(())
    }
}

fn grid_centroids(points: &[Point], n: usize) -> Vec<Point> {
    let (min_x, max_x) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.x), a.1.max(p.x)));
    let (min_y, max_y) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.y), a.1.max(p.y)));
    let (w, h) = (max_x - min_x, max_y - min_y);
    let cols = if h <= 0.0 {
        n
    } else {
        ((n as f64 * w / h).sqrt().round() as usize).clamp(1, n)
    };
    let rows = n.div_ceil(cols);
    (0..n)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            Point::new(
                min_x + w * (c as f64 + 0.5) / cols as f64,
                min_y + h * (r as f64 + 0.5) / rows as f64,
            )
        })
        .collect()
}

fn nearest(p: &Point, centroids: &[Point]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = p.dist(c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Lloyd iterations from a regular-grid start. Returns the cluster of every
/// point and the final centroids.
pub fn kmeans(points: &[Point], n_clusters: usize) -> (Vec<usize>, Vec<Point>) {
    let mut centroids = grid_centroids(points, n_clusters);
    let mut labels: Vec<usize> = vec![usize::MAX; points.len()];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();

        // empty cluster: move its centroid onto the point farthest from its own centroid
        for c in 0..n_clusters {
            if next.contains(&c) {
                continue;
            }
            let mut far = None;
            let mut far_d = -1.0;
            for (i, p) in points.iter().enumerate() {
                let own = next[i];
                if next.iter().filter(|&&l| l == own).count() < 2 {
                    continue;
                }
                let d = p.dist(&centroids[own]);
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
            if let Some(i) = far {
                centroids[c] = points[i];
                next[i] = c;
            }
        }

        let changed = next != labels;
        labels = next;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Point> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            if !members.is_empty() {
                let n = members.len() as f64;
                *centroid = Point::new(
                    members.iter().map(|p| p.x).sum::<f64>() / n,
                    members.iter().map(|p| p.y).sum::<f64>() / n,
                );
            }
        }
        if !changed {
            break;
        }
    }
    (labels, centroids)
}

/// Assigns `tau_p` orthogonal pilots so that co-pilot users fall in
/// different k-means clusters; within a cluster pilots go by decreasing
/// latitude (`y`), ties to the smaller `x`.
pub fn assign_pilots(ue_positions: &[Point], tau_p: usize) -> Result<PilotBook> {
    if tau_p == 0 {
        return Err(SimError::invalid("tau_p must be at least 1"));
    }
    if ue_positions.is_empty() {
        return Err(SimError::invalid("pilot assignment needs at least one user"));
    }
    let k = ue_positions.len();
    let n_clusters = k.div_ceil(tau_p);
    let (mut labels, centroids) = kmeans(ue_positions, n_clusters);

    // a cluster may not hold more users than there are pilots
    loop {
        let counts: Vec<usize> = (0..n_clusters).map(|c| labels.iter().filter(|&&l| l == c).count()).collect();
        let Some(over) = (0..n_clusters).find(|&c| counts[c] > tau_p) else {
            break;
        };
        let mover = (0..k)
            .filter(|&i| labels[i] == over)
            .max_by(|&a, &b| {
                ue_positions[a]
                    .dist(&centroids[over])
                    .total_cmp(&ue_positions[b].dist(&centroids[over]))
                    .then(b.cmp(&a))
            })
            .expect("overfull cluster has members");
        let target = (0..n_clusters)
            .filter(|&c| counts[c] < tau_p)
            .min_by(|&a, &b| {
                ue_positions[mover]
                    .dist(&centroids[a])
                    .total_cmp(&ue_positions[mover].dist(&centroids[b]))
                    .then(a.cmp(&b))
            })
            .expect("total pilot capacity covers all users");
        labels[mover] = target;
    }

    let mut assignment = vec![0; k];
    for c in 0..n_clusters {
        let mut members: Vec<usize> = (0..k).filter(|&i| labels[i] == c).collect();
        members.sort_by(|&a, &b| {
            let (pa, pb) = (&ue_positions[a], &ue_positions[b]);
            pb.y.total_cmp(&pa.y).then(pa.x.total_cmp(&pb.x)).then(a.cmp(&b))
        });
        for (rank, &u) in members.iter().enumerate() {
            assignment[u] = rank;
        }
    }
    Ok(PilotBook {
        tau_p,
        assignment,
        clusters: labels,
    })
}

/// Received training blocks, `N x tau_p` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingObservations {
    pub ap: Vec<CMat>,
    pub bs: Vec<CMat>,
}

fn training_block<'a, R: Rng + ?Sized>(
    n_ant: usize,
    book: &PilotBook,
    train_powers: &[f64],
    channel_of: impl Fn(usize) -> &'a CVec,
    noise_var: f64,
    rng: &mut R,
) -> CMat {
    let mut y = CMat::zeros(n_ant, book.tau_p);
    for (i, &p) in book.assignment.iter().enumerate() {
        let s = C64::new(train_powers[i].sqrt(), 0.0);
        let mut col = y.column_mut(p);
        col.axpy(s, channel_of(i), C64::new(1.0, 0.0));
    }
    if noise_var > 0.0 {
        for p in 0..book.tau_p {
            let w = circular_normal(rng, n_ant, noise_var);
            let mut col = y.column_mut(p);
            col += w;
        }
    }
    y
}

/// `Y_n = sum_i sqrt(eta_i) h_{i,n} phi_i^H + W_n` at every AP and BS.
pub fn uplink_training_rx<R: Rng + ?Sized>(
    channels: &ChannelSet,
    book: &PilotBook,
    train_powers: &[f64],
    noise_var: f64,
    rng: &mut R,
) -> TrainingObservations {
    let n_ant_ap = channels.g.first().map_or(0, |v| v.len());
    let n_ant_bs = channels.h.first().map_or(0, |v| v.len());
    let ap = (0..channels.n_aps)
        .map(|m| training_block(n_ant_ap, book, train_powers, |i| channels.g(i, m), noise_var, rng))
        .collect();
    let bs = (0..channels.n_bs)
        .map(|l| training_block(n_ant_bs, book, train_powers, |i| channels.h(i, l), noise_var, rng))
        .collect();
    TrainingObservations { ap, bs }
}

type Factor = Cholesky<C64, Dyn>;

fn factor(b: CMat) -> Factor {
    let n = b.nrows();
    match b.clone().cholesky() {
        Some(c) => c,
        None => {
            warn!("training covariance is singular, adding {SOLVE_RIDGE:e} ridge");
            let scale = (0..n).map(|i| b[(i, i)].re.abs()).fold(0.0, f64::max).max(1.0);
            let mut shift = SOLVE_RIDGE * scale;
            loop {
                let r = &b + CMat::identity(n, n) * C64::new(shift, 0.0);
                if let Some(c) = r.cholesky() {
                    break c;
                }
                shift *= 10.0;
            }
        }
    }
}

/// LMMSE channel estimates plus the per-(node, pilot) factorization of the
/// training covariance `B = sum_i eta_i G_i |phi_i^H phi_k|^2 + sigma_w^2 I`.
#[derive(Debug, Clone)]
pub struct EstimateSet {
    pub n_ues: usize,
    pub n_aps: usize,
    pub n_bs: usize,
    pub n_ant_ap: usize,
    pub n_ant_bs: usize,
    pub g_hat: Vec<CVec>,
    pub h_hat: Vec<CVec>,
    pub train_powers: Vec<f64>,
    pilots: Vec<usize>,
    tau_p: usize,
    ap_factors: Vec<Option<Factor>>,
    bs_factors: Vec<Option<Factor>>,
}

impl EstimateSet {
    pub fn g_hat(&self, k: usize, m: usize) -> &CVec {
        &self.g_hat[k * self.n_aps + m]
    }

    pub fn h_hat(&self, k: usize, l: usize) -> &CVec {
        &self.h_hat[k * self.n_bs + l]
    }

    /// Estimate toward the merged node index (APs first).
    pub fn merged(&self, k: usize, n: usize) -> &CVec {
        if n < self.n_aps {
            self.g_hat(k, n)
        } else {
            self.h_hat(k, n - self.n_aps)
        }
    }

    fn node_factor(&self, k: usize, n: usize) -> &Factor {
        let p = self.pilots[k];
        let f = if n < self.n_aps {
            &self.ap_factors[n * self.tau_p + p]
        } else {
            &self.bs_factors[(n - self.n_aps) * self.tau_p + p]
        };
        f.as_ref().expect("factor exists for every used pilot")
    }

    /// Training covariance `B_{k,n}` (merged node index).
    pub fn training_covariance(&self, k: usize, n: usize) -> CMat {
        let l = self.node_factor(k, n).l();
        &l * l.adjoint()
    }

    /// `eta_k G B^{-1} G`, the covariance of the estimate of link `(k, n)`.
    pub fn estimate_covariance(&self, k: usize, n: usize, large: &LargeScaleSet) -> CMat {
        let g = link_covariance(large, k, n, self.n_ant_ap, self.n_ant_bs);
        let x = self.node_factor(k, n).solve(&g);
        (&g * x) * C64::new(self.train_powers[k], 0.0)
    }
}

/// Channel covariance `G_{k,n}` for the merged node index.
pub fn link_covariance(large: &LargeScaleSet, k: usize, n: usize, n_ant_ap: usize, n_ant_bs: usize) -> CMat {
    if n < large.n_aps {
        large.ap_link(k, n).covariance(n_ant_ap)
    } else {
        large.bs_link(k, n - large.n_aps).covariance(n_ant_bs)
    }
}

fn estimate_node(
    y: &CMat,
    node: usize,
    book: &PilotBook,
    large: &LargeScaleSet,
    train_powers: &[f64],
    noise_var: f64,
    n_ant_ap: usize,
    n_ant_bs: usize,
) -> (Vec<Option<Factor>>, Vec<(usize, CVec)>) {
    let n_ant = y.nrows();
    let k = book.n_users();
    let covs: Vec<CMat> = (0..k).map(|i| link_covariance(large, i, node, n_ant_ap, n_ant_bs)).collect();
    let mut factors: Vec<Option<Factor>> = vec![None; book.tau_p];
    let mut out = Vec::with_capacity(k);
    for p in 0..book.tau_p {
        let users: Vec<usize> = (0..k).filter(|&i| book.assignment[i] == p).collect();
        if users.is_empty() {
            continue;
        }
        let mut b = CMat::identity(n_ant, n_ant) * C64::new(noise_var, 0.0);
        for &i in &users {
            b += &covs[i] * C64::new(train_powers[i], 0.0);
        }
        let f = factor(b);
        // y_hat = Y phi_p is column p of the training block
        let y_hat: CVec = y.column(p).into_owned();
        let x = f.solve(&y_hat);
        for &i in &users {
            let est = (&covs[i] * &x) * C64::new(train_powers[i].sqrt(), 0.0);
            out.push((i, est));
        }
        factors[p] = Some(f);
    }
    (factors, out)
}

/// `g_hat_{k,m} = sqrt(eta_k) G_{k,m} B_{k,m}^{-1} Y_m phi_k`, and the BS
/// analogue.
pub fn lmmse_estimate(
    obs: &TrainingObservations,
    book: &PilotBook,
    large: &LargeScaleSet,
    train_powers: &[f64],
    noise_var: f64,
    n_ant_ap: usize,
    n_ant_bs: usize,
) -> EstimateSet {
    let k = book.n_users();
    let mut g_hat = vec![CVec::zeros(n_ant_ap); k * large.n_aps];
    let mut h_hat = vec![CVec::zeros(n_ant_bs); k * large.n_bs];
    let mut ap_factors = Vec::with_capacity(large.n_aps * book.tau_p);
    let mut bs_factors = Vec::with_capacity(large.n_bs * book.tau_p);
    for (m, y) in obs.ap.iter().enumerate() {
        let (f, est) = estimate_node(y, m, book, large, train_powers, noise_var, n_ant_ap, n_ant_bs);
        ap_factors.extend(f);
        for (i, e) in est {
            g_hat[i * large.n_aps + m] = e;
        }
    }
    for (l, y) in obs.bs.iter().enumerate() {
        let node = large.n_aps + l;
        let (f, est) = estimate_node(y, node, book, large, train_powers, noise_var, n_ant_ap, n_ant_bs);
        bs_factors.extend(f);
        for (i, e) in est {
            h_hat[i * large.n_bs + l] = e;
        }
    }
    EstimateSet {
        n_ues: k,
        n_aps: large.n_aps,
        n_bs: large.n_bs,
        n_ant_ap,
        n_ant_bs,
        g_hat,
        h_hat,
        train_powers: train_powers.to_vec(),
        pilots: book.assignment.clone(),
        tau_p: book.tau_p,
        ap_factors,
        bs_factors,
    }
}

/// Estimates that equal the true channels, with the statistics of a
/// noiseless, contamination-free training phase. Used for perfect-CSI runs.
pub fn perfect_csi(channels: &ChannelSet, large: &LargeScaleSet, train_powers: &[f64], n_ant_ap: usize, n_ant_bs: usize) -> EstimateSet {
    let k = channels.n_ues;
    let book = PilotBook {
        tau_p: k.max(1),
        assignment: (0..k).collect(),
        clusters: vec![0; k],
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let obs = uplink_training_rx(channels, &book, train_powers, 0.0, &mut rng);
    let mut est = lmmse_estimate(&obs, &book, large, train_powers, 0.0, n_ant_ap, n_ant_bs);
    est.g_hat = channels.g.clone();
    est.h_hat = channels.h.clone();
    est
}
