//! User association for the four cooperation scenarios, driven only by the
//! large-scale coefficients.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Multicell massive MIMO only, one BS per user.
    Mc,
    /// One node per user, either an AP or a BS.
    Het,
    /// Several APs or several BSs per user, never both.
    Horizontal,
    /// Several APs and several BSs per user.
    Full,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Mc => "mc",
            Scenario::Het => "het",
            Scenario::Horizontal => "horizontal",
            Scenario::Full => "full",
        }
    }
}

/// Binary association matrices `A` (users x APs) and `B` (users x BSs).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationState {
    pub scenario: Scenario,
    pub a: DMatrix<u8>,
    pub b: DMatrix<u8>,
}

impl AssociationState {
    pub fn empty(scenario: Scenario, n_ues: usize, n_aps: usize, n_bs: usize) -> Self {
        AssociationState {
            scenario,
            a: DMatrix::zeros(n_ues, n_aps),
            b: DMatrix::zeros(n_ues, n_bs),
        }
    }

    pub fn n_ues(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_aps(&self) -> usize {
        self.a.ncols()
    }

    pub fn n_bs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_aps() + self.n_bs()
    }

    /// Entry of the merged `[A | B]` view.
    pub fn merged(&self, k: usize, n: usize) -> bool {
        if n < self.n_aps() {
            self.a[(k, n)] == 1
        } else {
            self.b[(k, n - self.n_aps())] == 1
        }
    }

    pub fn set_merged(&mut self, k: usize, n: usize, on: bool) {
        let v = on as u8;
        if n < self.n_aps() {
            self.a[(k, n)] = v;
        } else {
            let m = self.n_aps();
            self.b[(k, n - m)] = v;
        }
    }

    /// `K x (M + L)` merged matrix, APs first.
    pub fn merged_matrix(&self) -> DMatrix<u8> {
        DMatrix::from_fn(self.n_ues(), self.n_nodes(), |k, n| self.merged(k, n) as u8)
    }

    /// Users served by merged node `n`, in increasing index order.
    pub fn served_by(&self, n: usize) -> Vec<usize> {
        (0..self.n_ues()).filter(|&k| self.merged(k, n)).collect()
    }

    /// Merged node indices serving user `k`, APs first.
    pub fn serving(&self, k: usize) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&n| self.merged(k, n)).collect()
    }

    pub fn serving_aps(&self, k: usize) -> Vec<usize> {
        (0..self.n_aps()).filter(|&m| self.a[(k, m)] == 1).collect()
    }

    pub fn serving_bs(&self, k: usize) -> Vec<usize> {
        (0..self.n_bs()).filter(|&l| self.b[(k, l)] == 1).collect()
    }

    pub fn link_count(&self) -> usize {
        self.a.iter().chain(self.b.iter()).map(|&v| v as usize).sum()
    }
}

/// Indices of the `n` largest entries of `row`, ties to the lower index.
pub fn top_indices(row: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&i, &j| row[j].total_cmp(&row[i]).then(i.cmp(&j)));
    idx.truncate(n);
    idx
}

/// Builds the association of `scenario` from `rho` (users x BSs) and
/// `beta` (users x APs).
pub fn associate(
    scenario: Scenario,
    rho: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    n_serving_ap: usize,
    n_serving_bs: usize,
    n_ant_ap: usize,
    n_ant_bs: usize,
) -> AssociationState {
    let k_users = rho.nrows().max(beta.nrows());
    let (n_aps, n_bs) = (beta.ncols(), rho.ncols());
    let mut st = AssociationState::empty(scenario, k_users, n_aps, n_bs);
    let row = |m: &DMatrix<f64>, k: usize| -> Vec<f64> { m.row(k).iter().copied().collect() };

    let horizontal = |st: &mut AssociationState, k: usize, n_ap: usize, n_bs_sel: usize| {
        let b_row = row(beta, k);
        let r_row = row(rho, k);
        let top_ap = top_indices(&b_row, n_ap.min(n_aps));
        let top_bs = top_indices(&r_row, n_bs_sel.min(n_bs));
        let ap_side = n_ant_ap as f64 * top_ap.iter().map(|&m| b_row[m]).sum::<f64>();
        let bs_side = n_ant_bs as f64 * top_bs.iter().map(|&l| r_row[l]).sum::<f64>();
        if !top_ap.is_empty() && ap_side >= bs_side {
            for m in top_ap {
                st.a[(k, m)] = 1;
            }
        } else {
            for l in top_bs {
                st.b[(k, l)] = 1;
            }
        }
    };

    for k in 0..k_users {
        match scenario {
            Scenario::Mc => {
                if let Some(&l) = top_indices(&row(rho, k), 1).first() {
                    st.b[(k, l)] = 1;
                }
            }
            Scenario::Het => horizontal(&mut st, k, 1, 1),
            Scenario::Horizontal => horizontal(&mut st, k, n_serving_ap, n_serving_bs),
            Scenario::Full => {
                for m in top_indices(&row(beta, k), n_serving_ap.min(n_aps)) {
                    st.a[(k, m)] = 1;
                }
                for l in top_indices(&row(rho, k), n_serving_bs.min(n_bs)) {
                    st.b[(k, l)] = 1;
                }
            }
        }
    }
    st
}
