//! Thresholding (proximal) operators and penalty specifications.
//!
//! Each operator is the closed-form minimizer of
//! `1/2 d b^2 - u b + P(b)` for its penalty P, evaluated coordinatewise or
//! groupwise. These are the M-step updates of the solver; they are pure
//! functions and trivially thread-safe.

use serde::{Deserialize, Serialize};

use crate::error::{OemError, Result};

/// The eight supported penalty families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyFamily {
    Lasso,
    ElasticNet,
    Mcp,
    Scad,
    GroupLasso,
    GroupMcp,
    GroupScad,
    SparseGroupLasso,
}

impl PenaltyFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            PenaltyFamily::Lasso => "lasso",
            PenaltyFamily::ElasticNet => "elastic_net",
            PenaltyFamily::Mcp => "mcp",
            PenaltyFamily::Scad => "scad",
            PenaltyFamily::GroupLasso => "grp_lasso",
            PenaltyFamily::GroupMcp => "grp_mcp",
            PenaltyFamily::GroupScad => "grp_scad",
            PenaltyFamily::SparseGroupLasso => "sparse_grp_lasso",
        }
    }

    pub fn is_grouped(&self) -> bool {
        matches!(
            self,
            PenaltyFamily::GroupLasso
                | PenaltyFamily::GroupMcp
                | PenaltyFamily::GroupScad
                | PenaltyFamily::SparseGroupLasso
        )
    }

    pub fn is_convex(&self) -> bool {
        !matches!(
            self,
            PenaltyFamily::Mcp
                | PenaltyFamily::Scad
                | PenaltyFamily::GroupMcp
                | PenaltyFamily::GroupScad
        )
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lasso" => Ok(PenaltyFamily::Lasso),
            "elastic_net" | "elastic.net" | "enet" => Ok(PenaltyFamily::ElasticNet),
            "mcp" => Ok(PenaltyFamily::Mcp),
            "scad" => Ok(PenaltyFamily::Scad),
            "grp_lasso" | "grp.lasso" | "group_lasso" => Ok(PenaltyFamily::GroupLasso),
            "grp_mcp" | "grp.mcp" | "group_mcp" => Ok(PenaltyFamily::GroupMcp),
            "grp_scad" | "grp.scad" | "group_scad" => Ok(PenaltyFamily::GroupScad),
            "sparse_grp_lasso" | "sparse.grp.lasso" | "sparse_group_lasso" => {
                Ok(PenaltyFamily::SparseGroupLasso)
            }
            other => Err(OemError::InvalidPenalty(format!("unknown penalty family: {other}"))),
        }
    }
}

/// Partition of the coordinates into groups, stored both as per-coordinate
/// labels and as index sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Groups {
    labels: Vec<usize>,
    sets: Vec<Vec<usize>>,
}

impl Groups {
    /// Builds a partition from per-coordinate labels. Labels may start at
    /// any integer but must be consecutive (no gaps), so that group weights
    /// line up unambiguously.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return Err(OemError::InvalidPenalty("empty group specification".into()));
        }
        let lo = *labels.iter().min().unwrap();
        let hi = *labels.iter().max().unwrap();
        let g = hi - lo + 1;
        let mut sets: Vec<Vec<usize>> = vec![Vec::new(); g];
        for (j, &l) in labels.iter().enumerate() {
            sets[l - lo].push(j);
        }
        if let Some(gap) = sets.iter().position(|s| s.is_empty()) {
            return Err(OemError::InvalidPenalty(format!(
                "group labels have a gap at {}",
                gap + lo
            )));
        }
        Ok(Groups { labels: labels.iter().map(|&l| l - lo).collect(), sets })
    }

    pub fn n_groups(&self) -> usize {
        self.sets.len()
    }

    pub fn n_coords(&self) -> usize {
        self.labels.len()
    }

    pub fn set(&self, k: usize) -> &[usize] {
        &self.sets[k]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// A penalty family plus its hyperparameters. Gamma bounds are enforced at
/// construction; the d-dependent denominator conditions are checked when a
/// fit begins (see [`PenaltySpec::validate_for_d`]).
#[derive(Clone, Debug)]
pub struct PenaltySpec {
    family: PenaltyFamily,
    gamma: f64,
    alpha: f64,
    tau: f64,
    groups: Option<Groups>,
    var_weights: Option<Vec<f64>>,
    grp_weights: Option<Vec<f64>>,
}

impl PenaltySpec {
    fn base(family: PenaltyFamily) -> Self {
        PenaltySpec {
            family,
            gamma: f64::NAN,
            alpha: 1.0,
            tau: 0.5,
            groups: None,
            var_weights: None,
            grp_weights: None,
        }
    }

    pub fn lasso() -> Self {
        Self::base(PenaltyFamily::Lasso)
    }

    pub fn elastic_net(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(OemError::InvalidPenalty(format!(
                "elastic net alpha must lie in [0, 1]; got {alpha}"
            )));
        }
        let mut s = Self::base(PenaltyFamily::ElasticNet);
        s.alpha = alpha;
        Ok(s)
    }

    pub fn mcp(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) {
            return Err(OemError::InvalidPenalty(format!("MCP requires gamma > 1; got {gamma}")));
        }
        let mut s = Self::base(PenaltyFamily::Mcp);
        s.gamma = gamma;
        Ok(s)
    }

    pub fn scad(gamma: f64) -> Result<Self> {
        if !(gamma > 2.0) {
            return Err(OemError::InvalidPenalty(format!("SCAD requires gamma > 2; got {gamma}")));
        }
        let mut s = Self::base(PenaltyFamily::Scad);
        s.gamma = gamma;
        Ok(s)
    }

    pub fn group_lasso(groups: Groups) -> Self {
        let mut s = Self::base(PenaltyFamily::GroupLasso);
        s.groups = Some(groups);
        s
    }

    pub fn group_mcp(groups: Groups, gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) {
            return Err(OemError::InvalidPenalty(format!(
                "group MCP requires gamma > 1; got {gamma}"
            )));
        }
        let mut s = Self::base(PenaltyFamily::GroupMcp);
        s.groups = Some(groups);
        s.gamma = gamma;
        Ok(s)
    }

    pub fn group_scad(groups: Groups, gamma: f64) -> Result<Self> {
        if !(gamma > 2.0) {
            return Err(OemError::InvalidPenalty(format!(
                "group SCAD requires gamma > 2; got {gamma}"
            )));
        }
        let mut s = Self::base(PenaltyFamily::GroupScad);
        s.groups = Some(groups);
        s.gamma = gamma;
        Ok(s)
    }

    pub fn sparse_group_lasso(groups: Groups, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(OemError::InvalidPenalty(format!(
                "sparse group lasso tau must lie in [0, 1]; got {tau}"
            )));
        }
        let mut s = Self::base(PenaltyFamily::SparseGroupLasso);
        s.groups = Some(groups);
        s.tau = tau;
        Ok(s)
    }

    /// Per-variable penalty weights (w_j >= 0; 0 means unpenalized).
    pub fn with_var_weights(mut self, w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(OemError::InvalidPenalty(
                "variable weights must be nonnegative and finite".into(),
            ));
        }
        self.var_weights = Some(w);
        Ok(self)
    }

    /// Per-group penalty weights (c_k >= 0; 0 means unpenalized).
    pub fn with_group_weights(mut self, c: Vec<f64>) -> Result<Self> {
        if c.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(OemError::InvalidPenalty(
                "group weights must be nonnegative and finite".into(),
            ));
        }
        self.grp_weights = Some(c);
        Ok(self)
    }

    pub fn family(&self) -> PenaltyFamily {
        self.family
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn groups(&self) -> Option<&Groups> {
        self.groups.as_ref()
    }

    pub fn var_weights(&self) -> Option<&[f64]> {
        self.var_weights.as_deref()
    }

    pub fn grp_weights(&self) -> Option<&[f64]> {
        self.grp_weights.as_deref()
    }

    pub fn var_weight(&self, j: usize) -> f64 {
        self.var_weights.as_ref().map_or(1.0, |w| w[j])
    }

    pub fn grp_weight(&self, k: usize) -> f64 {
        self.grp_weights.as_ref().map_or(1.0, |c| c[k])
    }

    /// Checks structural compatibility with a p-dimensional problem.
    pub fn validate_dims(&self, p: usize) -> Result<()> {
        if let Some(w) = &self.var_weights {
            if w.len() != p {
                return Err(OemError::DimensionMismatch(format!(
                    "variable weights have length {}, expected {p}",
                    w.len()
                )));
            }
        }
        match (&self.groups, self.family.is_grouped()) {
            (None, true) => {
                return Err(OemError::InvalidPenalty(format!(
                    "{} requires a group specification",
                    self.family.as_str()
                )))
            }
            (Some(g), _) => {
                if g.n_coords() != p {
                    return Err(OemError::DimensionMismatch(format!(
                        "groups cover {} coordinates, expected {p}",
                        g.n_coords()
                    )));
                }
                if let Some(c) = &self.grp_weights {
                    if c.len() != g.n_groups() {
                        return Err(OemError::DimensionMismatch(format!(
                            "group weights have length {}, expected {}",
                            c.len(),
                            g.n_groups()
                        )));
                    }
                }
            }
            (None, false) => {}
        }
        Ok(())
    }

    /// The concave families need positive prox denominators for the d in
    /// use: gamma*d - 1 > 0 (MCP) and (gamma-1)*d - 1 > 0 (SCAD). The fit is
    /// rejected with a diagnostic rather than silently clamped.
    pub fn validate_for_d(&self, d: f64) -> Result<()> {
        match self.family {
            PenaltyFamily::Mcp | PenaltyFamily::GroupMcp => {
                if self.gamma * d - 1.0 <= 0.0 {
                    return Err(OemError::InvalidPenalty(format!(
                        "MCP needs gamma*d > 1 (gamma = {}, d = {d}); increase gamma",
                        self.gamma
                    )));
                }
            }
            PenaltyFamily::Scad | PenaltyFamily::GroupScad => {
                if (self.gamma - 1.0) * d - 1.0 <= 0.0 {
                    return Err(OemError::InvalidPenalty(format!(
                        "SCAD needs (gamma-1)*d > 1 (gamma = {}, d = {d}); increase gamma",
                        self.gamma
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// One full M-step: beta = prox(u) at penalty level `lam` with divisor
    /// `d`. Zero weights mean unpenalized (plain u/d).
    pub fn apply(&self, u: &[f64], lam: f64, d: f64, beta: &mut [f64]) {
        debug_assert_eq!(u.len(), beta.len());
        match self.family {
            PenaltyFamily::Lasso => {
                for j in 0..u.len() {
                    beta[j] = soft_threshold(u[j], self.var_weight(j) * lam, d);
                }
            }
            PenaltyFamily::ElasticNet => {
                for j in 0..u.len() {
                    beta[j] = elastic_net_threshold(u[j], lam, self.alpha, self.var_weight(j), d);
                }
            }
            PenaltyFamily::Mcp => {
                for j in 0..u.len() {
                    let w = self.var_weight(j);
                    beta[j] = if w == 0.0 {
                        u[j] / d
                    } else {
                        mcp_threshold(u[j], w * lam, self.gamma, d)
                    };
                }
            }
            PenaltyFamily::Scad => {
                for j in 0..u.len() {
                    let w = self.var_weight(j);
                    beta[j] = if w == 0.0 {
                        u[j] / d
                    } else {
                        scad_threshold(u[j], w * lam, self.gamma, d)
                    };
                }
            }
            PenaltyFamily::GroupLasso
            | PenaltyFamily::GroupMcp
            | PenaltyFamily::GroupScad
            | PenaltyFamily::SparseGroupLasso => {
                let groups = self.groups.as_ref().expect("validated");
                let mut ug: Vec<f64> = Vec::new();
                let mut bg: Vec<f64> = Vec::new();
                for k in 0..groups.n_groups() {
                    let set = groups.set(k);
                    ug.clear();
                    ug.extend(set.iter().map(|&j| u[j]));
                    bg.resize(set.len(), 0.0);
                    let c = self.grp_weight(k);
                    match self.family {
                        PenaltyFamily::GroupLasso => group_threshold(&ug, c * lam, d, &mut bg),
                        PenaltyFamily::GroupMcp => {
                            if c == 0.0 {
                                for (b, &v) in bg.iter_mut().zip(&ug) {
                                    *b = v / d;
                                }
                            } else {
                                group_mcp_threshold(&ug, c * lam, self.gamma, d, &mut bg);
                            }
                        }
                        PenaltyFamily::GroupScad => {
                            if c == 0.0 {
                                for (b, &v) in bg.iter_mut().zip(&ug) {
                                    *b = v / d;
                                }
                            } else {
                                group_scad_threshold(&ug, c * lam, self.gamma, d, &mut bg);
                            }
                        }
                        PenaltyFamily::SparseGroupLasso => {
                            let w: Vec<f64> = set.iter().map(|&j| self.var_weight(j)).collect();
                            sparse_group_threshold(&ug, lam, self.tau, &w, c, d, &mut bg);
                        }
                        _ => unreachable!(),
                    }
                    for (&j, &b) in set.iter().zip(bg.iter()) {
                        beta[j] = b;
                    }
                }
            }
        }
    }

    /// Penalty value P_lambda(beta), consistent with the operators above.
    pub fn value(&self, lam: f64, beta: &[f64]) -> f64 {
        match self.family {
            PenaltyFamily::Lasso => {
                (0..beta.len()).map(|j| lam * self.var_weight(j) * beta[j].abs()).sum()
            }
            PenaltyFamily::ElasticNet => (0..beta.len())
                .map(|j| {
                    let w = self.var_weight(j);
                    self.alpha * lam * w * beta[j].abs()
                        + 0.5 * (1.0 - self.alpha) * lam * w * beta[j] * beta[j]
                })
                .sum(),
            PenaltyFamily::Mcp => (0..beta.len())
                .map(|j| mcp_value(beta[j].abs(), self.var_weight(j) * lam, self.gamma))
                .sum(),
            PenaltyFamily::Scad => (0..beta.len())
                .map(|j| scad_value(beta[j].abs(), self.var_weight(j) * lam, self.gamma))
                .sum(),
            PenaltyFamily::GroupLasso => {
                let groups = self.groups.as_ref().expect("validated");
                (0..groups.n_groups())
                    .map(|k| lam * self.grp_weight(k) * group_norm(groups.set(k), beta))
                    .sum()
            }
            PenaltyFamily::GroupMcp => {
                let groups = self.groups.as_ref().expect("validated");
                (0..groups.n_groups())
                    .map(|k| {
                        mcp_value(group_norm(groups.set(k), beta), self.grp_weight(k) * lam, self.gamma)
                    })
                    .sum()
            }
            PenaltyFamily::GroupScad => {
                let groups = self.groups.as_ref().expect("validated");
                (0..groups.n_groups())
                    .map(|k| {
                        scad_value(group_norm(groups.set(k), beta), self.grp_weight(k) * lam, self.gamma)
                    })
                    .sum()
            }
            PenaltyFamily::SparseGroupLasso => {
                let groups = self.groups.as_ref().expect("validated");
                let grp: f64 = (0..groups.n_groups())
                    .map(|k| {
                        lam * (1.0 - self.tau)
                            * self.grp_weight(k)
                            * group_norm(groups.set(k), beta)
                    })
                    .sum();
                let cw: f64 = (0..beta.len())
                    .map(|j| lam * self.tau * self.var_weight(j) * beta[j].abs())
                    .sum();
                grp + cw
            }
        }
    }
}

fn group_norm(set: &[usize], beta: &[f64]) -> f64 {
    set.iter().map(|&j| beta[j] * beta[j]).sum::<f64>().sqrt()
}

/// Soft threshold: sign(u) (|u| - lam)_+ / d. Exactly zero when |u| <= lam.
#[inline]
pub fn soft_threshold(u: f64, lam: f64, d: f64) -> f64 {
    let a = u.abs() - lam;
    if a <= 0.0 {
        0.0
    } else {
        u.signum() * a / d
    }
}

/// Elastic-net threshold: sign(u) (|u| - w a lam)_+ / (d + w (1-a) lam).
/// Reduces to the soft threshold at alpha = 1.
#[inline]
pub fn elastic_net_threshold(u: f64, lam: f64, alpha: f64, w: f64, d: f64) -> f64 {
    let a = u.abs() - w * alpha * lam;
    if a <= 0.0 {
        0.0
    } else {
        u.signum() * a / (d + w * (1.0 - alpha) * lam)
    }
}

/// MCP threshold with the d-scaled branch point:
/// sign(u) gamma (|u| - lam)_+ / (gamma d - 1) when |u| <= gamma lam d,
/// plain u/d beyond.
#[inline]
pub fn mcp_threshold(u: f64, lam: f64, gamma: f64, d: f64) -> f64 {
    if u.abs() > gamma * lam * d {
        u / d
    } else {
        let a = u.abs() - lam;
        if a <= 0.0 {
            0.0
        } else {
            u.signum() * gamma * a / (gamma * d - 1.0)
        }
    }
}

/// SCAD threshold, three branches at (d+1) lam and gamma lam d.
#[inline]
pub fn scad_threshold(u: f64, lam: f64, gamma: f64, d: f64) -> f64 {
    let au = u.abs();
    if au <= (d + 1.0) * lam {
        soft_threshold(u, lam, d)
    } else if au <= gamma * lam * d {
        u.signum() * ((gamma - 1.0) * au - gamma * lam) / ((gamma - 1.0) * d - 1.0)
    } else {
        u / d
    }
}

/// Block soft threshold: (u/d) (1 - lam/|u|)_+, exactly the zero vector when
/// |u| <= lam.
pub fn group_threshold(u: &[f64], lam: f64, d: f64, out: &mut [f64]) {
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= lam || norm == 0.0 {
        out.fill(0.0);
        return;
    }
    let f = (1.0 - lam / norm) / d;
    for (o, &v) in out.iter_mut().zip(u) {
        *o = f * v;
    }
}

/// Group MCP: the scalar MCP applied to the norm, direction preserved.
pub fn group_mcp_threshold(u: &[f64], lam: f64, gamma: f64, d: f64, out: &mut [f64]) {
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        out.fill(0.0);
        return;
    }
    let m = mcp_threshold(norm, lam, gamma, d);
    let f = m / norm;
    for (o, &v) in out.iter_mut().zip(u) {
        *o = f * v;
    }
}

/// Group SCAD: the scalar SCAD applied to the norm, direction preserved.
pub fn group_scad_threshold(u: &[f64], lam: f64, gamma: f64, d: f64, out: &mut [f64]) {
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        out.fill(0.0);
        return;
    }
    let c = scad_threshold(norm, lam, gamma, d);
    let f = c / norm;
    for (o, &v) in out.iter_mut().zip(u) {
        *o = f * v;
    }
}

/// Sparse group lasso: coordinatewise soft threshold at w_j lam tau (divisor
/// d), then the group threshold at c_k lam (1-tau) applied on the same
/// scale. The composition is exact for this nested penalty: at tau = 1 it is
/// the plain lasso update, at tau = 0 the plain group lasso update.
pub fn sparse_group_threshold(
    u: &[f64],
    lam: f64,
    tau: f64,
    w: &[f64],
    c_k: f64,
    d: f64,
    out: &mut [f64],
) {
    debug_assert_eq!(u.len(), w.len());
    debug_assert_eq!(u.len(), out.len());
    for j in 0..u.len() {
        out[j] = soft_threshold(u[j], w[j] * lam * tau, d);
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    // v is already on the beta scale (divided by d), so the group threshold
    // compares against c_k lam (1 - tau) / d.
    let glam = c_k * lam * (1.0 - tau) / d;
    if norm <= glam || norm == 0.0 {
        out.fill(0.0);
        return;
    }
    let f = 1.0 - glam / norm;
    for o in out.iter_mut() {
        *o *= f;
    }
}

fn mcp_value(abs_b: f64, lam: f64, gamma: f64) -> f64 {
    if abs_b <= gamma * lam {
        lam * abs_b - abs_b * abs_b / (2.0 * gamma)
    } else {
        gamma * lam * lam / 2.0
    }
}

fn scad_value(abs_b: f64, lam: f64, gamma: f64) -> f64 {
    if abs_b <= lam {
        lam * abs_b
    } else if abs_b <= gamma * lam {
        -(abs_b * abs_b - 2.0 * gamma * lam * abs_b + lam * lam) / (2.0 * (gamma - 1.0))
    } else {
        (gamma + 1.0) * lam * lam / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(0.5, 0.0, 1.0), 0.5);
        assert_eq!(soft_threshold(0.3, 0.5, 1.0), 0.0);
        assert!((soft_threshold(-2.0, 0.5, 2.0) + 0.75).abs() < 1e-15);
    }

    #[test]
    fn elastic_net_cases() {
        // alpha = 1 reduces to the soft threshold.
        for &(u, lam, w, d) in
            &[(0.7, 0.2, 1.0, 1.3), (-1.4, 0.6, 0.5, 2.0), (0.1, 0.5, 2.0, 0.7)]
        {
            let a = elastic_net_threshold(u, lam, 1.0, w, d);
            let b = soft_threshold(u, w * lam, d);
            assert_eq!(a, b);
        }
        // Pure ridge shrink.
        assert!((elastic_net_threshold(1.0, 1.0, 0.0, 1.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((elastic_net_threshold(2.0, 1.0, 0.5, 1.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mcp_cases() {
        // Pass-through branch: |u| > gamma*lam*d.
        assert_eq!(mcp_threshold(2.0, 0.5, 3.0, 1.0), 2.0);
        // Shrink branch.
        assert!((mcp_threshold(1.0, 0.5, 3.0, 1.0) - 0.75).abs() < 1e-15);
        // Below threshold.
        assert_eq!(mcp_threshold(0.4, 0.5, 3.0, 1.0), 0.0);
    }

    #[test]
    fn scad_cases() {
        assert_eq!(scad_threshold(5.0, 1.0, 3.7, 1.0), 5.0);
        assert!((scad_threshold(1.5, 1.0, 3.7, 1.0) - 0.5).abs() < 1e-15);
        let mid = scad_threshold(3.0, 1.0, 3.7, 1.0);
        assert!((mid - (2.7 * 3.0 - 3.7) / (2.7 * 1.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn group_cases() {
        let mut out = [0.0; 2];
        group_threshold(&[3.0, 4.0], 2.5, 1.0, &mut out);
        assert!((out[0] - 1.5).abs() < 1e-15);
        assert!((out[1] - 2.0).abs() < 1e-15);
        group_threshold(&[3.0, 4.0], 6.0, 1.0, &mut out);
        assert_eq!(out, [0.0, 0.0]);
        group_threshold(&[3.0, 4.0], 0.0, 2.0, &mut out);
        assert!((out[0] - 1.5).abs() < 1e-15 && (out[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn group_mcp_scad_cases() {
        let mut out = [0.0; 2];
        group_mcp_threshold(&[0.0, 0.0], 1.0, 3.0, 1.0, &mut out);
        assert_eq!(out, [0.0, 0.0]);
        // Norm 5 in the pass-through region: u/d exactly.
        group_mcp_threshold(&[3.0, 4.0], 0.5, 3.0, 1.0, &mut out);
        assert_eq!(out, [3.0, 4.0]);
        group_mcp_threshold(&[1.0, 0.0], 0.5, 3.0, 1.0, &mut out);
        assert!((out[0] - 0.75).abs() < 1e-15);
        assert_eq!(out[1], 0.0);
        group_scad_threshold(&[0.0, 0.0], 1.0, 3.7, 1.0, &mut out);
        assert_eq!(out, [0.0, 0.0]);
    }

    #[test]
    fn sparse_group_worked_example() {
        let mut out = [0.0; 2];
        sparse_group_threshold(&[3.0, 4.0], 1.0, 0.5, &[1.0, 1.0], 2.0, 1.0, &mut out);
        // v = (2.5, 3.5), |v| = sqrt(18.5), factor (1 - 1/|v|).
        let norm = 18.5f64.sqrt();
        let f = 1.0 - 1.0 / norm;
        assert!((out[0] - 2.5 * f).abs() < 1e-12);
        assert!((out[1] - 3.5 * f).abs() < 1e-12);
        assert!((out[0] - 1.9188).abs() < 1e-3);
        assert!((out[1] - 2.6863).abs() < 1e-3);
    }

    #[test]
    fn sparse_group_limits() {
        // tau = 1: coordinatewise soft threshold.
        let mut out = [0.0; 3];
        let u = [1.2, -0.4, 2.0];
        let w = [1.0, 2.0, 0.5];
        sparse_group_threshold(&u, 0.8, 1.0, &w, 3.0, 1.7, &mut out);
        for j in 0..3 {
            assert!((out[j] - soft_threshold(u[j], w[j] * 0.8, 1.7)).abs() < 1e-15);
        }
        // tau = 0: group lasso with divisor d.
        sparse_group_threshold(&u, 0.8, 0.0, &w, 1.5, 1.7, &mut out);
        let mut expect = [0.0; 3];
        group_threshold(&u, 1.5 * 0.8, 1.7, &mut expect);
        for j in 0..3 {
            assert!((out[j] - expect[j]).abs() < 1e-14, "{} vs {}", out[j], expect[j]);
        }
    }

    #[test]
    fn groups_reject_gaps() {
        assert!(Groups::from_labels(&[1, 1, 3]).is_err());
        let g = Groups::from_labels(&[1, 1, 2, 2, 2]).unwrap();
        assert_eq!(g.n_groups(), 2);
        assert_eq!(g.set(1), &[2, 3, 4]);
    }

    #[test]
    fn gamma_bounds_enforced() {
        assert!(PenaltySpec::mcp(1.0).is_err());
        assert!(PenaltySpec::scad(2.0).is_err());
        assert!(PenaltySpec::mcp(1.5).is_ok());
        assert!(PenaltySpec::mcp(3.0).unwrap().validate_for_d(0.2).is_err());
        assert!(PenaltySpec::scad(3.7).unwrap().validate_for_d(0.3).is_err());
    }

    #[test]
    fn zero_weight_means_unpenalized() {
        let spec = PenaltySpec::lasso().with_var_weights(vec![0.0, 1.0]).unwrap();
        let mut beta = [0.0; 2];
        spec.apply(&[2.0, 0.3], 1.0, 2.0, &mut beta);
        assert_eq!(beta[0], 1.0); // u/d, untouched by the penalty
        assert_eq!(beta[1], 0.0);
    }
}
