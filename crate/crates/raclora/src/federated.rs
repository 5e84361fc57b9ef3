//! In-process federated simulation of the chained sketch method.
//!
//! One round: the server samples a cohort and a fresh sketch, broadcasts the
//! anchor and the sketch, every cohort client runs one local
//! random-reshuffling pass under the shared projector, uploads its trainable
//! factor, and the server merges the averaged factor with step scale `beta`.
//! Clients are simulated concurrently but each owns its state and derived
//! random stream, so runs are bit-reproducible.
//!
//! With one client, a full cohort, and `beta = 1` a federated run consumes
//! randomness exactly like the plain chain with the reshuffling inner
//! solver, which pins the whole message path to a known trajectory.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{pseudo_inverse_default, DenseMatrix};
use crate::objectives::{AverageObjective, Objective};
use crate::optimizers::{divergence_threshold, measure, minimize_to_stationarity, rr_pass, TraceRecord};
use crate::rng::RandomStream;
use crate::sketch::{build_projector, sample_sketch, SketchSide, SketchSpec};

/// Method tag written into federated trace records.
pub const FED_METHOD_TAG: &str = "fed-rac-lora";

/// Server-side configuration of a federated run.
#[derive(Debug, Clone)]
pub struct FedConfig {
    /// Number of registered clients `M`.
    pub num_clients: usize,
    /// Cohort size `C`, `1 <= C <= M`.
    pub cohort_size: usize,
    /// Local step size `gamma` used inside each client pass.
    pub local_gamma: f64,
    /// Server step scale `beta` applied to the averaged factor.
    pub server_beta: f64,
    /// Number of rounds.
    pub chain_length: usize,
    pub sketch: SketchSpec,
    pub seed: u64,
    /// When set, `validate` additionally enforces the step-size coupling
    /// the federated guarantee is stated under; see [`FedConfig::eta_tilde`].
    pub theorem_mode: bool,
}

impl FedConfig {
    pub fn new(
        num_clients: usize,
        cohort_size: usize,
        local_gamma: f64,
        server_beta: f64,
        chain_length: usize,
        sketch: SketchSpec,
    ) -> Self {
        FedConfig {
            num_clients,
            cohort_size,
            local_gamma,
            server_beta,
            chain_length,
            sketch,
            seed: 0,
            theorem_mode: false,
        }
    }

    /// Effective server step `eta = beta * gamma * N`: one round moves the
    /// anchor like `N` local steps of size `gamma`, rescaled by `beta`.
    pub fn eta_tilde(&self, samples_per_client: usize) -> f64 {
        self.server_beta * self.local_gamma * samples_per_client as f64
    }

    pub fn validate(&self, clients: &[ClientData]) -> Result<()> {
        self.sketch.validate()?;
        if self.num_clients == 0 {
            return Err(Error::InvalidConfig("at least one client is required".into()));
        }
        if clients.len() != self.num_clients {
            return Err(Error::InvalidConfig(format!(
                "config declares {} clients but {} are registered",
                self.num_clients,
                clients.len()
            )));
        }
        if self.cohort_size == 0 || self.cohort_size > self.num_clients {
            return Err(Error::InvalidConfig(format!(
                "cohort size must lie in 1..={}, got {}",
                self.num_clients, self.cohort_size
            )));
        }
        if !(self.local_gamma.is_finite() && self.local_gamma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "local step size must be positive, got {}",
                self.local_gamma
            )));
        }
        if !(self.server_beta.is_finite() && self.server_beta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "server step scale must be positive, got {}",
                self.server_beta
            )));
        }
        if self.chain_length == 0 {
            return Err(Error::InvalidConfig("at least one round is required".into()));
        }
        let shape = (self.sketch.target_rows, self.sketch.target_cols);
        for (i, c) in clients.iter().enumerate() {
            if c.client_id != i {
                return Err(Error::InvalidConfig(format!(
                    "client at position {i} has id {}; ids must be 0..M in order",
                    c.client_id
                )));
            }
            if c.objective.param_shape() != shape {
                return Err(Error::InvalidConfig(format!(
                    "client {i} parameters are {:?}, sketch targets {:?}",
                    c.objective.param_shape(),
                    shape
                )));
            }
            if c.objective.sample_count() == 0 {
                return Err(Error::InvalidConfig(format!("client {i} has no samples")));
            }
        }
        if self.theorem_mode {
            self.validate_theorem_mode(clients)?;
        }
        Ok(())
    }

    /// The guarantee for heterogeneous clients is stated under
    /// `gamma * N <= eta <= (1 - lambda_min_h) / (4 L)`; the left inequality
    /// is exactly `beta >= 1`.
    fn validate_theorem_mode(&self, clients: &[ClientData]) -> Result<()> {
        let n0 = clients[0].objective.sample_count();
        if clients.iter().any(|c| c.objective.sample_count() != n0) {
            return Err(Error::InvalidConfig(
                "theorem mode requires a common per-client sample count".into(),
            ));
        }
        if self.server_beta < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "theorem mode requires beta >= 1, got {}",
                self.server_beta
            )));
        }
        let mut l_max: f64 = 0.0;
        for (i, c) in clients.iter().enumerate() {
            let l = c.objective.smoothness_l().ok_or_else(|| {
                Error::Unsupported(format!(
                    "theorem mode needs a smoothness constant for client {i}"
                ))
            })?;
            l_max = l_max.max(l);
        }
        let ceiling = (1.0 - self.sketch.isotropic_lambda_min()) / (4.0 * l_max);
        let eta = self.eta_tilde(n0);
        if eta > ceiling * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "theorem mode requires eta = beta*gamma*N = {eta} <= {ceiling}"
            )));
        }
        Ok(())
    }
}

/// One registered client: an id and its local finite-sum objective.
#[derive(Clone)]
pub struct ClientData {
    pub client_id: usize,
    pub objective: Arc<dyn Objective>,
}

impl ClientData {
    pub fn new(client_id: usize, objective: Arc<dyn Objective>) -> Self {
        ClientData {
            client_id,
            objective,
        }
    }
}

/// Communication volume of one run, in scalar counts per cohort client and
/// round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommReport {
    pub rounds_completed: usize,
    /// Upload: one trainable factor (`r x n` or `m x r`).
    pub upload_scalars_per_client: usize,
    /// Broadcast: the anchor matrix plus the sketch.
    pub broadcast_scalars_per_client: usize,
    /// Size of the full parameter matrix, the upload a non-factored method
    /// would need.
    pub full_matrix_scalars: usize,
}

/// Completed federated run.
#[derive(Debug, Clone)]
pub struct FedRun {
    /// Global-objective record per round, measured before the round's
    /// merge, plus a terminal record.
    pub records: Vec<TraceRecord>,
    /// Effective server step for the common per-client sample count.
    pub eta_tilde: f64,
    pub diverged: bool,
    pub comm: CommReport,
    pub final_w: DenseMatrix,
}

/// Uniform without-replacement cohort of `c` clients out of `m`.
///
/// A full cohort (`c == m`) consumes no randomness, so shrinking a
/// federation to one client leaves the rest of the round's draws aligned
/// with the non-federated chain.
pub fn sample_cohort(m: usize, c: usize, rng: &mut RandomStream) -> Result<Vec<usize>> {
    if m == 0 || c == 0 || c > m {
        return Err(Error::InvalidConfig(format!(
            "cohort size must lie in 1..={m}, got {c}"
        )));
    }
    if c == m {
        return Ok((0..m).collect());
    }
    let mut ids = rng.distinct_indices(m, c);
    ids.sort_unstable();
    Ok(ids)
}

/// Fingerprint of a broadcast message, used to assert that every cohort
/// client received the same `(anchor, sketch)` pair.
pub fn broadcast_hash(w: &DenseMatrix, sketch: &DenseMatrix) -> u64 {
    let mut h = DefaultHasher::new();
    for m in [w, sketch] {
        m.shape().hash(&mut h);
        for v in m.to_row_major_vec() {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

/// One client's round: a random-reshuffling pass over its local samples
/// under the shared projector, returned as the trainable factor `A_hat`
/// (left sketch) or `B_hat` (right sketch) whose merge reconstructs the
/// local displacement.
pub fn client_local_update(
    client: &ClientData,
    w: &DenseMatrix,
    sketch: &DenseMatrix,
    spec: &SketchSpec,
    gamma: f64,
    rng: &mut RandomStream,
) -> Result<DenseMatrix> {
    let proj = build_projector(sketch, spec.side)?;
    let order = rng.permutation(client.objective.sample_count());
    let w_end = rr_pass(
        client.objective.as_ref(),
        w,
        Some(&proj),
        spec.side,
        gamma,
        &order,
    );
    let displacement = w_end.sub(w);
    // Encode the displacement in factor form. It lies in the projector's
    // range, so the merge `(alpha/r) * sketch * factor` recovers it.
    let scale = spec.rank as f64 / spec.alpha;
    match spec.side {
        SketchSide::Left => {
            let gram = sketch.transpose().matmul(sketch);
            let pinv = pseudo_inverse_default(&gram)?;
            Ok(pinv
                .matmul(&sketch.transpose().matmul(&displacement))
                .scale(scale))
        }
        SketchSide::Right => {
            let gram = sketch.matmul(&sketch.transpose());
            let pinv = pseudo_inverse_default(&gram)?;
            Ok(displacement
                .matmul(&sketch.transpose())
                .matmul(&pinv)
                .scale(scale))
        }
    }
}

/// Merges uploaded factors: `W + beta * (alpha/r) * sketch * mean(factors)`
/// (left sketch; mirrored on the right).
pub fn server_merge(
    w: &DenseMatrix,
    updates: &[DenseMatrix],
    sketch: &DenseMatrix,
    side: SketchSide,
    beta: f64,
    alpha: f64,
    rank: usize,
) -> Result<DenseMatrix> {
    if updates.is_empty() {
        return Err(Error::InvalidConfig("merge of an empty cohort".into()));
    }
    let shape = updates[0].shape();
    if updates.iter().any(|u| u.shape() != shape) {
        return Err(Error::Shape("uploaded factors disagree in shape".into()));
    }
    let mut mean = updates[0].clone();
    for u in &updates[1..] {
        mean = mean.add(u);
    }
    mean = mean.scale(1.0 / updates.len() as f64);
    let delta = match side {
        SketchSide::Left => sketch.matmul(&mean),
        SketchSide::Right => mean.matmul(sketch),
    };
    Ok(w.add_scaled(beta * alpha / rank as f64, &delta))
}

/// Runs `chain_length` federated rounds from `w0`.
///
/// The trace records the *global* objective (the uniform average of the
/// client objectives) once per round at the pre-merge anchor, plus a
/// terminal record. Divergence semantics match the non-federated chain.
pub fn run_fed_chain(
    clients: &[ClientData],
    cfg: &FedConfig,
    w0: &DenseMatrix,
) -> Result<FedRun> {
    cfg.validate(clients)?;
    let shape = (cfg.sketch.target_rows, cfg.sketch.target_cols);
    if w0.shape() != shape {
        return Err(Error::InvalidConfig(format!(
            "initial point is {:?}, clients train {:?}",
            w0.shape(),
            shape
        )));
    }
    if !w0.is_all_finite() {
        return Err(Error::InvalidConfig("initial point has non-finite entries".into()));
    }
    let global = AverageObjective::new(clients.iter().map(|c| c.objective.clone()).collect())?;

    let mut server_rng = RandomStream::from_seed(cfg.seed);
    let mut w = w0.clone();
    let threshold = divergence_threshold(global.value(&w));
    let mut records = Vec::with_capacity(cfg.chain_length + 1);
    let mut diverged = false;
    let mut rounds_completed = 0usize;

    for t in 0..cfg.chain_length {
        let mut rec = measure(&global, &w, t, cfg.seed, FED_METHOD_TAG);
        if !rec.f.is_finite() || rec.f > threshold {
            rec.diverged = true;
            records.push(rec);
            diverged = true;
            break;
        }

        let cohort = sample_cohort(cfg.num_clients, cfg.cohort_size, &mut server_rng)?;
        let sketch = sample_sketch(&cfg.sketch, &mut server_rng)?;
        let expected = broadcast_hash(&w, &sketch);
        let updates = cohort
            .par_iter()
            .map(|&cid| {
                // The clone is the broadcast message; every client checks it
                // against the server's fingerprint before training on it.
                let w_received = w.clone();
                let sketch_received = sketch.clone();
                if broadcast_hash(&w_received, &sketch_received) != expected {
                    return Err(Error::InvalidMatrix(format!(
                        "client {cid} received a corrupted broadcast"
                    )));
                }
                let mut client_rng = RandomStream::derive(cfg.seed, t as u64, cid as u64);
                client_local_update(
                    &clients[cid],
                    &w_received,
                    &sketch_received,
                    &cfg.sketch,
                    cfg.local_gamma,
                    &mut client_rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let merged = server_merge(
            &w,
            &updates,
            &sketch,
            cfg.sketch.side,
            cfg.server_beta,
            cfg.sketch.alpha,
            cfg.sketch.rank,
        )?;
        if !merged.is_all_finite() {
            records.push(TraceRecord {
                grad_norm_sq: f64::NAN,
                h_grad_inner: None,
                diverged: true,
                ..rec
            });
            diverged = true;
            break;
        }
        records.push(rec);
        w = merged;
        rounds_completed += 1;
    }

    if !diverged {
        let mut rec = measure(&global, &w, rounds_completed, cfg.seed, FED_METHOD_TAG);
        if !rec.f.is_finite() || rec.f > threshold {
            rec.diverged = true;
            diverged = true;
        }
        records.push(rec);
    }

    let (sr, sc) = cfg.sketch.sketch_shape();
    let (fr, fc) = match cfg.sketch.side {
        SketchSide::Left => (cfg.sketch.rank, cfg.sketch.target_cols),
        SketchSide::Right => (cfg.sketch.target_rows, cfg.sketch.rank),
    };
    let samples = clients
        .iter()
        .map(|c| c.objective.sample_count())
        .max()
        .expect("validated: at least one client");
    Ok(FedRun {
        records,
        eta_tilde: cfg.eta_tilde(samples),
        diverged,
        comm: CommReport {
            rounds_completed,
            upload_scalars_per_client: fr * fc,
            broadcast_scalars_per_client: shape.0 * shape.1 + sr * sc,
            full_matrix_scalars: shape.0 * shape.1,
        },
        final_w: w,
    })
}

/// Functional heterogeneity of a federation.
#[derive(Debug, Clone)]
pub struct DissimilarityReport {
    /// `f* - (1/M) sum_m f_m*`: how much lower the clients could each go on
    /// their own than the federation can go together. Nonnegative;
    /// magnitudes below 1e-10 are reported as exactly zero.
    pub delta_star: f64,
    /// Per-client within-spread `f_m* - (1/N) sum_i f_{m,i}*`.
    pub delta_star_m: Vec<f64>,
    /// Infimum of the global (averaged) objective.
    pub global_optimum: f64,
    /// Per-client infima.
    pub client_optima: Vec<f64>,
}

fn optimum_of(obj: &dyn Objective) -> Result<f64> {
    if let Some(f) = obj.optimum_value() {
        return Ok(f);
    }
    let (m, n) = obj.param_shape();
    let (_, f) = minimize_to_stationarity(obj, &DenseMatrix::zeros(m, n), 1e-9, 500_000)?;
    Ok(f)
}

/// Computes the dissimilarity constants from client infima, falling back to
/// a deterministic numeric minimization where no closed form exists.
pub fn dissimilarity(clients: &[ClientData]) -> Result<DissimilarityReport> {
    if clients.is_empty() {
        return Err(Error::InvalidConfig("no clients to compare".into()));
    }
    let global = AverageObjective::new(clients.iter().map(|c| c.objective.clone()).collect())?;
    let global_optimum = optimum_of(&global)?;

    let mut client_optima = Vec::with_capacity(clients.len());
    let mut delta_star_m = Vec::with_capacity(clients.len());
    for (i, c) in clients.iter().enumerate() {
        let fm = optimum_of(c.objective.as_ref())?;
        let n = c.objective.sample_count();
        let mut sample_sum = 0.0;
        for s in 0..n {
            sample_sum += c.objective.sample_optimum_value(s).ok_or_else(|| {
                Error::Unsupported(format!(
                    "client {i} cannot provide the infimum of sample {s}"
                ))
            })?;
        }
        let dm = fm - sample_sum / n as f64;
        if !dm.is_finite() {
            return Err(Error::Unsupported(format!(
                "client {i} has a non-finite dissimilarity"
            )));
        }
        delta_star_m.push(dm);
        client_optima.push(fm);
    }
    let mean_client = client_optima.iter().sum::<f64>() / client_optima.len() as f64;
    let mut delta_star = global_optimum - mean_client;
    // The exact quantity is nonnegative; the numeric infima carry rounding
    // noise of either sign, which we do not report as heterogeneity.
    if delta_star.abs() < 1e-10 {
        delta_star = 0.0;
    }
    Ok(DissimilarityReport {
        delta_star,
        delta_star_m,
        global_optimum,
        client_optima,
    })
}
