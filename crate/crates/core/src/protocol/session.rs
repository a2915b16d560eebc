use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::network::Network;
use super::parties::{party_rng, Client, DetectionConfig, ServerA, ServerP};
use super::policy::OutlierPolicy;
use super::transcript::{PartyId, Transcript};
use crate::error::{Error, Result, Round};
use crate::isoforest::{Algorithm, ForestParams, ScoreVector};
use crate::linalg::{MaskingMatrix, Matrix, DEFAULT_NOISE_SIGMA};
use crate::paillier::{DEFAULT_KEYSIZE, SUPPORTED_KEYSIZES};

/// Default masking condition number bound.
pub const DEFAULT_T: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    pub keysize: u64,
    /// Upper bound on the condition number of the masking matrix.
    pub t_param: f64,
    pub noise_sigma: f64,
    pub detection: DetectionConfig,
    /// Seeds every party's private generator; `None` draws from the OS.
    pub master_seed: Option<u64>,
}

impl RoundConfig {
    pub fn new(algo: Algorithm, master_seed: Option<u64>) -> Self {
        Self {
            keysize: DEFAULT_KEYSIZE,
            t_param: DEFAULT_T,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            detection: DetectionConfig {
                forest: ForestParams::new(algo),
                seed: master_seed.unwrap_or(0),
                policy: OutlierPolicy::default(),
            },
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_KEYSIZES.contains(&self.keysize) {
            return Err(Error::invalid(format!(
                "unsupported key size {}; expected one of {SUPPORTED_KEYSIZES:?}",
                self.keysize
            )));
        }
        if !(self.t_param >= 1.0) || !self.t_param.is_finite() {
            return Err(Error::invalid(format!("T must be a finite value >= 1, got {}", self.t_param)));
        }
        if !(self.noise_sigma > 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::invalid(format!("noise sigma must be positive, got {}", self.noise_sigma)));
        }
        if self.detection.forest.trees == 0 || self.detection.forest.psi == 0 {
            return Err(Error::invalid("forest needs at least one tree and psi >= 1"));
        }
        self.detection.policy.validate()
    }
}

/// One client's private input.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientInput {
    pub data: Matrix,
    /// Ground-truth outlier labels, carried along for evaluation only.
    pub labels: Option<Vec<u8>>,
}

impl ClientInput {
    pub fn new(data: Matrix) -> Self {
        Self { data, labels: None }
    }

    pub fn with_labels(data: Matrix, labels: Vec<u8>) -> Self {
        Self {
            data,
            labels: Some(labels),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClientOutcome {
    pub cleaned: Matrix,
    pub cleaned_labels: Option<Vec<u8>>,
    /// Outlier decision per local row.
    pub flags: Vec<bool>,
    /// Broadcast score at each local row.
    pub local_scores: Vec<f64>,
    pub z_set: Vec<usize>,
}

/// Values no single party holds together; exposed for tests and evaluation.
#[derive(Debug, Clone)]
pub struct SimulationView {
    pub xi: u64,
    pub total: usize,
    pub masking: MaskingMatrix,
    pub x_masked: Matrix,
    pub h_offset: usize,
    pub server_order: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub clients: Vec<ClientOutcome>,
    pub scores: ScoreVector,
    pub transcript: Transcript,
    pub view: SimulationView,
}

/// A protocol round in progress. Phases must be driven in order; running one
/// early fails with an abort naming its round.
#[derive(Debug)]
pub struct Session {
    config: RoundConfig,
    clients: Vec<Client>,
    server_a: ServerA,
    server_p: ServerP,
    net: Network,
}

impl Session {
    pub fn new(config: RoundConfig, inputs: Vec<ClientInput>) -> Result<Self> {
        config.validate()?;
        let m = inputs.len();
        if m < 2 {
            return Err(Error::invalid(format!("the protocol needs at least two clients (m >= 2), got m = {m}")));
        }
        let d = inputs[0].data.cols();
        if d == 0 {
            return Err(Error::invalid("data must have at least one feature"));
        }
        for (i, input) in inputs.iter().enumerate() {
            if input.data.cols() != d {
                return Err(Error::shape(format!(
                    "client {i} has {} features, client 0 has {d}",
                    input.data.cols()
                )));
            }
            if let Some(labels) = &input.labels {
                if labels.len() != input.data.rows() {
                    return Err(Error::shape(format!(
                        "client {i} has {} labels for {} rows",
                        labels.len(),
                        input.data.rows()
                    )));
                }
            }
        }
        if inputs.iter().all(|input| input.data.rows() == 0) {
            return Err(Error::invalid("no client holds any data"));
        }

        let seed = config.master_seed;
        let clients = inputs
            .into_iter()
            .enumerate()
            .map(|(i, input)| Client::new(i, input.data, input.labels, party_rng(seed, PartyId::Client(i))))
            .collect();
        Ok(Self {
            config,
            clients,
            server_a: ServerA::new(m, party_rng(seed, PartyId::ServerA)),
            server_p: ServerP::new(m),
            net: Network::new(),
        })
    }

    pub fn config(&self) -> &RoundConfig {
        &self.config
    }

    pub fn clients(&self) -> &[Client] {
        &self.clients
    }

    pub fn server_a(&self) -> &ServerA {
        &self.server_a
    }

    pub fn server_p(&self) -> &ServerP {
        &self.server_p
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    /// Transport access for fault injection in tests.
    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    fn m(&self) -> usize {
        self.clients.len()
    }

    pub fn distribute_keys(&mut self) -> Result<()> {
        info!("key distribution: {} clients, {}-bit keys", self.m(), self.config.keysize);
        for c in &mut self.clients {
            c.publish_key(self.config.keysize, &mut self.net)?;
        }
        self.server_a.forward_keys(&mut self.net)?;
        let m = self.m();
        for c in &mut self.clients {
            c.collect_keys(m, &mut self.net)?;
        }
        self.server_p.collect_keys(&mut self.net)
    }

    pub fn agree_seed(&mut self) -> Result<()> {
        self.agree_seed_inner(None)
    }

    /// Seed agreement with caller-chosen shares instead of private draws.
    pub fn agree_seed_with_shares(&mut self, shares: &[u64]) -> Result<()> {
        if shares.len() != self.m() {
            return Err(Error::invalid(format!("{} shares for {} clients", shares.len(), self.m())));
        }
        self.agree_seed_inner(Some(shares))
    }

    fn agree_seed_inner(&mut self, shares: Option<&[u64]>) -> Result<()> {
        info!("seed agreement");
        let m = self.m();
        for (i, c) in self.clients.iter_mut().enumerate() {
            c.send_seed_share(shares.map(|s| s[i]), m, &mut self.net)?;
        }
        self.server_a.aggregate_seed(&mut self.net)?;
        for c in &mut self.clients {
            c.receive_seed(&mut self.net)?;
        }
        Ok(())
    }

    pub fn secure_total_count(&mut self) -> Result<()> {
        info!("secure total count");
        let m = self.m();
        for c in &mut self.clients {
            c.send_count(m, Round::SecureCount, &mut self.net)?;
        }
        self.server_a.aggregate_count(&mut self.net)?;
        for c in &mut self.clients {
            c.decrypt_count(&mut self.net)?;
        }
        self.server_a.broadcast_count(&mut self.net)?;
        for c in &mut self.clients {
            c.receive_count(&mut self.net)?;
        }
        self.server_p.receive_count(&mut self.net)?;
        debug!("total count {:?}", self.server_p.total());
        Ok(())
    }

    pub fn assign_indices(&mut self) -> Result<()> {
        info!("index assignment");
        let m = self.m();
        for c in &mut self.clients {
            c.send_count(m, Round::IndexAssignment, &mut self.net)?;
        }
        self.server_a.assign_offsets(&mut self.net)?;
        for c in &mut self.clients {
            c.receive_offset(&mut self.net)?;
        }
        Ok(())
    }

    pub fn mask_and_send(&mut self) -> Result<()> {
        info!("masking with T = {}", self.config.t_param);
        for c in &mut self.clients {
            c.mask_and_send(self.config.t_param, self.config.noise_sigma, &mut self.net)?;
        }
        Ok(())
    }

    pub fn aggregate_and_denoise(&mut self) -> Result<()> {
        info!("aggregation");
        self.server_a.aggregate_noise(&mut self.net)?;
        self.server_p.aggregate(&mut self.net)
    }

    pub fn detect_and_report(&mut self) -> Result<()> {
        let detection = self.config.detection;
        info!(
            "detection: {} with {} trees, psi {}",
            detection.forest.algo, detection.forest.trees, detection.forest.psi
        );
        self.clients[0].send_detection_config(&detection, &mut self.net)?;
        self.server_p.detect(&mut self.net)?;
        for c in &mut self.clients {
            c.receive_scores(&detection.policy, &mut self.net)?;
        }
        Ok(())
    }

    /// Runs every phase in order.
    pub fn run(&mut self) -> Result<()> {
        self.distribute_keys()?;
        self.agree_seed()?;
        self.secure_total_count()?;
        self.assign_indices()?;
        self.mask_and_send()?;
        self.aggregate_and_denoise()?;
        self.detect_and_report()
    }

    /// Collects the results of a completed round.
    pub fn finish(self) -> Result<RoundOutcome> {
        let incomplete = || Error::invalid("the round has not completed");
        let scores = self.server_p.scores().cloned().ok_or_else(incomplete)?;
        let clients = self
            .clients
            .iter()
            .map(|c| {
                let (cleaned, cleaned_labels) = c.cleaned().ok_or_else(incomplete)?;
                Ok(ClientOutcome {
                    cleaned,
                    cleaned_labels,
                    flags: c.flags().ok_or_else(incomplete)?.to_vec(),
                    local_scores: c.local_scores().ok_or_else(incomplete)?,
                    z_set: c.z_set().ok_or_else(incomplete)?.to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let first = &self.clients[0];
        let view = SimulationView {
            xi: first.xi().ok_or_else(incomplete)?,
            total: first.total().ok_or_else(incomplete)?,
            masking: first.masking().cloned().ok_or_else(incomplete)?,
            x_masked: self.server_p.x_masked().cloned().ok_or_else(incomplete)?,
            h_offset: self.server_a.h_offset().ok_or_else(incomplete)?,
            server_order: self.server_a.order().to_vec(),
        };
        Ok(RoundOutcome {
            clients,
            scores,
            transcript: self.net.into_transcript(),
            view,
        })
    }
}

/// Runs a complete round: keys, seed, count, indices, masking, aggregation,
/// detection and local removal.
pub fn run_full_round(config: RoundConfig, inputs: Vec<ClientInput>) -> Result<RoundOutcome> {
    let mut session = Session::new(config, inputs)?;
    session.run()?;
    session.finish()
}
