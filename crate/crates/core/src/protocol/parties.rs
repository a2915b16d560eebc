//! Party state machines. Parties never share memory: everything one party
//! learns from another arrives as an envelope through the [`Network`].

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::indices::index_set;
use super::masking::{denoise, masked_contribution, sum_matrices};
use super::network::Network;
use super::policy::OutlierPolicy;
use super::transcript::{Envelope, MessageKind, PartyId};
use super::wire;
use crate::detrng::{permutation, RngStream};
use crate::error::{Error, Result, Round};
use crate::isoforest::{Forest, ForestParams, ScoreVector};
use crate::linalg::{build_masking_matrix, noise_matrix, MaskingMatrix, Matrix};
use crate::paillier::{self, Ciphertext, PublicKey, SecretKey};

/// Exclusive upper bound of a client's seed share.
pub const SEED_SHARE_BOUND: u64 = 1 << 48;

/// What the principal server needs to know to run detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub forest: ForestParams,
    pub seed: u64,
    pub policy: OutlierPolicy,
}

/// The party's private generator: derived from the master seed in
/// reproducible simulations, from OS entropy otherwise.
pub(crate) fn party_rng(master_seed: Option<u64>, party: PartyId) -> ChaCha20Rng {
    let Some(seed) = master_seed else {
        return ChaCha20Rng::from_entropy();
    };
    let tag = match party {
        PartyId::ServerP => 0,
        PartyId::ServerA => 1,
        PartyId::Client(i) => i as u64 + 2,
    };
    let mut stream = RngStream::derive(seed ^ 0x0BAD_5EED_CAFE_F00D, tag);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&stream.next_u64().to_le_bytes());
    }
    ChaCha20Rng::from_seed(key)
}

fn abort(round: Round) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::ProtocolAbort { .. } => e,
        other => Error::abort(round, other.to_string()),
    }
}

fn missing(round: Round, what: &str) -> Error {
    Error::abort(round, format!("{what} is not available yet"))
}

fn pk_payload(owner: usize, pk: &PublicKey) -> String {
    format!("{owner:x}.{}", pk.to_hex())
}

fn parse_pk_payload(payload: &str) -> Result<(usize, PublicKey)> {
    let (owner, n) = payload
        .split_once('.')
        .ok_or_else(|| Error::Format("public key payload needs an owner and a modulus".into()))?;
    let owner = wire::decode_u64(owner)? as usize;
    Ok((owner, PublicKey::from_hex(n)?))
}

/// Collects one envelope of `kind` from each of the `m` clients.
fn one_per_client(envelopes: Vec<Envelope>, m: usize, round: Round) -> Result<BTreeMap<usize, Envelope>> {
    let mut by_client = BTreeMap::new();
    for env in envelopes {
        let PartyId::Client(i) = env.from else {
            return Err(Error::abort(round, format!("{} from non-client {}", env.kind, env.from)));
        };
        if i >= m {
            return Err(Error::abort(round, format!("{} from unknown client {i}", env.kind)));
        }
        let kind = env.kind;
        if by_client.insert(i, env).is_some() {
            return Err(Error::abort(round, format!("duplicate {kind} from client {i}")));
        }
    }
    if by_client.len() != m {
        let missing: Vec<usize> = (0..m).filter(|i| !by_client.contains_key(i)).collect();
        return Err(Error::abort(
            round,
            format!("missing contribution from client(s) {missing:?}"),
        ));
    }
    Ok(by_client)
}

fn expect_from(net: &mut Network, at: PartyId, kind: MessageKind, from: PartyId, round: Round) -> Result<Envelope> {
    let env = net
        .recv(at, kind)
        .ok_or_else(|| Error::abort(round, format!("{at} did not receive {kind}")))?;
    if env.from != from {
        return Err(Error::abort(round, format!("{at} received {kind} from {} instead of {from}", env.from)));
    }
    Ok(env)
}

#[derive(Debug)]
pub struct Client {
    index: usize,
    data: Matrix,
    labels: Option<Vec<u8>>,
    rng: ChaCha20Rng,
    keys: Option<(PublicKey, SecretKey)>,
    peer_keys: BTreeMap<usize, PublicKey>,
    seed_share: Option<u64>,
    xi_global: Option<u64>,
    total: Option<usize>,
    start: Option<u64>,
    z_set: Option<Vec<usize>>,
    masking: Option<MaskingMatrix>,
    scores: Option<ScoreVector>,
    flags: Option<Vec<bool>>,
}

impl Client {
    pub(crate) fn new(index: usize, data: Matrix, labels: Option<Vec<u8>>, rng: ChaCha20Rng) -> Self {
        Self {
            index,
            data,
            labels,
            rng,
            keys: None,
            peer_keys: BTreeMap::new(),
            seed_share: None,
            xi_global: None,
            total: None,
            start: None,
            z_set: None,
            masking: None,
            scores: None,
            flags: None,
        }
    }

    pub fn id(&self) -> PartyId {
        PartyId::Client(self.index)
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn local_count(&self) -> usize {
        self.data.rows()
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn public_key(&self) -> Option<&PublicKey> {
        self.keys.as_ref().map(|(pk, _)| pk)
    }

    pub fn peer_keys(&self) -> &BTreeMap<usize, PublicKey> {
        &self.peer_keys
    }

    pub fn seed_share(&self) -> Option<u64> {
        self.seed_share
    }

    /// Global seed, once agreed.
    pub fn xi(&self) -> Option<u64> {
        self.xi_global
    }

    pub fn total(&self) -> Option<usize> {
        self.total
    }

    pub fn start(&self) -> Option<u64> {
        self.start
    }

    pub fn z_set(&self) -> Option<&[usize]> {
        self.z_set.as_deref()
    }

    pub fn masking(&self) -> Option<&MaskingMatrix> {
        self.masking.as_ref()
    }

    pub fn scores(&self) -> Option<&ScoreVector> {
        self.scores.as_ref()
    }

    pub fn flags(&self) -> Option<&[bool]> {
        self.flags.as_deref()
    }

    fn secret(&self, round: Round) -> Result<(&PublicKey, &SecretKey)> {
        self.keys
            .as_ref()
            .map(|(pk, sk)| (pk, sk))
            .ok_or_else(|| missing(round, "key pair"))
    }

    /// Public keys of all clients in client-index order.
    fn all_keys(&self, m: usize, round: Round) -> Result<Vec<&PublicKey>> {
        (0..m)
            .map(|j| {
                if j == self.index {
                    self.secret(round).map(|(pk, _)| pk)
                } else {
                    self.peer_keys
                        .get(&j)
                        .ok_or_else(|| Error::abort(round, format!("no public key for client {j}")))
                }
            })
            .collect()
    }

    fn encrypt_for_all(&mut self, value: u64, m: usize, round: Round) -> Result<String> {
        let keys: Vec<PublicKey> = self.all_keys(m, round)?.into_iter().cloned().collect();
        let cts = keys
            .iter()
            .map(|pk| paillier::enc_u64(value, pk, &mut self.rng))
            .collect::<Result<Vec<_>>>()
            .map_err(abort(round))?;
        Ok(wire::encode_ciphertexts(&cts))
    }

    fn decrypt_single(&self, env: &Envelope, round: Round) -> Result<u64> {
        let (pk, sk) = self.secret(round)?;
        let ct = Ciphertext::from_hex(&env.payload).map_err(abort(round))?;
        paillier::dec_u64(&ct, sk, pk).map_err(abort(round))
    }

    pub(crate) fn publish_key(&mut self, keysize: u64, net: &mut Network) -> Result<()> {
        let (pk, sk) = paillier::gen(keysize, &mut self.rng).map_err(abort(Round::KeyDistribution))?;
        net.send(self.id(), PartyId::ServerA, MessageKind::PkBroadcast, pk_payload(self.index, &pk));
        self.keys = Some((pk, sk));
        Ok(())
    }

    pub(crate) fn collect_keys(&mut self, m: usize, net: &mut Network) -> Result<()> {
        let round = Round::KeyDistribution;
        for env in net.recv_all(self.id(), MessageKind::PkBroadcast) {
            if env.from != PartyId::ServerA {
                return Err(Error::abort(round, format!("public key relayed by {}", env.from)));
            }
            let (owner, pk) = parse_pk_payload(&env.payload).map_err(abort(round))?;
            self.peer_keys.insert(owner, pk);
        }
        self.all_keys(m, round).map(|_| ())
    }

    pub(crate) fn send_seed_share(&mut self, share: Option<u64>, m: usize, net: &mut Network) -> Result<()> {
        let share = match share {
            Some(s) => s,
            None => self.rng.gen_range(1..SEED_SHARE_BOUND),
        };
        let payload = self.encrypt_for_all(share, m, Round::SeedAgreement)?;
        self.seed_share = Some(share);
        net.send(self.id(), PartyId::ServerA, MessageKind::EncXi, payload);
        Ok(())
    }

    pub(crate) fn receive_seed(&mut self, net: &mut Network) -> Result<()> {
        let round = Round::SeedAgreement;
        let env = expect_from(net, self.id(), MessageKind::EncXiSum, PartyId::ServerA, round)?;
        self.xi_global = Some(self.decrypt_single(&env, round)?);
        Ok(())
    }

    pub(crate) fn send_count(&mut self, m: usize, round: Round, net: &mut Network) -> Result<()> {
        let payload = self.encrypt_for_all(self.local_count() as u64, m, round)?;
        net.send(self.id(), PartyId::ServerA, MessageKind::EncCount, payload);
        Ok(())
    }

    /// Decrypts the aggregated count if this client was picked to do so.
    pub(crate) fn decrypt_count(&mut self, net: &mut Network) -> Result<bool> {
        let round = Round::SecureCount;
        let Some(env) = net.recv(self.id(), MessageKind::EncCount) else {
            return Ok(false);
        };
        if env.from != PartyId::ServerA {
            return Err(Error::abort(round, format!("aggregated count from {}", env.from)));
        }
        let total = self.decrypt_single(&env, round)?;
        self.total = Some(total as usize);
        net.send(self.id(), PartyId::ServerA, MessageKind::CountResult, wire::encode_u64(total));
        Ok(true)
    }

    pub(crate) fn receive_count(&mut self, net: &mut Network) -> Result<()> {
        if self.total.is_some() {
            return Ok(());
        }
        let round = Round::SecureCount;
        let env = expect_from(net, self.id(), MessageKind::CountResult, PartyId::ServerA, round)?;
        self.total = Some(wire::decode_u64(&env.payload).map_err(abort(round))? as usize);
        Ok(())
    }

    pub(crate) fn receive_offset(&mut self, net: &mut Network) -> Result<()> {
        let round = Round::IndexAssignment;
        let env = expect_from(net, self.id(), MessageKind::EncOffsetStart, PartyId::ServerA, round)?;
        let start = self.decrypt_single(&env, round)?;
        let total = self.total.ok_or_else(|| missing(round, "total count"))?;
        let xi = self.xi_global.ok_or_else(|| missing(round, "global seed"))?;
        let perm = permutation(total, xi).map_err(abort(round))?;
        let z = index_set(&perm, start, self.local_count()).map_err(abort(round))?;
        self.start = Some(start);
        self.z_set = Some(z);
        Ok(())
    }

    pub(crate) fn mask_and_send(&mut self, t_param: f64, sigma: f64, net: &mut Network) -> Result<()> {
        let round = Round::Masking;
        let xi = self.xi_global.ok_or_else(|| missing(round, "global seed"))?;
        let total = self.total.ok_or_else(|| missing(round, "total count"))?;
        let z = self.z_set.as_ref().ok_or_else(|| missing(round, "index set"))?;
        let d = self.data.cols();

        let masking = build_masking_matrix(d, xi, t_param).map_err(abort(round))?;
        let noise = noise_matrix(total, d, sigma, &mut self.rng).map_err(abort(round))?;
        let x_tilde = masking.apply(&self.data).map_err(abort(round))?;
        let w = masked_contribution(&x_tilde, z, &noise).map_err(abort(round))?;

        net.send(self.id(), PartyId::ServerA, MessageKind::NoiseMatrix, wire::encode_matrix(&noise));
        net.send(self.id(), PartyId::ServerP, MessageKind::MaskedMatrix, wire::encode_matrix(&w));
        self.masking = Some(masking);
        Ok(())
    }

    pub(crate) fn send_detection_config(&self, config: &DetectionConfig, net: &mut Network) -> Result<()> {
        let json = serde_json::to_vec(config).map_err(|e| Error::abort(Round::Detection, e.to_string()))?;
        use base64::Engine;
        let payload = base64::engine::general_purpose::STANDARD.encode(json);
        net.send(self.id(), PartyId::ServerP, MessageKind::OutlierPolicy, payload);
        Ok(())
    }

    pub(crate) fn receive_scores(&mut self, policy: &OutlierPolicy, net: &mut Network) -> Result<()> {
        let round = Round::Reporting;
        let env = expect_from(net, self.id(), MessageKind::ScoreVector, PartyId::ServerP, round)?;
        let m = wire::decode_matrix(&env.payload).map_err(abort(round))?;
        let total = self.total.ok_or_else(|| missing(round, "total count"))?;
        if m.rows() != total || m.cols() != 1 {
            return Err(Error::abort(
                round,
                format!("score vector is {}x{}, expected {total}x1", m.rows(), m.cols()),
            ));
        }
        let scores = ScoreVector::new(m.into_vec());
        let global = policy.flag_rows(&scores).map_err(abort(round))?;
        let z = self.z_set.as_ref().ok_or_else(|| missing(round, "index set"))?;
        self.flags = Some(z.iter().map(|&k| global[k]).collect());
        self.scores = Some(scores);
        Ok(())
    }

    /// Broadcast scores at this client's own rows, in local row order.
    pub fn local_scores(&self) -> Option<Vec<f64>> {
        let scores = self.scores.as_ref()?;
        Some(self.z_set.as_ref()?.iter().map(|&k| scores.as_slice()[k]).collect())
    }

    /// Local rows (and labels) with flagged outliers removed.
    pub fn cleaned(&self) -> Option<(Matrix, Option<Vec<u8>>)> {
        let flags = self.flags.as_ref()?;
        let keep: Vec<usize> = (0..flags.len()).filter(|&j| !flags[j]).collect();
        let labels = self.labels.as_ref().map(|l| keep.iter().map(|&j| l[j]).collect());
        Some((self.data.select_rows(&keep), labels))
    }
}

#[derive(Debug)]
pub struct ServerA {
    m: usize,
    rng: ChaCha20Rng,
    /// Private client ordering used for the designated decryptor and the offsets.
    order: Vec<usize>,
    public_keys: BTreeMap<usize, PublicKey>,
    /// `xi_enc[i][j] = [xi^i]_{pk^j}`.
    xi_enc: BTreeMap<usize, Vec<Ciphertext>>,
    total: Option<usize>,
    h_offset: Option<usize>,
    r_sum: Option<Matrix>,
}

impl ServerA {
    pub(crate) fn new(m: usize, mut rng: ChaCha20Rng) -> Self {
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        Self {
            m,
            rng,
            order,
            public_keys: BTreeMap::new(),
            xi_enc: BTreeMap::new(),
            total: None,
            h_offset: None,
            r_sum: None,
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn total(&self) -> Option<usize> {
        self.total
    }

    pub fn h_offset(&self) -> Option<usize> {
        self.h_offset
    }

    pub fn encrypted_shares(&self) -> &BTreeMap<usize, Vec<Ciphertext>> {
        &self.xi_enc
    }

    pub fn noise_sum(&self) -> Option<&Matrix> {
        self.r_sum.as_ref()
    }

    fn key(&self, i: usize, round: Round) -> Result<&PublicKey> {
        self.public_keys
            .get(&i)
            .ok_or_else(|| Error::abort(round, format!("no public key for client {i}")))
    }

    fn ciphertext_rows(&self, envelopes: BTreeMap<usize, Envelope>, round: Round) -> Result<BTreeMap<usize, Vec<Ciphertext>>> {
        envelopes
            .into_iter()
            .map(|(i, env)| {
                let cts = wire::decode_ciphertexts(&env.payload).map_err(abort(round))?;
                if cts.len() != self.m {
                    return Err(Error::abort(
                        round,
                        format!("client {i} sent {} ciphertexts, expected {}", cts.len(), self.m),
                    ));
                }
                Ok((i, cts))
            })
            .collect()
    }

    pub(crate) fn forward_keys(&mut self, net: &mut Network) -> Result<()> {
        let round = Round::KeyDistribution;
        let received = one_per_client(net.recv_all(PartyId::ServerA, MessageKind::PkBroadcast), self.m, round)?;
        for (i, env) in received {
            let (owner, pk) = parse_pk_payload(&env.payload).map_err(abort(round))?;
            if owner != i {
                return Err(Error::abort(round, format!("client {i} published a key for client {owner}")));
            }
            for j in (0..self.m).filter(|&j| j != i) {
                net.send(PartyId::ServerA, PartyId::Client(j), MessageKind::PkBroadcast, env.payload.clone());
            }
            net.send(PartyId::ServerA, PartyId::ServerP, MessageKind::PkBroadcast, env.payload.clone());
            self.public_keys.insert(i, pk);
        }
        Ok(())
    }

    pub(crate) fn aggregate_seed(&mut self, net: &mut Network) -> Result<()> {
        let round = Round::SeedAgreement;
        let received = one_per_client(net.recv_all(PartyId::ServerA, MessageKind::EncXi), self.m, round)?;
        self.xi_enc = self.ciphertext_rows(received, round)?;
        for i in 0..self.m {
            let pk = self.key(i, round)?;
            let sum = paillier::hom_sum(self.xi_enc.values().map(|row| &row[i]), pk)
                .ok_or_else(|| missing(round, "seed shares"))?;
            net.send(PartyId::ServerA, PartyId::Client(i), MessageKind::EncXiSum, sum.to_hex());
        }
        Ok(())
    }

    /// First designated client in the private ordering receives `[N]` under its key.
    pub(crate) fn aggregate_count(&mut self, net: &mut Network) -> Result<()> {
        let round = Round::SecureCount;
        let received = one_per_client(net.recv_all(PartyId::ServerA, MessageKind::EncCount), self.m, round)?;
        let counts = self.ciphertext_rows(received, round)?;
        let designated = self.order[0];
        let pk = self.key(designated, round)?;
        let sum = paillier::hom_sum(counts.values().map(|row| &row[designated]), pk)
            .ok_or_else(|| missing(round, "counts"))?;
        net.send(PartyId::ServerA, PartyId::Client(designated), MessageKind::EncCount, sum.to_hex());
        Ok(())
    }

    pub(crate) fn broadcast_count(&mut self, net: &mut Network) -> Result<()> {
        let round = Round::SecureCount;
        let designated = self.order[0];
        let env = expect_from(net, PartyId::ServerA, MessageKind::CountResult, PartyId::Client(designated), round)?;
        let total = wire::decode_u64(&env.payload).map_err(abort(round))?;
        for j in (0..self.m).filter(|&j| j != designated) {
            net.send(PartyId::ServerA, PartyId::Client(j), MessageKind::CountResult, env.payload.clone());
        }
        net.send(PartyId::ServerA, PartyId::ServerP, MessageKind::CountResult, env.payload);
        self.total = Some(total as usize);
        Ok(())
    }

    /// Homomorphic starting points `s = H + sum of earlier counts`, each under
    /// the receiving client's key. `h` is drawn from `1..m` so that `H > 0`.
    pub(crate) fn assign_offsets(&mut self, net: &mut Network) -> Result<()> {
        let round = Round::IndexAssignment;
        if self.m < 2 {
            return Err(Error::invalid("index assignment needs at least two clients"));
        }
        if self.xi_enc.len() != self.m {
            return Err(missing(round, "encrypted seed shares"));
        }
        let received = one_per_client(net.recv_all(PartyId::ServerA, MessageKind::EncCount), self.m, round)?;
        let counts = self.ciphertext_rows(received, round)?;
        let h = self.rng.gen_range(1..self.m);
        self.h_offset = Some(h);

        for (pos, &c) in self.order.iter().enumerate() {
            let pk = self.key(c, round)?;
            let offset_terms = self.order[..h].iter().map(|k| &self.xi_enc[k][c]);
            let count_terms = self.order[..pos].iter().map(|q| &counts[q][c]);
            let start = paillier::hom_sum(offset_terms.chain(count_terms), pk)
                .ok_or_else(|| missing(round, "offset terms"))?;
            net.send(PartyId::ServerA, PartyId::Client(c), MessageKind::EncOffsetStart, start.to_hex());
        }
        Ok(())
    }

    pub(crate) fn aggregate_noise(&mut self, net: &mut Network) -> Result<()> {
        let round = Round::Aggregation;
        let received = one_per_client(net.recv_all(PartyId::ServerA, MessageKind::NoiseMatrix), self.m, round)?;
        let mats = received
            .values()
            .map(|env| wire::decode_matrix(&env.payload))
            .collect::<Result<Vec<_>>>()
            .map_err(abort(round))?;
        let r = sum_matrices(&mats).map_err(abort(round))?;
        net.send(PartyId::ServerA, PartyId::ServerP, MessageKind::NoiseSum, wire::encode_matrix(&r));
        self.r_sum = Some(r);
        Ok(())
    }
}

#[derive(Debug)]
pub struct ServerP {
    m: usize,
    public_keys: BTreeMap<usize, PublicKey>,
    total: Option<usize>,
    w_sum: Option<Matrix>,
    r_sum: Option<Matrix>,
    x_masked: Option<Matrix>,
    config: Option<DetectionConfig>,
    forest: Option<Forest>,
    scores: Option<ScoreVector>,
}

impl ServerP {
    pub(crate) fn new(m: usize) -> Self {
        Self {
            m,
            public_keys: BTreeMap::new(),
            total: None,
            w_sum: None,
            r_sum: None,
            x_masked: None,
            config: None,
            forest: None,
            scores: None,
        }
    }

    pub fn total(&self) -> Option<usize> {
        self.total
    }

    pub fn public_keys(&self) -> &BTreeMap<usize, PublicKey> {
        &self.public_keys
    }

    pub fn masked_sum(&self) -> Option<&Matrix> {
        self.w_sum.as_ref()
    }

    pub fn noise_sum(&self) -> Option<&Matrix> {
        self.r_sum.as_ref()
    }

    pub fn x_masked(&self) -> Option<&Matrix> {
        self.x_masked.as_ref()
    }

    pub fn forest(&self) -> Option<&Forest> {
        self.forest.as_ref()
    }

    pub fn scores(&self) -> Option<&ScoreVector> {
        self.scores.as_ref()
    }

    pub(crate) fn collect_keys(&mut self, net: &mut Network) -> Result<()> {
        let round = Round::KeyDistribution;
        for env in net.recv_all(PartyId::ServerP, MessageKind::PkBroadcast) {
            let (owner, pk) = parse_pk_payload(&env.payload).map_err(abort(round))?;
            self.public_keys.insert(owner, pk);
        }
        if self.public_keys.len() != self.m {
            return Err(Error::abort(
                round,
                format!("principal server holds {} of {} public keys", self.public_keys.len(), self.m),
            ));
        }
        Ok(())
    }

    pub(crate) fn receive_count(&mut self, net: &mut Network) -> Result<()> {
        let round = Round::SecureCount;
        let env = expect_from(net, PartyId::ServerP, MessageKind::CountResult, PartyId::ServerA, round)?;
        self.total = Some(wire::decode_u64(&env.payload).map_err(abort(round))? as usize);
        Ok(())
    }

    pub(crate) fn aggregate(&mut self, net: &mut Network) -> Result<()> {
        let round = Round::Aggregation;
        let received = one_per_client(net.recv_all(PartyId::ServerP, MessageKind::MaskedMatrix), self.m, round)?;
        let mats = received
            .values()
            .map(|env| wire::decode_matrix(&env.payload))
            .collect::<Result<Vec<_>>>()
            .map_err(abort(round))?;
        let w = sum_matrices(&mats).map_err(abort(round))?;
        let env = expect_from(net, PartyId::ServerP, MessageKind::NoiseSum, PartyId::ServerA, round)?;
        let r = wire::decode_matrix(&env.payload).map_err(abort(round))?;
        let x = denoise(&w, &r).map_err(abort(round))?;
        let total = self.total.ok_or_else(|| missing(round, "total count"))?;
        if x.rows() != total {
            return Err(Error::abort(round, format!("masked matrix has {} rows, expected {total}", x.rows())));
        }
        self.w_sum = Some(w);
        self.r_sum = Some(r);
        self.x_masked = Some(x);
        Ok(())
    }

    pub(crate) fn detect(&mut self, net: &mut Network) -> Result<()> {
        use base64::Engine;
        let round = Round::Detection;
        let env = net
            .recv(PartyId::ServerP, MessageKind::OutlierPolicy)
            .ok_or_else(|| Error::abort(round, "no detection configuration received"))?;
        let json = base64::engine::general_purpose::STANDARD
            .decode(&env.payload)
            .map_err(|e| Error::abort(round, e.to_string()))?;
        let config: DetectionConfig = serde_json::from_slice(&json).map_err(|e| Error::abort(round, e.to_string()))?;
        config.policy.validate()?;
        let x = self.x_masked.as_ref().ok_or_else(|| missing(round, "masked matrix"))?;

        let forest = Forest::fit(x, &config.forest, config.seed).map_err(abort(round))?;
        let scores = forest.score_all(x).map_err(abort(round))?;
        let column = Matrix::new(scores.len(), 1, scores.as_slice().to_vec())?;
        let payload = wire::encode_matrix(&column);
        for i in 0..self.m {
            net.send(PartyId::ServerP, PartyId::Client(i), MessageKind::ScoreVector, payload.clone());
        }
        self.config = Some(config);
        self.forest = Some(forest);
        self.scores = Some(scores);
        Ok(())
    }
}
