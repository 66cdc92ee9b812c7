//! Decentralized identifiers, signed certificate listings, one-time message
//! tags and the three-phase trading contract.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use hmac::{Hmac, Mac};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::Seconds;

type HmacSha256 = Hmac<Sha256>;

const DID_PREFIX: &str = "did:rec:";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Did(String);

impl Did {
    pub fn from_public_key(key: &[u8; 32]) -> Self {
        Did(format!("{DID_PREFIX}{}", hex::encode(Sha256::digest(key))))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("malformed DID `{0}`")]
    MalformedDid(String),
    #[error("expiry {t_exp} is not after generation {t_gen}")]
    BadValidity { t_gen: Seconds, t_exp: Seconds },
    #[error("public key is not a valid curve point")]
    BadPublicKey,
    #[error("{0} is registered with a different key")]
    KeyMismatch(Did),
}

impl FromStr for Did {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex_part = s
            .strip_prefix(DID_PREFIX)
            .ok_or_else(|| IdentityError::MalformedDid(s.to_string()))?;
        let ok = hex_part.len() == 64
            && hex_part
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if !ok {
            return Err(IdentityError::MalformedDid(s.to_string()));
        }
        Ok(Did(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DidDocument {
    pub did: Did,
    pub public_key: [u8; 32],
}

/// Derives a keypair from 32 bytes of entropy. Equal entropy gives equal
/// identities, which keeps simulations reproducible.
pub fn create_did(entropy: &[u8; 32]) -> (DidDocument, SigningKey) {
    let key = SigningKey::from_bytes(entropy);
    let public_key = key.verifying_key().to_bytes();
    (
        DidDocument {
            did: Did::from_public_key(&public_key),
            public_key,
        },
        key,
    )
}

/// Known identities. Registering the same document twice is a no-op.
#[derive(Debug, Clone, Default)]
pub struct DidRegistry {
    docs: HashMap<Did, DidDocument>,
}

impl DidRegistry {
    pub fn register(&mut self, doc: DidDocument) -> Result<&DidDocument, IdentityError> {
        if Did::from_public_key(&doc.public_key) != doc.did {
            return Err(IdentityError::KeyMismatch(doc.did));
        }
        Ok(self.docs.entry(doc.did.clone()).or_insert(doc))
    }

    pub fn resolve(&self, did: &Did) -> Option<&DidDocument> {
        self.docs.get(did)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedRec {
    pub payload: Vec<u8>,
    pub signature: [u8; 64],
    pub t_gen: Seconds,
    pub t_exp: Seconds,
}

impl SignedRec {
    fn message(payload: &[u8], t_gen: Seconds, t_exp: Seconds) -> Vec<u8> {
        let mut m = Vec::with_capacity(payload.len() + 16);
        m.extend_from_slice(payload);
        m.extend_from_slice(&t_gen.to_le_bytes());
        m.extend_from_slice(&t_exp.to_le_bytes());
        m
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(Self::message(&self.payload, self.t_gen, self.t_exp)).into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Forged,
    Expired,
}

pub fn sign_rec(
    payload: &[u8],
    key: &SigningKey,
    t_gen: Seconds,
    t_exp: Seconds,
) -> Result<SignedRec, IdentityError> {
    if t_exp <= t_gen {
        return Err(IdentityError::BadValidity { t_gen, t_exp });
    }
    let sig = key.sign(&SignedRec::message(payload, t_gen, t_exp));
    Ok(SignedRec {
        payload: payload.to_vec(),
        signature: sig.to_bytes(),
        t_gen,
        t_exp,
    })
}

/// A bad signature is reported as forged even when the listing has also
/// run out.
pub fn verify_rec(rec: &SignedRec, public_key: &[u8; 32], now: Seconds) -> Verdict {
    if !verify_bytes(
        &SignedRec::message(&rec.payload, rec.t_gen, rec.t_exp),
        &rec.signature,
        public_key,
    ) {
        return Verdict::Forged;
    }
    if now > rec.t_exp {
        return Verdict::Expired;
    }
    Verdict::Valid
}

fn verify_bytes(message: &[u8], signature: &[u8; 64], public_key: &[u8; 32]) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(public_key) else {
        return false;
    };
    vk.verify(message, &Signature::from_bytes(signature)).is_ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OtpTag(pub [u8; 32]);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OtpError {
    #[error("{0} is not a participant of this channel")]
    NotParticipant(Did),
    #[error("tag does not match sender and timestamp")]
    BadTag,
    #[error("tag was already used")]
    Replayed,
}

/// Message channel where every message carries a keyed tag bound to its
/// sender and timestamp, and each tag is accepted once.
#[derive(Debug, Clone)]
pub struct OtpChannel {
    pub channel_id: u64,
    participants: Vec<Did>,
    key: [u8; 32],
    used: HashSet<OtpTag>,
}

impl OtpChannel {
    pub fn open(channel_id: u64, participants: Vec<Did>, key: [u8; 32]) -> Self {
        OtpChannel {
            channel_id,
            participants,
            key,
            used: HashSet::new(),
        }
    }

    pub fn participants(&self) -> &[Did] {
        &self.participants
    }

    fn mac(&self, did: &Did, timestamp: Seconds) -> HmacSha256 {
        let mut m = HmacSha256::new_from_slice(&self.key).expect("any key length works");
        m.update(&self.channel_id.to_le_bytes());
        m.update(did.as_str().as_bytes());
        m.update(&timestamp.to_le_bytes());
        m
    }

    pub fn tag(&self, did: &Did, timestamp: Seconds) -> Result<OtpTag, OtpError> {
        if !self.participants.contains(did) {
            return Err(OtpError::NotParticipant(did.clone()));
        }
        Ok(OtpTag(self.mac(did, timestamp).finalize().into_bytes().into()))
    }

    /// Accepts `tag` for `(did, timestamp)` exactly once.
    pub fn accept(&mut self, did: &Did, timestamp: Seconds, tag: &OtpTag) -> Result<(), OtpError> {
        if !self.participants.contains(did) {
            return Err(OtpError::NotParticipant(did.clone()));
        }
        self.mac(did, timestamp)
            .verify_slice(&tag.0)
            .map_err(|_| OtpError::BadTag)?;
        if !self.used.insert(*tag) {
            return Err(OtpError::Replayed);
        }
        Ok(())
    }
}

/// A platform user holding its own signing key and token balance.
#[derive(Debug, Clone)]
pub struct Participant {
    pub doc: DidDocument,
    pub key: SigningKey,
    pub tokens: f64,
}

impl Participant {
    pub fn new(entropy: &[u8; 32], tokens: f64) -> Self {
        let (doc, key) = create_did(entropy);
        Participant { doc, key, tokens }
    }

    pub fn did(&self) -> &Did {
        &self.doc.did
    }
}

/// A signed certificate offered for sale.
#[derive(Debug, Clone)]
pub struct RecListing {
    pub rec: SignedRec,
    pub ask: f64,
    pub owner: Did,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTrade {
    pub seller: Did,
    pub buyer: Did,
    pub price: f64,
    pub rec_digest: [u8; 32],
}

impl StoredTrade {
    fn bytes(&self) -> Vec<u8> {
        let mut m = Vec::new();
        m.extend_from_slice(self.seller.as_str().as_bytes());
        m.extend_from_slice(self.buyer.as_str().as_bytes());
        m.extend_from_slice(&self.price.to_bits().to_le_bytes());
        m.extend_from_slice(&self.rec_digest);
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    PreBidding,
    Trading,
    Billing,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::PreBidding => "pre-bidding",
            Phase::Trading => "trading",
            Phase::Billing => "billing",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContractFailure {
    #[error("{0} is not registered")]
    Unregistered(Did),
    #[error("signature by {0} does not verify")]
    BadSignature(Did),
    #[error("listing has expired")]
    Expired,
    #[error(transparent)]
    Otp(#[from] OtpError),
    #[error("needs {need} tokens, holds {have}")]
    TokenShortfall { need: f64, have: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{phase} phase aborted: {failure}")]
pub struct ContractError {
    pub phase: Phase,
    pub failure: ContractFailure,
}

fn abort(phase: Phase, failure: impl Into<ContractFailure>) -> ContractError {
    ContractError {
        phase,
        failure: failure.into(),
    }
}

/// A buyer's offer: who is bidding and how much.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuyerBid {
    pub buyer: usize,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContractOutcome {
    NoMatch,
    Settled(StoredTrade),
}

/// Runs one listing through pre-bidding, trading and billing.
///
/// Pre-bidding checks every party is registered and the listing verifies
/// under the seller's key. Trading gathers signed, tagged bids over a fresh
/// channel and picks the highest bid that covers the ask (earliest on
/// ties). Billing verifies the winner's signed token request, moves tokens
/// and hands the certificate over. Nothing changes unless billing completes.
pub fn run_contract(
    registry: &DidRegistry,
    seller: &mut Participant,
    buyers: &mut [Participant],
    bids: &[BuyerBid],
    listing: &mut RecListing,
    now: Seconds,
) -> Result<ContractOutcome, ContractError> {
    // pre-bidding
    let seller_doc = registry
        .resolve(seller.did())
        .ok_or_else(|| abort(Phase::PreBidding, ContractFailure::Unregistered(seller.did().clone())))?;
    for b in buyers.iter() {
        if registry.resolve(b.did()).is_none() {
            return Err(abort(Phase::PreBidding, ContractFailure::Unregistered(b.did().clone())));
        }
    }
    match verify_rec(&listing.rec, &seller_doc.public_key, now) {
        Verdict::Valid => {}
        Verdict::Forged => {
            return Err(abort(Phase::PreBidding, ContractFailure::BadSignature(seller.did().clone())))
        }
        Verdict::Expired => return Err(abort(Phase::PreBidding, ContractFailure::Expired)),
    }

    // trading
    let rec_digest = listing.rec.digest();
    let mut dids = vec![seller.did().clone()];
    dids.extend(buyers.iter().map(|b| b.did().clone()));
    let channel_key: [u8; 32] = Sha256::new()
        .chain_update(rec_digest)
        .chain_update(now.to_le_bytes())
        .finalize()
        .into();
    let mut channel = OtpChannel::open(u64::from_le_bytes(rec_digest[..8].try_into().unwrap()), dids, channel_key);
    let mut best: Option<BuyerBid> = None;
    for (k, bid) in bids.iter().enumerate() {
        let Some(buyer) = buyers.get(bid.buyer) else { continue };
        let ts = now + k as Seconds;
        let mut msg = rec_digest.to_vec();
        msg.extend_from_slice(&bid.price.to_bits().to_le_bytes());
        let sig = buyer.key.sign(&msg).to_bytes();
        let tag = channel.tag(buyer.did(), ts).map_err(|e| abort(Phase::Trading, e))?;
        channel
            .accept(buyer.did(), ts, &tag)
            .map_err(|e| abort(Phase::Trading, e))?;
        let pk = registry.resolve(buyer.did()).expect("checked in pre-bidding").public_key;
        if !verify_bytes(&msg, &sig, &pk) {
            return Err(abort(Phase::Trading, ContractFailure::BadSignature(buyer.did().clone())));
        }
        if bid.price >= listing.ask && best.is_none_or(|b| bid.price > b.price) {
            best = Some(*bid);
        }
    }
    let Some(win) = best else {
        return Ok(ContractOutcome::NoMatch);
    };
    let stored = StoredTrade {
        seller: seller.did().clone(),
        buyer: buyers[win.buyer].did().clone(),
        price: listing.ask,
        rec_digest,
    };

    // billing
    let buyer = &mut buyers[win.buyer];
    let request = stored.bytes();
    let sig = buyer.key.sign(&request).to_bytes();
    let pk = registry.resolve(buyer.did()).expect("checked in pre-bidding").public_key;
    if !verify_bytes(&request, &sig, &pk) {
        return Err(abort(Phase::Billing, ContractFailure::BadSignature(buyer.did().clone())));
    }
    if buyer.tokens < stored.price {
        return Err(abort(
            Phase::Billing,
            ContractFailure::TokenShortfall {
                need: stored.price,
                have: buyer.tokens,
            },
        ));
    }
    buyer.tokens -= stored.price;
    seller.tokens += stored.price;
    listing.owner = buyer.did().clone();
    Ok(ContractOutcome::Settled(stored))
}
