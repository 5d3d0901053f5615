//! Commutative deterministic encryption: per-party secret exponents over a
//! shared safe prime, with items encoded injectively into the
//! quadratic-residue subgroup. Nested encryptions by different keys commute,
//! which is what lets fully encrypted item sets be compared and deduplicated
//! without decryption.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed};
use rand::Rng;

use crate::error::ProtocolError;

/// Safe primes p = 2q + 1 (largest below the power of two), one per
/// supported key length. All are 3 mod 4, so square roots in the QR subgroup
/// are a single exponentiation.
const SAFE_PRIME_64: &str = "fffffffffffffa43";
const SAFE_PRIME_128: &str = "ffffffffffffffffffffffffffffc3a7";
const SAFE_PRIME_256: &str = "ffffffffffffffffffffffffffffffffffffffffffffffffffffffffffff72ef";

pub fn shared_prime(key_bits: u32) -> Result<BigUint, ProtocolError> {
    let hex = match key_bits {
        64 => SAFE_PRIME_64,
        128 => SAFE_PRIME_128,
        256 => SAFE_PRIME_256,
        other => {
            return Err(ProtocolError::ConfigError(format!(
                "unsupported key length {other}; supported: 64, 128, 256"
            )))
        }
    };
    Ok(BigUint::parse_bytes(hex.as_bytes(), 16).expect("valid hex constant"))
}

/// Longest item (in bytes) that encodes injectively at a key length.
pub fn max_item_bytes(key_bits: u32) -> usize {
    key_bits as usize / 8 - 2
}

/// An element of the cipher group: either an encoded plaintext or a
/// ciphertext at any encryption depth.
pub type GroupElem = BigUint;

/// A decoded item: a real protocol item, a padding dummy, or the public
/// "no single class value" symbol of the class-label test.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Item {
    Real(String),
    Dummy(u64),
    Bottom,
}

const PREFIX_REAL: u8 = 0x01;
const PREFIX_DUMMY: u8 = 0x02;
const PREFIX_BOTTOM: u8 = 0x03;

/// One party's key: the shared prime plus a secret exponent pair with
/// e·d = 1 mod (p-1). Encryption is x^e, decryption x^d.
#[derive(Debug, Clone)]
pub struct CommutativeKey {
    prime: BigUint,
    encrypt_exp: BigUint,
    decrypt_exp: BigUint,
}

fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    let egcd = BigInt::from(a.clone()).extended_gcd(&BigInt::from(m.clone()));
    if !egcd.gcd.is_one() {
        return None;
    }
    let m_int = BigInt::from(m.clone());
    let mut x = egcd.x % &m_int;
    if x.is_negative() {
        x += &m_int;
    }
    x.to_biguint()
}

impl CommutativeKey {
    /// Draw a fresh key for the shared group of the given length.
    pub fn generate<R: Rng>(key_bits: u32, rng: &mut R) -> Result<Self, ProtocolError> {
        let prime = shared_prime(key_bits)?;
        let order = &prime - 1u32;
        loop {
            let mut bytes = vec![0u8; (key_bits as usize) / 8];
            rng.fill_bytes(&mut bytes);
            let e = BigUint::from_bytes_be(&bytes) % &order;
            if e <= BigUint::from(2u32) {
                continue;
            }
            if e.gcd(&order).is_one() {
                let d = mod_inverse(&e, &order).expect("coprime exponent is invertible");
                return Ok(CommutativeKey {
                    prime,
                    encrypt_exp: e,
                    decrypt_exp: d,
                });
            }
        }
    }

    pub fn prime(&self) -> &BigUint {
        &self.prime
    }

    /// Injective encoding of an item into the quadratic-residue subgroup:
    /// prefix the payload, read it as an integer r < (p-1)/2 and square it.
    pub fn encode(&self, item: &Item) -> Result<GroupElem, ProtocolError> {
        let mut bytes = Vec::new();
        match item {
            Item::Real(s) => {
                bytes.push(PREFIX_REAL);
                bytes.extend_from_slice(s.as_bytes());
            }
            Item::Dummy(nonce) => {
                bytes.push(PREFIX_DUMMY);
                bytes.extend_from_slice(&nonce.to_be_bytes()[2..]); // 48-bit nonce
            }
            Item::Bottom => bytes.push(PREFIX_BOTTOM),
        }
        let limit = (self.prime.bits() as usize) / 8 - 1;
        if bytes.len() > limit {
            return Err(ProtocolError::EncodingError(format!(
                "item needs {} bytes but keys of {} bits admit at most {}",
                bytes.len() - 1,
                self.prime.bits(),
                limit - 1
            )));
        }
        let r = BigUint::from_bytes_be(&bytes);
        debug_assert!(r < (&self.prime - 1u32) / 2u32);
        Ok(r.modpow(&BigUint::from(2u32), &self.prime))
    }

    /// Inverse of [`CommutativeKey::encode`] on fully decrypted elements.
    pub fn decode(&self, elem: &GroupElem) -> Result<Item, ProtocolError> {
        // p = 3 mod 4: the square roots of g are g^((p+1)/4) and its negation;
        // the encoding used the smaller one.
        let exp = (&self.prime + 1u32) / 4u32;
        let s = elem.modpow(&exp, &self.prime);
        let r = if s > (&self.prime / 2u32) {
            &self.prime - &s
        } else {
            s
        };
        let bytes = r.to_bytes_be();
        match bytes.split_first() {
            Some((&PREFIX_REAL, rest)) => String::from_utf8(rest.to_vec())
                .map(Item::Real)
                .map_err(|_| ProtocolError::EncodingError("invalid utf-8 payload".into())),
            Some((&PREFIX_DUMMY, rest)) if rest.len() == 6 => {
                let mut buf = [0u8; 8];
                buf[2..].copy_from_slice(rest);
                Ok(Item::Dummy(u64::from_be_bytes(buf)))
            }
            Some((&PREFIX_BOTTOM, [])) => Ok(Item::Bottom),
            _ => Err(ProtocolError::EncodingError(
                "element does not decode to a known item kind".into(),
            )),
        }
    }

    pub fn encrypt(&self, elem: &GroupElem) -> GroupElem {
        elem.modpow(&self.encrypt_exp, &self.prime)
    }

    pub fn decrypt(&self, elem: &GroupElem) -> GroupElem {
        elem.modpow(&self.decrypt_exp, &self.prime)
    }
}

/// Items of a real string set, encoded for a given key length.
pub fn encode_real_items(
    key: &CommutativeKey,
    items: &[String],
) -> Result<Vec<GroupElem>, ProtocolError> {
    items
        .iter()
        .map(|s| key.encode(&Item::Real(s.clone())))
        .collect()
}
