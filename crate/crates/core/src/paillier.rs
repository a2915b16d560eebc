//! Paillier additively homomorphic encryption (`g = n + 1` variant).
//!
//! Used only on a handful of small non-negative integers per protocol round:
//! seed shares, local sample sizes and starting offsets. Key generation and
//! encryption randomness must come from a cryptographic generator supplied by
//! the caller (`OsRng`, or a seeded ChaCha stream in reproducible simulations).

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};

use crate::error::{Error, Result};

/// Key sizes accepted by [`gen`].
pub const SUPPORTED_KEYSIZES: [u64; 4] = [512, 1024, 2048, 3072];

/// Default runtime key size.
pub const DEFAULT_KEYSIZE: u64 = 2048;

const MILLER_RABIN_ROUNDS: usize = 32;

#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n_squared: BigUint,
    g: BigUint,
}

#[derive(Clone)]
pub struct SecretKey {
    lambda: BigUint,
    mu: BigUint,
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({} bits)", self.n.bits())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    value: BigUint,
}

impl PublicKey {
    /// Rebuilds a public key from its modulus.
    pub fn from_modulus(n: BigUint) -> Result<Self> {
        if n.bits() < 16 || n.is_even() {
            return Err(Error::invalid("Paillier modulus must be an odd composite of reasonable size"));
        }
        let n_squared = &n * &n;
        let g = &n + 1u32;
        Ok(Self { n, n_squared, g })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    /// Big-endian hex encoding of `n`.
    pub fn to_hex(&self) -> String {
        self.n.to_str_radix(16)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        Self::from_modulus(parse_hex(s)?)
    }

    fn check_ciphertext(&self, c: &Ciphertext) -> Result<()> {
        if c.value.is_zero() || c.value >= self.n_squared {
            return Err(Error::InvalidCiphertext("value outside (0, n^2)".into()));
        }
        if !c.value.gcd(&self.n).is_one() {
            return Err(Error::InvalidCiphertext("value not coprime to n^2".into()));
        }
        Ok(())
    }
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn to_hex(&self) -> String {
        self.value.to_str_radix(16)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        Ok(Self { value: parse_hex(s)? })
    }
}

fn parse_hex(s: &str) -> Result<BigUint> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::Format(format!("not a hex integer: {s:?}")));
    }
    BigUint::parse_bytes(s.as_bytes(), 16).ok_or_else(|| Error::Format(format!("not a hex integer: {s:?}")))
}

/// Generates a key pair whose modulus has exactly `keysize` bits.
pub fn gen<R: RngCore + CryptoRng>(keysize: u64, rng: &mut R) -> Result<(PublicKey, SecretKey)> {
    if !SUPPORTED_KEYSIZES.contains(&keysize) {
        return Err(Error::invalid(format!(
            "unsupported Paillier key size {keysize}; expected one of {SUPPORTED_KEYSIZES:?}"
        )));
    }
    let half = keysize / 2;
    loop {
        let p = random_prime(half, rng);
        let q = random_prime(half, rng);
        if p == q {
            continue;
        }
        let n = &p * &q;
        if n.bits() != keysize {
            continue;
        }
        let p1 = &p - 1u32;
        let q1 = &q - 1u32;
        if !n.gcd(&(&p1 * &q1)).is_one() {
            continue;
        }
        let lambda = p1.lcm(&q1);
        let pk = PublicKey::from_modulus(n)?;
        let u = pk.g.modpow(&lambda, &pk.n_squared);
        let l = (u - 1u32) / &pk.n;
        let Some(mu) = l.modinv(&pk.n) else {
            continue;
        };
        return Ok((pk, SecretKey { lambda, mu }));
    }
}

/// Encrypts `x` in `[0, n)` as `(1 + x n) r^n mod n^2`.
pub fn enc<R: RngCore + CryptoRng>(x: &BigUint, pk: &PublicKey, rng: &mut R) -> Result<Ciphertext> {
    if x >= &pk.n {
        return Err(Error::invalid("plaintext must be smaller than the modulus"));
    }
    let r = loop {
        let r = rng.gen_biguint_range(&BigUint::one(), &pk.n);
        if r.gcd(&pk.n).is_one() {
            break r;
        }
    };
    // g^x = (1 + n)^x = 1 + x n (mod n^2)
    let gx = (BigUint::one() + x * &pk.n) % &pk.n_squared;
    let rn = r.modpow(&pk.n, &pk.n_squared);
    Ok(Ciphertext {
        value: gx * rn % &pk.n_squared,
    })
}

/// Convenience wrapper for small integer plaintexts.
pub fn enc_u64<R: RngCore + CryptoRng>(x: u64, pk: &PublicKey, rng: &mut R) -> Result<Ciphertext> {
    enc(&BigUint::from(x), pk, rng)
}

pub fn dec(c: &Ciphertext, sk: &SecretKey, pk: &PublicKey) -> Result<BigUint> {
    pk.check_ciphertext(c)?;
    let u = c.value.modpow(&sk.lambda, &pk.n_squared);
    let l = (u - 1u32) / &pk.n;
    Ok(l * &sk.mu % &pk.n)
}

/// Decrypts and narrows to `u64`; larger plaintexts are an error.
pub fn dec_u64(c: &Ciphertext, sk: &SecretKey, pk: &PublicKey) -> Result<u64> {
    let x = dec(c, sk, pk)?;
    u64::try_from(&x).map_err(|_| Error::InvalidCiphertext("plaintext does not fit in 64 bits".into()))
}

/// Homomorphic addition: the product of the ciphertexts.
pub fn hom_add(a: &Ciphertext, b: &Ciphertext, pk: &PublicKey) -> Ciphertext {
    Ciphertext {
        value: &a.value * &b.value % &pk.n_squared,
    }
}

/// Homomorphic multiplication by a plaintext scalar: `c^k`.
pub fn scalar_mul(k: &BigUint, c: &Ciphertext, pk: &PublicKey) -> Ciphertext {
    Ciphertext {
        value: c.value.modpow(k, &pk.n_squared),
    }
}

/// Folds [`hom_add`] over a non-empty sequence of ciphertexts.
pub fn hom_sum<'a>(mut items: impl Iterator<Item = &'a Ciphertext>, pk: &PublicKey) -> Option<Ciphertext> {
    let first = items.next()?.clone();
    Some(items.fold(first, |acc, c| hom_add(&acc, c, pk)))
}

const SMALL_PRIMES: [u32; 53] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109,
    113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233, 239,
    241, 251,
];

/// Random prime with exactly `bits` bits and its two top bits set, so that the
/// product of two such primes has exactly `2 * bits` bits.
fn random_prime<R: RngCore + CryptoRng>(bits: u64, rng: &mut R) -> BigUint {
    loop {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, rng) {
            return candidate;
        }
    }
}

pub(crate) fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &p in &SMALL_PRIMES {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    if n.is_even() {
        return n == &two;
    }

    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    let upper = n - 1u32;

    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        let a = rng.gen_biguint_range(&two, &upper);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = &x * &x % n;
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::OsRng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn keys(seed: u64) -> (PublicKey, SecretKey, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (pk, sk) = gen(512, &mut rng).unwrap();
        (pk, sk, rng)
    }

    #[test]
    fn primality_against_trial_division() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        for n in 0u32..3000 {
            let brute = n >= 2 && (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0);
            assert_eq!(is_probable_prime(&BigUint::from(n), &mut rng), brute, "n = {n}");
        }
        // Carmichael numbers
        for n in [561u32, 1105, 1729, 2465, 2821, 6601, 8911] {
            assert!(!is_probable_prime(&BigUint::from(n), &mut rng));
        }
    }

    #[test]
    fn key_shape() {
        let (pk, _, _) = keys(1);
        assert_eq!(pk.bits(), 512);
        assert_eq!(pk.g(), &(pk.n() + 1u32));
        assert_eq!(pk.n_squared(), &(pk.n() * pk.n()));
    }

    #[test]
    fn keysize_must_be_supported() {
        assert!(matches!(gen(100, &mut OsRng), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn fresh_keys_differ() {
        let (a, _) = gen(512, &mut OsRng).unwrap();
        let (b, _) = gen(512, &mut OsRng).unwrap();
        assert_ne!(a.n(), b.n());
    }

    #[test]
    fn roundtrip_random_and_boundary() {
        let (pk, sk, mut rng) = keys(2);
        for _ in 0..100 {
            let x = rng.gen_biguint_below(pk.n());
            assert_eq!(dec(&enc(&x, &pk, &mut rng).unwrap(), &sk, &pk).unwrap(), x);
        }
        for x in [BigUint::zero(), BigUint::one(), pk.n() - 1u32] {
            assert_eq!(dec(&enc(&x, &pk, &mut rng).unwrap(), &sk, &pk).unwrap(), x);
        }
    }

    #[test]
    fn encryption_is_probabilistic() {
        let (pk, sk, mut rng) = keys(3);
        let a = enc_u64(42, &pk, &mut rng).unwrap();
        let b = enc_u64(42, &pk, &mut rng).unwrap();
        assert_ne!(a, b);
        assert_eq!(dec_u64(&a, &sk, &pk).unwrap(), 42);
        assert_eq!(dec_u64(&b, &sk, &pk).unwrap(), 42);
    }

    #[test]
    fn plaintext_out_of_range() {
        let (pk, _, mut rng) = keys(4);
        let n = pk.n().clone();
        assert!(matches!(enc(&n, &pk, &mut rng), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn homomorphic_examples() {
        let (pk, sk, mut rng) = keys(5);
        let e = |x: u64, rng: &mut ChaCha20Rng| enc_u64(x, &pk, rng).unwrap();

        let sum = hom_add(&e(3, &mut rng), &e(4, &mut rng), &pk);
        assert_eq!(dec_u64(&sum, &sk, &pk).unwrap(), 7);

        let prod = scalar_mul(&BigUint::from(5u32), &e(6, &mut rng), &pk);
        assert_eq!(dec_u64(&prod, &sk, &pk).unwrap(), 30);

        let c = e(17, &mut rng);
        assert_eq!(dec_u64(&hom_add(&e(0, &mut rng), &c, &pk), &sk, &pk).unwrap(), 17);

        let ones: Vec<_> = (0..5).map(|_| e(1, &mut rng)).collect();
        assert_eq!(dec_u64(&hom_sum(ones.iter(), &pk).unwrap(), &sk, &pk).unwrap(), 5);

        let wrap = hom_add(&enc(&(pk.n() - 1u32), &pk, &mut rng).unwrap(), &e(1, &mut rng), &pk);
        assert_eq!(dec(&wrap, &sk, &pk).unwrap(), BigUint::zero());

        assert_eq!(dec_u64(&scalar_mul(&BigUint::one(), &c, &pk), &sk, &pk).unwrap(), 17);
        assert_eq!(dec_u64(&scalar_mul(&BigUint::zero(), &c, &pk), &sk, &pk).unwrap(), 0);
        assert_eq!(dec_u64(&scalar_mul(&BigUint::from(7u32), &e(9, &mut rng), &pk), &sk, &pk).unwrap(), 63);
    }

    #[test]
    fn rejects_non_coprime_ciphertext() {
        let (pk, sk, _) = keys(6);
        let bad = Ciphertext { value: pk.n().clone() };
        assert!(matches!(dec(&bad, &sk, &pk), Err(Error::InvalidCiphertext(_))));
        let zero = Ciphertext { value: BigUint::zero() };
        assert!(dec(&zero, &sk, &pk).is_err());
    }

    #[test]
    fn hex_roundtrip() {
        let (pk, sk, mut rng) = keys(7);
        let c = enc_u64(99, &pk, &mut rng).unwrap();
        let pk2 = PublicKey::from_hex(&pk.to_hex()).unwrap();
        assert_eq!(pk2, pk);
        let c2 = Ciphertext::from_hex(&c.to_hex()).unwrap();
        assert_eq!(dec_u64(&c2, &sk, &pk2).unwrap(), 99);
        assert!(Ciphertext::from_hex("xyz").is_err());
        assert!(Ciphertext::from_hex("").is_err());
    }
}
