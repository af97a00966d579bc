//! Key material: public b-vector, the two rotation keys, per-subset
//! threshold-equation solutions, and per-server key shares.
//!
//! For every k-subset {i1 < ... < ik} of servers the client fixes a
//! solution of `b_{i1} x_1 + ... + b_{ik} x_k = 1`. Summing the scaled
//! entries of any chosen subset therefore telescopes to sigma1, while any
//! proper subset misses it.

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::linalg::Angle;

/// Upper bound on n so the eager C(n,k) solution table stays tiny.
pub const DEFAULT_SERVER_CAP: usize = 8;

const RESAMPLE_ATTEMPTS: usize = 1000;

mod subset_map {
    //! JSON-safe encoding for maps keyed by server subsets: a list of
    //! (subset, value) pairs instead of non-string map keys.
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer, V: Serialize>(
        map: &BTreeMap<Vec<usize>, V>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        map.iter().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, V: Deserialize<'de>>(
        d: D,
    ) -> Result<BTreeMap<Vec<usize>, V>, D::Error> {
        Ok(Vec::<(Vec<usize>, V)>::deserialize(d)?
            .into_iter()
            .collect())
    }
}

/// All client-side key material. Never transmitted on the insecure
/// channel, but echoed into run reports for reproducibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyMaterial {
    pub n: usize,
    pub k: usize,
    /// Public non-zero reals b_1..b_n (index 0 holds b_1).
    pub b: Vec<f64>,
    pub sigma1: Angle,
    pub sigma2: Angle,
    /// Sorted k-subset of server ids -> solution vector, entry j belonging
    /// to the j-th server of the subset.
    #[serde(with = "subset_map")]
    pub solutions: BTreeMap<Vec<usize>, Vec<f64>>,
}

/// One server's secret key: for every (k-1)-subset of the other servers,
/// the rotation angle it contributes when chosen alongside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyShare {
    pub server_id: usize,
    #[serde(with = "subset_map")]
    pub entries: BTreeMap<Vec<usize>, f64>,
}

fn sample_nonzero(rng: &mut impl Rng) -> f64 {
    // Uniform over [-2, -0.1] u [0.1, 2]: magnitudes near zero give
    // ill-conditioned solutions.
    let mag = rng.gen_range(0.1..2.0);
    if rng.gen_bool(0.5) {
        mag
    } else {
        -mag
    }
}

fn sample_angle(rng: &mut impl Rng) -> f64 {
    loop {
        let v = rng.gen_range(0.0..std::f64::consts::TAU);
        if v > 0.0 {
            return v;
        }
    }
}

/// Generate key material for an (k, n)-threshold deployment.
pub fn generate(n: usize, k: usize, rng: &mut impl Rng) -> Result<KeyMaterial> {
    generate_with_cap(n, k, DEFAULT_SERVER_CAP, rng)
}

pub fn generate_with_cap(
    n: usize,
    k: usize,
    cap: usize,
    rng: &mut impl Rng,
) -> Result<KeyMaterial> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "require 0 < k <= n, got k={k} n={n}"
        )));
    }
    if n > cap {
        return Err(Error::invalid(format!("n={n} exceeds server cap {cap}")));
    }
    let b: Vec<f64> = (0..n).map(|_| sample_nonzero(rng)).collect();
    let sigma1 = Angle(sample_angle(rng));
    let sigma2 = Angle(sample_angle(rng));

    // Values already taken per server, across all subsets.
    let mut used: Vec<HashSet<u64>> = vec![HashSet::new(); n + 1];
    let mut solutions = BTreeMap::new();
    for subset in (1..=n).combinations(k) {
        let mut solved = None;
        'attempt: for _ in 0..RESAMPLE_ATTEMPTS {
            let mut xs: Vec<f64> = (0..k - 1).map(|_| sample_nonzero(rng)).collect();
            let partial: f64 = subset[..k - 1]
                .iter()
                .zip(&xs)
                .map(|(&i, &x)| b[i - 1] * x)
                .sum();
            let last = (1.0 - partial) / b[subset[k - 1] - 1];
            if last == 0.0 {
                continue;
            }
            xs.push(last);
            for (&i, &x) in subset.iter().zip(&xs) {
                if used[i].contains(&x.to_bits()) {
                    continue 'attempt;
                }
            }
            solved = Some(xs);
            break;
        }
        let xs = solved.ok_or_else(|| {
            Error::GenerationFailure(format!(
                "no admissible solution for subset {subset:?} after {RESAMPLE_ATTEMPTS} attempts"
            ))
        })?;
        for (&i, &x) in subset.iter().zip(&xs) {
            used[i].insert(x.to_bits());
        }
        solutions.insert(subset, xs);
    }

    Ok(KeyMaterial {
        n,
        k,
        b,
        sigma1,
        sigma2,
        solutions,
    })
}

/// The key share sent to one server: theta = sigma1 * b_i * x for every
/// (k-1)-subset of the other servers.
pub fn share_for(km: &KeyMaterial, server: usize) -> Result<KeyShare> {
    if server == 0 || server > km.n {
        return Err(Error::invalid(format!(
            "server index {server} out of range 1..={}",
            km.n
        )));
    }
    let mut entries = BTreeMap::new();
    for (subset, xs) in &km.solutions {
        let Some(pos) = subset.iter().position(|&i| i == server) else {
            continue;
        };
        let others: Vec<usize> = subset.iter().copied().filter(|&i| i != server).collect();
        entries.insert(others, km.sigma1.rad() * km.b[server - 1] * xs[pos]);
    }
    Ok(KeyShare {
        server_id: server,
        entries,
    })
}

/// The rotation angle this share contributes for a chosen k-subset.
pub fn theta_for(share: &KeyShare, chosen: &[usize]) -> Result<Angle> {
    if !chosen.contains(&share.server_id) {
        return Err(Error::ProtocolViolation(format!(
            "server {} is not part of the chosen subset {chosen:?}",
            share.server_id
        )));
    }
    let mut key: Vec<usize> = chosen
        .iter()
        .copied()
        .filter(|&i| i != share.server_id)
        .collect();
    key.sort_unstable();
    share
        .entries
        .get(&key)
        .copied()
        .map(Angle)
        .ok_or_else(|| Error::NotFound(format!("no share entry for companions {key:?}")))
}
