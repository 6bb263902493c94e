//! Gazetteers, pseudonym pools and relevance config shipped in `data/`,
//! compiled in so the CLI and the browser demo work without files on disk.

use std::path::PathBuf;

use crate::detector::{Detector, DetectorError, Gazetteer, RegexRules};
use crate::model::EntityClass;
use crate::pseudonymizer::{PoolSet, PseudonymError, PseudonymPool};
use crate::relevance::{ConfigError, RelevanceConfig};

macro_rules! data {
    ($path:literal) => {
        (include_str!(concat!("../../../data/", $path)), $path)
    };
}

/// Gazetteers in priority order: when lists overlap, the earlier class wins.
pub const GAZETTEERS: [(EntityClass, (&str, &str)); 6] = [
    (EntityClass::Person, data!("gazetteers/person.txt")),
    (EntityClass::Organization, data!("gazetteers/organization.txt")),
    (EntityClass::Gpe, data!("gazetteers/gpe.txt")),
    (EntityClass::Facility, data!("gazetteers/facility.txt")),
    (EntityClass::Landmark, data!("gazetteers/landmark.txt")),
    (EntityClass::Demographic, data!("gazetteers/demographic.txt")),
];

pub const POOLS: [(EntityClass, (&str, &str)); 8] = [
    (EntityClass::Person, data!("pools/person.txt")),
    (EntityClass::Organization, data!("pools/organization.txt")),
    (EntityClass::Gpe, data!("pools/gpe.txt")),
    (EntityClass::Facility, data!("pools/facility.txt")),
    (EntityClass::Landmark, data!("pools/landmark.txt")),
    (EntityClass::Demographic, data!("pools/demographic.txt")),
    (EntityClass::Email, data!("pools/email.txt")),
    (EntityClass::Phone, data!("pools/phone.txt")),
];

pub fn gazetteers() -> Result<Vec<Gazetteer>, DetectorError> {
    GAZETTEERS
        .iter()
        .map(|(class, (src, path))| Gazetteer::parse(src, class.clone(), PathBuf::from(path)))
        .collect()
}

/// Detector over the bundled gazetteers plus email and phone rules.
pub fn detector() -> Result<Detector, DetectorError> {
    Detector::new(gazetteers()?, RegexRules::new(true, true))
}

pub const RELEVANCE: &str = include_str!("../../../data/relevance.toml");

pub fn relevance() -> Result<RelevanceConfig, ConfigError> {
    RelevanceConfig::parse(RELEVANCE)
}

pub fn pools() -> Result<PoolSet, PseudonymError> {
    let pools = POOLS
        .iter()
        .map(|(class, (src, path))| PseudonymPool::parse(src, class.clone(), PathBuf::from(path)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PoolSet::new(pools))
}
