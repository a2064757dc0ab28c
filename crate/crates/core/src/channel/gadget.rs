//! Secret-dependent victim gadgets and the attacks that read them.
//!
//! Victim variants:
//!
//! * `ListingA`: `if secret { modify line 0 } else { access line 1 }`
//! * `ListingB`: `if secret { access line 0 } else { access line 1 }`
//!
//! Line 0 always lives in set [`SET_I`]; where line 1 lives is given by the
//! [`LinePlacement`]. The attacker first runs the victim once for each secret
//! value on a replica of the cache to learn the two reference latencies, then
//! runs the real victim and picks the nearer reference.

use serde::{Deserialize, Serialize};

use super::ChannelError;
use crate::cache::{ActorId, Cache, CacheConfig, LineRef};
use crate::measurement::{measure_replacement_latency, ReplacementSet, DEFAULT_REPLACEMENT_LEN};

/// Set holding line 0.
pub const SET_I: usize = 7;
/// Set holding line 1 when the lines are placed in distinct sets.
pub const SET_J: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GadgetVariant {
    ListingA,
    ListingB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GadgetScenario {
    /// Attacker fills set i with clean lines and times its replacement.
    SetStateDirty,
    /// Attacker fills set i with dirty lines and times its replacement.
    PrimeWithDirty,
    /// Attacker dirties set i, cleans set j and times the victim call.
    VictimTiming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinePlacement {
    SameLine,
    SameSet,
    DistinctSets,
}

impl GadgetVariant {
    pub const ALL: [GadgetVariant; 2] = [GadgetVariant::ListingA, GadgetVariant::ListingB];
}

impl GadgetScenario {
    pub const ALL: [GadgetScenario; 3] = [
        GadgetScenario::SetStateDirty,
        GadgetScenario::PrimeWithDirty,
        GadgetScenario::VictimTiming,
    ];
}

impl LinePlacement {
    pub const ALL: [LinePlacement; 3] = [
        LinePlacement::SameLine,
        LinePlacement::SameSet,
        LinePlacement::DistinctSets,
    ];
}

macro_rules! kebab_str {
    ($ty:ty { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self { $(Self::$variant => $name),+ }
            }
        }

        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.name())
            }
        }

        impl std::str::FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(Self::$variant),)+
                    other => Err(format!("unknown value `{other}`")),
                }
            }
        }
    };
}

kebab_str!(GadgetVariant { ListingA => "listing-a", ListingB => "listing-b" });
kebab_str!(GadgetScenario {
    SetStateDirty => "set-state-dirty",
    PrimeWithDirty => "prime-with-dirty",
    VictimTiming => "victim-timing",
});
kebab_str!(LinePlacement {
    SameLine => "same-line",
    SameSet => "same-set",
    DistinctSets => "distinct-sets",
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GadgetConfig {
    pub cache: CacheConfig,
    pub variant: GadgetVariant,
    pub scenario: GadgetScenario,
    pub placement: LinePlacement,
    pub secret: u8,
    pub seed: u64,
}

impl GadgetConfig {
    /// Rejects pairings under which the secret cannot influence the
    /// attacker's observation.
    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |m: String| Err(ChannelError::InvalidGadget(m));
        if self.secret > 1 {
            return bad(format!("secret must be 0 or 1, got {}", self.secret));
        }
        let g = &self.cache.geometry;
        g.validate()?;
        if g.num_sets <= SET_J {
            return bad(format!("gadget needs at least {} sets", SET_J + 1));
        }
        match (self.scenario, self.variant, self.placement) {
            (GadgetScenario::SetStateDirty, GadgetVariant::ListingB, _) => {
                bad("set-state-dirty needs a victim that modifies line 0 (listing-a)".into())
            }
            (GadgetScenario::PrimeWithDirty, GadgetVariant::ListingA, _) => {
                bad("prime-with-dirty is defined for the read-only victim (listing-b)".into())
            }
            (GadgetScenario::PrimeWithDirty | GadgetScenario::VictimTiming, _, p)
                if p != LinePlacement::DistinctSets =>
            {
                bad(format!(
                    "{} requires line 0 and line 1 in different cache sets, got {p}",
                    self.scenario
                ))
            }
            _ => Ok(()),
        }
    }

    /// Every pairing accepted by [`validate`](Self::validate), secret 0 first.
    pub fn valid_combinations() -> Vec<(GadgetVariant, GadgetScenario, LinePlacement)> {
        let mut out = Vec::new();
        for scenario in GadgetScenario::ALL {
            for variant in GadgetVariant::ALL {
                for placement in LinePlacement::ALL {
                    let probe = GadgetConfig {
                        cache: CacheConfig::default(),
                        variant,
                        scenario,
                        placement,
                        secret: 0,
                        seed: 0,
                    };
                    if probe.validate().is_ok() {
                        out.push((variant, scenario, placement));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GadgetLatencies {
    /// What the attacker measured against the real victim.
    pub observed: u64,
    pub profile_secret0: u64,
    pub profile_secret1: u64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GadgetReport {
    pub scenario: GadgetScenario,
    pub variant: GadgetVariant,
    pub placement: LinePlacement,
    pub secret: u8,
    pub inferred: u8,
    pub latencies: GadgetLatencies,
}

struct World<'a> {
    cfg: &'a GadgetConfig,
    cache: Cache,
}

impl<'a> World<'a> {
    fn new(cfg: &'a GadgetConfig) -> Result<Self, ChannelError> {
        Ok(Self {
            cfg,
            cache: Cache::new(cfg.cache.clone(), cfg.seed)?,
        })
    }

    fn line(&self, actor: ActorId, set: usize, tag: u64) -> LineRef {
        LineRef::new(actor, self.cfg.cache.geometry.address_of(set, tag))
    }

    fn victim_lines(&self) -> (LineRef, LineRef) {
        let line0 = self.line(ActorId::VICTIM, SET_I, 0);
        let line1 = match self.cfg.placement {
            LinePlacement::SameLine => line0,
            LinePlacement::SameSet => self.line(ActorId::VICTIM, SET_I, 1),
            LinePlacement::DistinctSets => self.line(ActorId::VICTIM, SET_J, 0),
        };
        (line0, line1)
    }

    fn fill(&mut self, set: usize, dirty: bool) -> Result<(), ChannelError> {
        for tag in 0..self.cfg.cache.geometry.ways as u64 {
            let line = self.line(ActorId::ATTACKER, set, tag);
            if dirty {
                self.cache.write(line)?;
            } else {
                self.cache.read(line)?;
            }
        }
        Ok(())
    }

    /// Runs the victim and returns its summed access latency.
    fn victim(&mut self, secret: u8) -> Result<u64, ChannelError> {
        let (line0, line1) = self.victim_lines();
        let out = match (self.cfg.variant, secret) {
            (GadgetVariant::ListingA, 1) => self.cache.write(line0)?,
            (GadgetVariant::ListingB, 1) => self.cache.read(line0)?,
            _ => self.cache.read(line1)?,
        };
        Ok(out.latency)
    }

    fn probe_set_i(&mut self) -> Result<u64, ChannelError> {
        let g = &self.cfg.cache.geometry;
        let rset = ReplacementSet::build(
            g,
            ActorId::ATTACKER,
            SET_I,
            DEFAULT_REPLACEMENT_LEN,
            g.ways as u64,
            self.cfg.seed,
        )?;
        Ok(measure_replacement_latency(&mut self.cache, &rset)?.total_cycles)
    }

    /// Full attack round against a victim holding `secret`.
    fn observe(&mut self, secret: u8) -> Result<u64, ChannelError> {
        match self.cfg.scenario {
            GadgetScenario::SetStateDirty => {
                self.fill(SET_I, false)?;
                self.victim(secret)?;
                self.probe_set_i()
            }
            GadgetScenario::PrimeWithDirty => {
                self.fill(SET_I, true)?;
                self.victim(secret)?;
                self.probe_set_i()
            }
            GadgetScenario::VictimTiming => {
                self.fill(SET_I, true)?;
                self.fill(SET_J, false)?;
                self.victim(secret)
            }
        }
    }
}

/// Runs the attack described by `cfg` and reports what the attacker inferred.
pub fn run_gadget_attack(cfg: &GadgetConfig) -> Result<GadgetReport, ChannelError> {
    cfg.validate()?;
    let profile0 = World::new(cfg)?.observe(0)?;
    let profile1 = World::new(cfg)?.observe(1)?;
    let observed = World::new(cfg)?.observe(cfg.secret)?;

    let threshold = (profile0 as f64 + profile1 as f64) / 2.0;
    let gap0 = (observed as f64 - profile0 as f64).abs();
    let gap1 = (observed as f64 - profile1 as f64).abs();
    let inferred = u8::from(gap1 < gap0);

    Ok(GadgetReport {
        scenario: cfg.scenario,
        variant: cfg.variant,
        placement: cfg.placement,
        secret: cfg.secret,
        inferred,
        latencies: GadgetLatencies {
            observed,
            profile_secret0: profile0,
            profile_secret1: profile1,
            threshold,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(variant: GadgetVariant, scenario: GadgetScenario, placement: LinePlacement, secret: u8) -> GadgetConfig {
        GadgetConfig {
            cache: CacheConfig::default(),
            variant,
            scenario,
            placement,
            secret,
            seed: 11,
        }
    }

    #[test]
    fn listing_a_set_state() {
        for placement in LinePlacement::ALL {
            for secret in [0, 1] {
                let r = run_gadget_attack(&cfg(
                    GadgetVariant::ListingA,
                    GadgetScenario::SetStateDirty,
                    placement,
                    secret,
                ))
                .unwrap();
                assert_eq!(r.inferred, secret, "{placement}");
                assert_eq!(r.latencies.profile_secret0, 110);
                assert_eq!(r.latencies.profile_secret1, 121);
            }
        }
    }

    #[test]
    fn listing_b_prime_with_dirty() {
        let r0 = run_gadget_attack(&cfg(
            GadgetVariant::ListingB,
            GadgetScenario::PrimeWithDirty,
            LinePlacement::DistinctSets,
            0,
        ))
        .unwrap();
        assert_eq!(r0.inferred, 0);
        assert_eq!(r0.latencies.observed, 198);
        assert_eq!(r0.latencies.profile_secret1, 187);
    }

    #[test]
    fn prime_with_dirty_same_set_rejected() {
        for placement in [LinePlacement::SameSet, LinePlacement::SameLine] {
            let err = run_gadget_attack(&cfg(
                GadgetVariant::ListingB,
                GadgetScenario::PrimeWithDirty,
                placement,
                1,
            ));
            assert!(matches!(err, Err(ChannelError::InvalidGadget(_))));
        }
    }

    #[test]
    fn victim_timing_delta_is_dirty_minus_clean() {
        for variant in GadgetVariant::ALL {
            let r = run_gadget_attack(&cfg(
                variant,
                GadgetScenario::VictimTiming,
                LinePlacement::DistinctSets,
                1,
            ))
            .unwrap();
            assert_eq!(r.inferred, 1);
            assert_eq!(r.latencies.profile_secret1 - r.latencies.profile_secret0, 22 - 11);
        }
    }

    #[test]
    fn mismatched_pairings_rejected() {
        assert!(cfg(GadgetVariant::ListingB, GadgetScenario::SetStateDirty, LinePlacement::DistinctSets, 0)
            .validate()
            .is_err());
        assert!(cfg(GadgetVariant::ListingA, GadgetScenario::PrimeWithDirty, LinePlacement::DistinctSets, 0)
            .validate()
            .is_err());
        assert!(cfg(GadgetVariant::ListingA, GadgetScenario::SetStateDirty, LinePlacement::SameLine, 2)
            .validate()
            .is_err());
        assert_eq!(GadgetConfig::valid_combinations().len(), 6);
    }

    #[test]
    fn names_round_trip() {
        for s in GadgetScenario::ALL {
            assert_eq!(s.name().parse::<GadgetScenario>().unwrap(), s);
        }
        assert_eq!("same-set".parse::<LinePlacement>().unwrap(), LinePlacement::SameSet);
    }
}
