//! Network builders selectable by name.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::BlockSequence;
use crate::hon::{
    build_fixed_order, build_fon, build_variable_order, DistributionMode, Network, PromotionRule,
};
use crate::optim::{optimize_network, train_flowhon, DensitySeries, IterationLog, TrainConfig};

/// Construction settings shared by the counted baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSettings {
    pub distribution: DistributionMode,
    /// Fixed divergence threshold for variable-order promotion; the
    /// support-adaptive rule is used when absent.
    pub promotion_threshold: Option<f64>,
    /// Minimum occurrences of a history window in fixed-order networks.
    pub fixed_min_support: u64,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        BaselineSettings {
            distribution: DistributionMode::Approximate,
            promotion_threshold: None,
            fixed_min_support: 1,
        }
    }
}

impl BaselineSettings {
    pub fn promotion_rule(&self) -> PromotionRule {
        self.promotion_threshold
            .map_or(PromotionRule::Adaptive, PromotionRule::Constant)
    }
}

pub struct BuildInput<'a> {
    pub train: &'a [BlockSequence],
    pub validation: &'a [BlockSequence],
    pub block_count: usize,
    pub order: usize,
    pub baseline: &'a BaselineSettings,
    pub train_config: &'a TrainConfig,
}

pub struct BuildOutput {
    pub network: Network,
    pub log: Vec<IterationLog>,
}

pub trait NetworkBuilder: Send + Sync {
    /// Canonical name used in configs and on the command line.
    fn name(&self) -> &'static str;

    fn aliases(&self) -> &'static [&'static str] {
        &[]
    }

    /// Whether the builder uses the order argument.
    fn takes_order(&self) -> bool {
        true
    }

    fn build(&self, input: &BuildInput) -> Result<BuildOutput>;
}

fn fit(net: Network, input: &BuildInput) -> Result<BuildOutput> {
    let cfg = input.train_config;
    let train = DensitySeries::from_sequences(input.train, input.block_count, cfg.horizon);
    let val = DensitySeries::from_sequences(input.validation, input.block_count, cfg.horizon);
    let (network, log) = optimize_network(&net, &train, &val, cfg)?;
    Ok(BuildOutput {
        network,
        log: vec![log],
    })
}

fn counted(network: Network) -> Result<BuildOutput> {
    Ok(BuildOutput {
        network,
        log: Vec::new(),
    })
}

struct Fon {
    optimize: bool,
}

impl NetworkBuilder for Fon {
    fn name(&self) -> &'static str {
        if self.optimize {
            "fon+"
        } else {
            "fon"
        }
    }

    fn takes_order(&self) -> bool {
        false
    }

    fn build(&self, input: &BuildInput) -> Result<BuildOutput> {
        let net = build_fon(input.train, input.block_count)?;
        if self.optimize {
            fit(net, input)
        } else {
            counted(net)
        }
    }
}

struct FixedOrder {
    optimize: bool,
}

impl NetworkBuilder for FixedOrder {
    fn name(&self) -> &'static str {
        if self.optimize {
            "fixed+"
        } else {
            "fixed"
        }
    }

    fn aliases(&self) -> &'static [&'static str] {
        if self.optimize {
            &["ref+"]
        } else {
            &["ref"]
        }
    }

    fn build(&self, input: &BuildInput) -> Result<BuildOutput> {
        let b = input.baseline;
        let net = build_fixed_order(
            input.train,
            input.order,
            input.block_count,
            b.distribution,
            b.fixed_min_support,
        )?;
        if self.optimize {
            fit(net, input)
        } else {
            counted(net)
        }
    }
}

struct VariableOrder {
    optimize: bool,
}

impl NetworkBuilder for VariableOrder {
    fn name(&self) -> &'static str {
        if self.optimize {
            "var+"
        } else {
            "var"
        }
    }

    fn aliases(&self) -> &'static [&'static str] {
        if self.optimize {
            &["semantic+"]
        } else {
            &["semantic"]
        }
    }

    fn build(&self, input: &BuildInput) -> Result<BuildOutput> {
        let b = input.baseline;
        let net = build_variable_order(
            input.train,
            input.order,
            input.block_count,
            b.promotion_rule(),
            b.distribution,
        )?;
        if self.optimize {
            fit(net, input)
        } else {
            counted(net)
        }
    }
}

struct FlowHon;

impl NetworkBuilder for FlowHon {
    fn name(&self) -> &'static str {
        "flowhon"
    }

    fn build(&self, input: &BuildInput) -> Result<BuildOutput> {
        let (network, log) = train_flowhon(
            input.train,
            input.validation,
            input.order,
            input.block_count,
            input.train_config,
            input.baseline.distribution,
        )?;
        Ok(BuildOutput { network, log })
    }
}

pub struct BuilderRegistry {
    builders: Vec<Box<dyn NetworkBuilder>>,
}

impl BuilderRegistry {
    pub fn empty() -> Self {
        BuilderRegistry {
            builders: Vec::new(),
        }
    }

    pub fn with_defaults() -> Self {
        let mut r = BuilderRegistry::empty();
        for optimize in [false, true] {
            r.register(Box::new(Fon { optimize }));
            r.register(Box::new(FixedOrder { optimize }));
            r.register(Box::new(VariableOrder { optimize }));
        }
        r.register(Box::new(FlowHon));
        r
    }

    /// Adds a builder; a later builder with the same name shadows earlier ones.
    pub fn register(&mut self, builder: Box<dyn NetworkBuilder>) {
        self.builders.insert(0, builder);
    }

    pub fn get(&self, name: &str) -> Result<&dyn NetworkBuilder> {
        let key = name.to_ascii_lowercase();
        self.builders
            .iter()
            .find(|b| b.name() == key || b.aliases().contains(&key.as_str()))
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownKind(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut n: Vec<_> = self.builders.iter().map(|b| b.name()).collect();
        n.sort_unstable();
        n.dedup();
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aliases_resolve() {
        let r = BuilderRegistry::with_defaults();
        assert_eq!(r.get("ref").unwrap().name(), "fixed");
        assert_eq!(r.get("semantic+").unwrap().name(), "var+");
        assert_eq!(r.get("FlowHON").unwrap().name(), "flowhon");
        assert!(matches!(r.get("octree"), Err(Error::UnknownKind(_))));
        assert_eq!(r.names().len(), 7);
    }

    #[test]
    fn builds_by_name() {
        let train: Vec<_> = [vec![0, 1, 2, -1], vec![1, 2, 0, -1], vec![2, 0, 1, -1]]
            .into_iter()
            .map(|v| BlockSequence::new(v).unwrap())
            .collect();
        let r = BuilderRegistry::with_defaults();
        let input = BuildInput {
            train: &train,
            validation: &train,
            block_count: 3,
            order: 2,
            baseline: &BaselineSettings::default(),
            train_config: &TrainConfig {
                iterations: 5,
                max_outer: 2,
                ..TrainConfig::default()
            },
        };
        for name in r.names() {
            let out = r.get(name).unwrap().build(&input).unwrap();
            out.network.validate(1e-9).unwrap();
            assert_eq!(
                out.network.optimized,
                name.ends_with('+') || name == "flowhon"
            );
        }
    }
}
