//! Named parameter sets used by the suites, the tests and the shipped
//! configs.

use crate::offspring::{
    build_binomial_split, uniform_atoms, BivariateOffspringLaw, CountLaw, EnvironmentLaw, ImmigrationLaw,
    ImmigrationPair,
};

/// Environment and contamination of one model.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub name: &'static str,
    pub env: EnvironmentLaw,
    pub imm: ImmigrationPair,
}

fn bern_half() -> CountLaw {
    CountLaw::bernoulli(0.5).expect("valid")
}

fn split(z: CountLaw) -> EnvironmentLaw {
    build_binomial_split(&z, &[(0.5, 1.0)]).expect("valid split")
}

fn contaminated(y0: impl Into<ImmigrationLaw>, y1: impl Into<ImmigrationLaw>) -> ImmigrationPair {
    ImmigrationPair::new(y0, y1).expect("valid contamination")
}

/// Parasites die without offspring; a clean cell is contaminated by one
/// parasite with probability 1/2. Two states, stationary law (2/3, 1/3).
pub fn toy_chain() -> ModelSet {
    ModelSet {
        name: "toy-chain",
        env: EnvironmentLaw::single(BivariateOffspringLaw::dirac(0, 0)),
        imm: contaminated(bern_half(), CountLaw::dirac(0)),
    }
}

/// One child per parasite sent to a uniform daughter (each lineage keeps a
/// parasite with probability 1/2); only clean cells are contaminated.
pub fn subcritical_bernoulli() -> ModelSet {
    ModelSet {
        name: "subcritical-bernoulli",
        env: split(CountLaw::dirac(1)),
        imm: contaminated(bern_half(), CountLaw::dirac(0)),
    }
}

/// As [`subcritical_bernoulli`] with `Y₀ = Y₁ ~ Geometric(1/2)` truncated at 40.
pub fn subcritical_geometric() -> ModelSet {
    let geo = CountLaw::truncated_geometric(0.5, 40).expect("valid");
    ModelSet {
        name: "subcritical-geometric",
        env: split(CountLaw::dirac(1)),
        imm: contaminated(geo.clone(), geo),
    }
}

/// Subcritical thinning with bounded contamination of every cell.
pub fn subcritical_bounded() -> ModelSet {
    ModelSet {
        name: "subcritical-bounded",
        env: split(CountLaw::dirac(1)),
        imm: contaminated(bern_half(), bern_half()),
    }
}

/// Two children per parasite, binomially shared: critical.
pub fn critical_contaminated() -> ModelSet {
    ModelSet {
        name: "critical-contaminated",
        env: split(CountLaw::dirac(2)),
        imm: contaminated(bern_half(), bern_half()),
    }
}

/// Four children per parasite, binomially shared: supercritical.
pub fn supercritical_contaminated() -> ModelSet {
    ModelSet {
        name: "supercritical-contaminated",
        env: split(CountLaw::dirac(4)),
        imm: contaminated(bern_half(), bern_half()),
    }
}

/// Subcritical thinning, infected cells contaminated by the heavy-tail law.
pub fn heavy_tail_contaminated() -> ModelSet {
    ModelSet {
        name: "heavy-tail-contaminated",
        env: split(CountLaw::dirac(1)),
        imm: contaminated(bern_half(), ImmigrationLaw::heavy_tail()),
    }
}

/// No contamination, `z` children per parasite shared with `p = 1/2`.
pub fn clean(z: u64) -> ModelSet {
    ModelSet {
        name: match z {
            1 => "clean-subcritical",
            2 => "clean-critical",
            4 => "clean-supercritical",
            _ => "clean",
        },
        env: split(CountLaw::dirac(z)),
        imm: ImmigrationPair::zero(),
    }
}

/// No contamination, `z` children per parasite, sharing parameter uniform on
/// `atoms` midpoints.
pub fn clean_uniform_sharing(z: u64, atoms: usize) -> ModelSet {
    ModelSet {
        name: "clean-uniform-sharing",
        env: build_binomial_split(&CountLaw::dirac(z), &uniform_atoms(atoms)).expect("valid split"),
        imm: ImmigrationPair::zero(),
    }
}

/// Deterministic offspring law with total mean `m` ∈ {1.5, 3, 4}, binomially
/// shared, and state-independent `Y ~ Bernoulli(1/2)`.
pub fn growth(m: f64) -> ModelSet {
    let z = if m == 1.5 {
        CountLaw::from_pmf(vec![0.0, 0.5, 0.5]).expect("valid")
    } else {
        CountLaw::dirac(m as u64)
    };
    ModelSet {
        name: "growth",
        env: split(z),
        imm: contaminated(bern_half(), bern_half()),
    }
}

/// Offspring `Bin(6, 1/2)` per side (mean 3) and one immigrant every step.
pub fn normalized_limit() -> ModelSet {
    ModelSet {
        name: "normalized-limit",
        env: split(CountLaw::dirac(6)),
        imm: ImmigrationPair::unconstrained(CountLaw::dirac(1), CountLaw::dirac(1)),
    }
}

/// Random critical environment: half the cells give `Bin(4, 1/2)` offspring
/// per side (mean 2), half `Bernoulli(1/2)` (mean 1/2).
pub fn random_critical() -> ModelSet {
    let strong = split(CountLaw::dirac(4));
    let weak = split(CountLaw::dirac(1));
    ModelSet {
        name: "random-critical",
        env: EnvironmentLaw::new(vec![
            (strong.component(0).clone(), 0.5),
            (weak.component(0).clone(), 0.5),
        ])
        .expect("valid mixture"),
        imm: ImmigrationPair::zero(),
    }
}
