//! Named filters built as marginal models.

pub mod abc;
pub mod filters;
pub mod lgssm;

pub use abc::{make_abc, AbcProblem, AbcProposal, AbcState, GaussianSimulator, Simulator, SplitGaussianSimulator};
pub use filters::{
    locally_optimal, make_bpf, make_ipf, make_mapf, make_mpf, AuxApprox, GaussianAux, ProposalChoice, UnitAux,
};
pub use lgssm::{
    GaussianObservation, LinearGaussianKernel, LinearGaussianSSM, Simulated, UnitPotential, FIXTURE_OBSERVATIONS,
    FIXTURE_SEED,
};
