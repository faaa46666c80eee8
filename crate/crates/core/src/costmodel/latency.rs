// SPDX-License-Identifier: Apache-2.0

//! Launch latency: cycles from a front-end launch to the first read request.

use crate::engine::backend_latency;
use crate::midend::{chain_latency, MidendSpec};
use crate::types::EngineConfig;

pub fn latency_model(cfg: &EngineConfig, midends: &[MidendSpec]) -> u64 {
    backend_latency(cfg) + chain_latency(midends)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contract() {
        let mut c = EngineConfig::base(2);
        assert_eq!(latency_model(&c, &[]), 2);
        c.has_legalizer = false;
        assert_eq!(latency_model(&c, &[]), 1);
        c.has_legalizer = true;
        assert_eq!(latency_model(&c, &[MidendSpec::TensorNd { zero_latency: true }]), 2);
        assert_eq!(latency_model(&c, &[MidendSpec::TensorNd { zero_latency: false }, MidendSpec::Tensor2d]), 4);
    }
}
