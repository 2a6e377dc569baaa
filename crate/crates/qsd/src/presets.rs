//! Named experiments built into the binary.

use qsd_core::C64;

use crate::config::{ExperimentConfig, ExperimentKind, GateSpec, KernelChoice, ModelChoice, ReferenceChoice, SchemeChoice};

pub const NAMES: [&str; 8] = ["fig1", "fig2", "fig3", "fig4", "markov-limit", "oracle-check", "qbm", "novikov"];

fn amp(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Defaults for a hand-written configuration.
pub fn base(kind: ExperimentKind, model: ModelChoice, kernel: KernelChoice) -> ExperimentConfig {
    let mut references = vec![ReferenceChoice::Lindblad];
    if kernel != KernelChoice::Delta {
        references.push(ReferenceChoice::FirstOrder);
        if model == ModelChoice::Dissipative && kernel == KernelChoice::Ou {
            references.push(ReferenceChoice::Exact);
        }
    }
    ExperimentConfig {
        name: "custom".into(),
        kind,
        model,
        omega: 1.0,
        lambda: 1.0,
        kernel,
        gamma: None,
        eta: 0.1,
        cutoff: 20.0,
        kt: 50.0,
        omega0: 1.0,
        n_levels: 30,
        counterterm: true,
        scheme: if kernel == KernelChoice::Delta { SchemeChoice::Markov } else { SchemeChoice::FirstOrder },
        references,
        psi0: vec![amp(1.0, 0.0), amp(1.0, 0.0)],
        dt: 0.01,
        t_max: 5.0,
        n_traj: 500,
        seed: 1,
        stride: 10,
        n_modes: 6,
        gates: GateSpec::default(),
    }
}

fn ensemble(name: &str, model: ModelChoice, gamma: f64) -> ExperimentConfig {
    let mut cfg = base(ExperimentKind::Ensemble, model, KernelChoice::Ou);
    cfg.name = name.into();
    cfg.gamma = Some(gamma);
    cfg
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let cfg = match name {
        "fig1" => {
            let mut c = ensemble("fig1", ModelChoice::Dissipative, 10.0);
            c.psi0 = vec![amp(0.0, 1.0), amp(1.0, 0.0)];
            c.n_traj = 2000;
            c.gates = GateSpec { agree_with: Some(ReferenceChoice::Exact), max_deviation: Some(0.05), window: (0.0, 5.0), ..GateSpec::default() };
            c
        }
        "fig2" => {
            let mut c = ensemble("fig2", ModelChoice::Dissipative, 1.0);
            c.psi0 = vec![amp(3.0, 0.0), amp(1.0, 0.0)];
            c.n_traj = 1000;
            c.gates = GateSpec {
                agree_with: Some(ReferenceChoice::Exact),
                differ_from: Some(ReferenceChoice::Lindblad),
                min_separation: 10.0,
                window: (0.5, 5.0),
                observable: Some(0),
                ..GateSpec::default()
            };
            c
        }
        "fig3" => {
            let mut c = base(ExperimentKind::Positivity, ModelChoice::Driven, KernelChoice::Ou);
            c.name = "fig3".into();
            c.gamma = Some(0.5);
            c.psi0 = vec![amp(1.0, 0.0), amp(0.0, 0.0)];
            c.t_max = 10.0;
            c.stride = 1;
            c.references = vec![ReferenceChoice::LongTime, ReferenceChoice::FirstOrder];
            c
        }
        "fig4" => {
            let mut c = ensemble("fig4", ModelChoice::Driven, 10.0);
            c.psi0 = vec![amp(3f64.sqrt(), 0.0), amp(1.0, 0.0)];
            c.n_traj = 500;
            c.gates = GateSpec { agree_with: Some(ReferenceChoice::FirstOrder), ..GateSpec::default() };
            c
        }
        "markov-limit" => {
            let mut c = base(ExperimentKind::MarkovLimit, ModelChoice::Dissipative, KernelChoice::Ou);
            c.name = "markov-limit".into();
            c.gamma = Some(100.0);
            c.psi0 = vec![amp(0.0, 1.0), amp(1.0, 0.0)];
            c.dt = 1e-3;
            c.stride = 100;
            c.n_traj = 2000;
            c.gates = GateSpec { window: (0.1, 5.0), ..GateSpec::default() };
            c
        }
        "oracle-check" => {
            let mut c = base(ExperimentKind::Oracle, ModelChoice::Dissipative, KernelChoice::Ou);
            c.name = "oracle-check".into();
            c.gamma = Some(10.0);
            c.psi0 = vec![amp(1.0, 0.0), amp(0.0, 0.0)];
            c.t_max = 2.0;
            c.stride = 1;
            c.references = vec![ReferenceChoice::Exact];
            c
        }
        "qbm" => {
            let mut c = base(ExperimentKind::Qbm, ModelChoice::Oscillator, KernelChoice::Ohmic);
            c.name = "qbm".into();
            c.dt = 1e-3;
            c.t_max = 1.0;
            c.stride = 10;
            c.n_traj = 10;
            c.references = vec![];
            c
        }
        "novikov" => {
            let mut c = base(ExperimentKind::Novikov, ModelChoice::Dissipative, KernelChoice::Ou);
            c.name = "novikov".into();
            c.gamma = Some(10.0);
            c.lambda = 0.3;
            c.scheme = SchemeChoice::Linear;
            c.t_max = 2.0;
            c.n_traj = 2000;
            c.references = vec![];
            c
        }
        _ => return None,
    };
    Some(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_is_valid() {
        for name in NAMES {
            let cfg = preset(name).unwrap();
            cfg.check().unwrap();
            assert_eq!(cfg.name, name);
        }
        assert!(preset("fig9").is_none());
    }

    #[test]
    fn fig1_has_no_warnings() {
        assert!(preset("fig1").unwrap().warnings().is_empty());
    }
}
