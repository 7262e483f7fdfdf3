//! Fast sanity checks of an installed build, a few seconds in total.

use serde::Serialize;

use crate::bits::BitString;
use crate::photon_source::{tagged_state_probs, IntensitySet};
use crate::privacy::{draw_seed, toeplitz_hash};
use crate::reconciliation::{build_code, reconcile_recv, reconcile_send, DegreeProfile};
use crate::rng::{unit_f64, RunRng, StageRng};

use super::fixture::reference_counts;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfTestCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> SelfTestCheck {
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    SelfTestCheck { name, passed, detail }
}

pub fn run_selftest() -> Vec<SelfTestCheck> {
    vec![
        check("decomposition", || {
            let set = IntensitySet::new(&[0.07, 0.35, 0.5], 3).map_err(|e| e.to_string())?;
            let model = tagged_state_probs(&set, 40).map_err(|e| e.to_string())?;
            let worst = model.reconstruction_residual();
            if worst <= 1e-9 {
                Ok(format!("max Fock deviation {worst:.1e}"))
            } else {
                Err(format!("max Fock deviation {worst:.1e} exceeds 1e-9"))
            }
        }),
        check("toeplitz_linearity", || {
            let mut rng = StageRng::from_seed_u64(11);
            let spec = draw_seed(256, 100, &mut rng).map_err(|e| e.to_string())?;
            for _ in 0..200 {
                let a = BitString::random(256, &mut rng);
                let b = BitString::random(256, &mut rng);
                let h = |x: &BitString| toeplitz_hash(&spec, x).expect("lengths match");
                if h(&a.xor(&b).expect("same length")) != h(&a).xor(&h(&b)).expect("same length") {
                    return Err("hash is not linear".into());
                }
            }
            Ok("200 pairs".into())
        }),
        check("ldpc_round_trip", || {
            let code = build_code(1000, 0.5, &DegreeProfile::default(), 3).map_err(|e| e.to_string())?;
            let mut rng = StageRng::from_seed_u64(12);
            let mut ok = 0;
            for id in 0..20 {
                let z = BitString::random(code.l(), &mut rng);
                let x_prime = BitString::random(code.n(), &mut rng);
                let mut x = x_prime.clone();
                for i in 0..code.n() {
                    if unit_f64(&mut rng) < 0.02 {
                        x.flip(i);
                    }
                }
                let msg = reconcile_send(&code, &z, &x_prime, id).map_err(|e| e.to_string())?;
                if let Ok(Ok(d)) = reconcile_recv(&code, &msg, &x, 0.02, 100) {
                    ok += usize::from(d.z == z);
                }
            }
            if ok >= 19 {
                Ok(format!("{ok}/20 frames at 2% errors"))
            } else {
                Err(format!("only {ok}/20 frames at 2% errors"))
            }
        }),
        check("rng_streams", || {
            let run = RunRng::new(7);
            let a = BitString::random(256, &mut run.stream("a"));
            if a != BitString::random(256, &mut run.stream("a")) {
                return Err("stream is not reproducible".into());
            }
            if a == BitString::random(256, &mut run.stream("b")) {
                return Err("labels share a stream".into());
            }
            Ok("reproducible and separated".into())
        }),
        check("reference_counts", || {
            let c = reference_counts();
            c.validate().map_err(|e| e.to_string())?;
            Ok(format!("QBER × {:.3}, + {:.3}", c.error_ratio(3).unwrap_or(0.0), c.error_ratio(6).unwrap_or(0.0)))
        }),
    ]
}
