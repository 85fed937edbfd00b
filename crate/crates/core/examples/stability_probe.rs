//! Largest real part of the closed-loop Jacobian at steady state under
//! single and combined parameter perturbations.

use consortia::aggregate::find_steady_state;
use consortia::model::rhs::closed_loop_rhs_slice;
use consortia::model::{ConsortiumParams, LoopMode};
use consortia::AggregateState;
use nalgebra::DMatrix;

fn abscissa(p: &ConsortiumParams) -> (f64, f64) {
    let ss = find_steady_state(p, 1.0, &AggregateState::ZERO).unwrap().to_array();
    let n = ss.len();
    let mut j = DMatrix::zeros(n, n);
    let (mut fp, mut fm) = (vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let h = 1e-6 * ss[k].abs().max(1e-6);
        let (mut yp, mut ym) = (ss.to_vec(), ss.to_vec());
        yp[k] += h;
        ym[k] -= h;
        closed_loop_rhs_slice(p, 1.0, &yp, &mut fp, LoopMode::Closed);
        closed_loop_rhs_slice(p, 1.0, &ym, &mut fm, LoopMode::Closed);
        for i in 0..n {
            j[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let ev = j.complex_eigenvalues();
    let worst = ev.iter().max_by(|a, b| a.re.total_cmp(&b.re)).unwrap();
    (worst.re, worst.im)
}

fn main() {
    let base = ConsortiumParams::nominal();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut p = base;
    for a in &args {
        let (k, v) = a.split_once('=').unwrap();
        p.set(k, v.parse::<f64>().unwrap()).unwrap();
    }
    let (re, im) = abscissa(&p);
    println!("base: re {re:.5} im {im:.5}");
    for name in ["mu", "theta", "gamma_z", "gamma", "beta_u", "beta_x", "eta", "gamma_e", "alpha_0", "alpha_max", "k_u", "n_u"] {
        for f in [0.8, 1.2] {
            let mut q = p;
            q.set(name, p.get(name).unwrap() * f).unwrap();
            let (re, im) = abscissa(&q);
            println!("{name:<10} x{f}: re {re:+.5} im {im:.5}");
        }
    }
}
