//! Central finite-difference checking of tape gradients.

use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Denominator floor for the relative error. Below this gradient magnitude
/// the comparison is effectively absolute.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries whose relative error exceeds the tolerance.
    pub flagged: Vec<GradMismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.flagged.is_empty()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn evaluate<F>(params: &ParamStore, f: &F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars = params.attach(&mut tape);
    let out = f(&mut tape, &vars);
    tape.value(out).item()
}

/// Loss value and backward-mode gradients of `f` at `params`.
pub fn analytic_gradients<F>(params: &ParamStore, f: &F) -> Result<(f64, Vec<Tensor>)>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars = params.attach(&mut tape);
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out)?;
    Ok((tape.value(out).item(), params.collect_grads(&grads, &vars)))
}

/// Central differences `(f(x+h) - f(x-h)) / 2h`, one coordinate at a time.
pub fn numeric_gradients<F>(params: &ParamStore, h: f64, f: &F) -> Vec<Tensor>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut work = params.clone();
    let mut out = Vec::with_capacity(params.len());
    for id in params.ids() {
        let [r, c] = params.get(id).shape();
        let mut g = Tensor::zeros(r, c);
        for i in 0..r * c {
            let orig = work.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + h;
            let plus = evaluate(&work, f);
            work.get_mut(id).data_mut()[i] = orig - h;
            let minus = evaluate(&work, f);
            work.get_mut(id).data_mut()[i] = orig;
            g.data_mut()[i] = (plus - minus) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

pub fn compare_gradients(
    params: &ParamStore,
    analytic: &[Tensor],
    numeric: &[Tensor],
    tol: f64,
) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        flagged: Vec::new(),
    };
    for id in params.ids() {
        let k = id.index();
        for (i, (&a, &n)) in analytic[k].data().iter().zip(numeric[k].data()).enumerate() {
            let err = relative_error(a, n);
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max(err);
            if err > tol || !err.is_finite() {
                report.flagged.push(GradMismatch {
                    param: params.name(id).to_string(),
                    index: i,
                    analytic: a,
                    numeric: n,
                    rel_error: err,
                });
            }
        }
    }
    report
}

/// Compares backward-mode gradients of the scalar built by `f` against
/// central differences with step `h`.
pub fn finite_difference_check<F>(
    params: &ParamStore,
    h: f64,
    tol: f64,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    if h <= 0.0 {
        return Err(Error::Contract(format!("finite-difference step must be > 0, got {h}")));
    }
    let (_, analytic) = analytic_gradients(params, &f)?;
    let numeric = numeric_gradients(params, h, &f);
    Ok(compare_gradients(params, &analytic, &numeric, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn quadratic_store() -> ParamStore {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::row(vec![0.7, -1.3, 2.0]));
        store.insert(
            "a",
            Tensor::from_rows(&[
                vec![2.0, 0.5, 0.0],
                vec![0.5, 1.0, -0.3],
                vec![0.0, -0.3, 3.0],
            ]),
        );
        store
    }

    // x A x^T
    fn quadratic(tape: &mut Tape, v: &[Var]) -> Var {
        let xa = tape.matmul(v[0], v[1]);
        let xt = tape.transpose(v[0]);
        tape.matmul(xa, xt)
    }

    #[test]
    fn quadratic_form_is_exact() {
        let report = finite_difference_check(&quadratic_store(), 1e-3, 1e-8, quadratic).unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert_eq!(report.checked, 12);
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let store = quadratic_store();
        let (_, mut analytic) = analytic_gradients(&store, &quadratic).unwrap();
        let numeric = numeric_gradients(&store, 1e-5, &quadratic);
        analytic[0].data_mut()[1] += 0.01;
        let report = compare_gradients(&store, &analytic, &numeric, 1e-4);
        assert_eq!(report.flagged.len(), 1);
        assert_eq!(report.flagged[0].param, "x");
        assert_eq!(report.flagged[0].index, 1);
    }

    #[test]
    fn nonpositive_step_rejected() {
        assert!(finite_difference_check(&quadratic_store(), 0.0, 1e-4, quadratic).is_err());
    }

    /// Every primitive, composed so each one sees inputs in [-2, 2].
    #[test]
    fn every_primitive_matches_finite_differences() {
        let mut rng = Rng::new(11);
        for trial in 0..20 {
            let mut store = ParamStore::new();
            store.insert("a", rng.uniform_tensor(3, 4, -2.0, 2.0));
            store.insert("b", rng.uniform_tensor(4, 2, -2.0, 2.0));
            store.insert("c", rng.uniform_tensor(3, 4, -2.0, 2.0));
            store.insert("bias", rng.uniform_tensor(1, 4, -2.0, 2.0));
            store.insert("pos", rng.uniform_tensor(3, 4, 0.5, 2.0));
            let adj = std::sync::Arc::new(crate::numerics::SparseMatrix::new(
                3,
                3,
                vec![(0, 1, 0.5), (0, 2, 0.5), (1, 0, 1.0), (2, 2, -0.7)],
            ));
            let f = |tape: &mut Tape, v: &[Var]| {
                let ab = tape.matmul(v[0], v[1]);
                let t = tape.tanh(ab);
                let sm = tape.softmax_rows(v[2]);
                let lsm = tape.log_softmax_rows(v[0]);
                let prod = tape.mul(sm, lsm);
                let biased = tape.add_row(prod, v[3]);
                let e = tape.exp(biased);
                let sc = tape.scale(e, 0.3);
                let off = tape.offset(sc, 1.0);
                let lg = tape.log(v[4]);
                let mixed = tape.sub(off, lg);
                let g = tape.gather_rows(mixed, &[2, 0, 0]);
                let sp = tape.spmm(&adj, g);
                let sq = tape.square(sp);
                let sel = tape.select_cols(sq, &[1, 3, 0]);
                let tr = tape.transpose(t);
                let s1 = tape.mean(tr);
                let s2 = tape.sum(sel);
                let r = tape.relu(v[2]);
                let s3 = tape.sum(r);
                let s12 = tape.add(s1, s2);
                tape.add(s12, s3)
            };
            let report = finite_difference_check(&store, 1e-6, 1e-4, f).unwrap();
            assert!(report.passed(), "trial {trial}: {report:?}");
        }
    }
}
