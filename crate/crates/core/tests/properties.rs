use std::sync::OnceLock;

use halfspace::casebook::{self, PicardIterate, QPoly};
use halfspace::monofun::{is_superadditive, superadditive_envelope, uniform_grid};
use halfspace::scalar::{q, q_to_f64, qc, QComplex};
use halfspace::spectral::{convolve, e1};
use halfspace::{AtomicSpectrum, ExpPoly, FreqPoint, MonotoneFn};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;

fn monotone() -> impl Strategy<Value = MonotoneFn> {
    (prop::collection::vec((0.01f64..2.0, 0.0f64..3.0), 1..6), 0.0f64..2.0).prop_map(|(steps, tail)| {
        let mut xs = vec![0.0];
        let mut ys = vec![0.0];
        for (dx, dy) in steps {
            xs.push(xs.last().unwrap() + dx);
            ys.push(ys.last().unwrap() + dy);
        }
        MonotoneFn::new(xs, ys, tail).unwrap()
    })
}

fn rat(span: i64) -> impl Strategy<Value = BigRational> {
    (-span..=span, 1i64..=4).prop_map(|(n, d)| q(n, d))
}

fn qcx() -> impl Strategy<Value = QComplex> {
    (rat(6), rat(6)).prop_map(|(a, b)| qc(a, b))
}

fn exppoly() -> impl Strategy<Value = ExpPoly<QComplex>> {
    prop::collection::vec((qcx(), 0u32..3, qcx()), 0..4)
        .prop_map(|ts| ts.into_iter().fold(ExpPoly::zero(), |acc, (r, m, c)| acc.add(&ExpPoly::term(r, m, c))))
}

// scalar spectra on ℚ², first coordinate in (0, 3]
fn spectrum() -> impl Strategy<Value = AtomicSpectrum<QComplex>> {
    prop::collection::vec(((1i64..=12, -2i64..=2), qcx()), 1..6).prop_map(|atoms| {
        let mut f = AtomicSpectrum::scalar(2);
        for ((x, y), c) in atoms {
            if !c.is_zero() {
                f.insert_scalar(FreqPoint::new(vec![q(x, 4), q(y, 1)]), c);
            }
        }
        if f.is_empty() {
            f.insert_scalar(FreqPoint::from_ints(&[1, 0]), qc(q(1, 1), q(0, 1)));
        }
        f
    })
}

fn burgers_table() -> &'static [QPoly] {
    static T: OnceLock<Vec<QPoly>> = OnceLock::new();
    T.get_or_init(|| casebook::burgers_un(24))
}

fn picard_table() -> &'static [PicardIterate] {
    static T: OnceLock<Vec<PicardIterate>> = OnceLock::new();
    T.get_or_init(|| casebook::ode_picard(9))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn monotone_sum_and_max_are_pointwise(f in monotone(), g in monotone(), xs in prop::collection::vec(0.0f64..15.0, 20)) {
        let s = f.sum(&g);
        let m = f.max(&g);
        for &x in &xs {
            prop_assert!(close(s.at(x), f.at(x) + g.at(x)));
            prop_assert!(close(m.at(x), f.at(x).max(g.at(x))));
        }
    }

    #[test]
    fn monotone_ops_stay_monotone(f in monotone(), g in monotone(), c in 0.0f64..5.0) {
        let grid = uniform_grid(0.0, 15.0, 301);
        for h in [f.sum(&g), f.max(&g), f.scale(c), f.with_breakpoints(&[0.3, 1.7, 4.1])] {
            prop_assert!(grid.windows(2).all(|w| h.at(w[0]) <= h.at(w[1])));
        }
        let extra = f.with_breakpoints(&[0.3, 1.7, 4.1]);
        prop_assert!(grid.iter().all(|&x| close(extra.at(x), f.at(x))));
    }

    #[test]
    fn envelope_is_superadditive(samples in prop::collection::vec((0.05f64..5.0, 0.0f64..4.0), 1..8)) {
        let env = superadditive_envelope(&samples).unwrap();
        prop_assert!(is_superadditive(&env, &uniform_grid(0.0, 6.0, 61), 1e-9).is_ok());
    }

    #[test]
    fn exppoly_ring_laws(a in exppoly(), b in exppoly(), c in exppoly()) {
        prop_assert_eq!(a.mul(&b), b.mul(&a));
        prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
        prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
        prop_assert!(a.sub(&a).is_zero());
    }

    #[test]
    fn exppoly_leibniz_and_shift(a in exppoly(), b in exppoly(), lam in qcx()) {
        prop_assert_eq!(a.mul(&b).derivative(), a.derivative().mul(&b).add(&a.mul(&b.derivative())));
        prop_assert_eq!(a.shift_rate(&lam), a.mul(&ExpPoly::exp(lam)));
    }

    #[test]
    fn duhamel_solves_the_linear_ode(p in exppoly(), lam in qcx(), resonant in any::<bool>(), c in qcx()) {
        let p = if resonant { p.add(&ExpPoly::term(lam.clone(), 1, c)) } else { p };
        let int = p.duhamel(&lam);
        prop_assert_eq!(int.derivative(), int.scale(&lam).add(&p));
        prop_assert!(int.at_zero().is_zero());
    }

    #[test]
    fn convolution_levels_add(f in spectrum(), g in spectrum()) {
        let v = e1(2);
        let fg = convolve(&f, &g).unwrap();
        let add = |a: Option<BigRational>, b: Option<BigRational>| a.zip(b).map(|(x, y)| x + y);
        prop_assert_eq!(fg.min_level(&v), add(f.min_level(&v), g.min_level(&v)));
        prop_assert_eq!(fg.max_level(&v), add(f.max_level(&v), g.max_level(&v)));
    }

    #[test]
    fn truncation_commutes_with_convolution(f in spectrum(), g in spectrum(), lam in 1i64..=16) {
        let v = e1(2);
        let lam = q(lam, 4);
        let full = convolve(&f, &g).unwrap().truncate(&v, &lam);
        let cut = convolve(&f.truncate(&v, &lam), &g.truncate(&v, &lam)).unwrap().truncate(&v, &lam);
        prop_assert_eq!(full, cut);
    }

    #[test]
    fn cosine_ratio_law(k in 1usize..300) {
        let cs = casebook::cosine_coefficients(k + 1);
        let want = BigRational::new(BigInt::from(2 * k + 1), BigInt::from(2 * k + 2));
        prop_assert_eq!(&cs[k] / &cs[k - 1], want);
    }

    #[test]
    fn burgers_un_between_bounds(j in 1i64..=500) {
        // fixed-point evaluation; plain f64 cancels badly for small t
        let t = q(j, 100);
        let ln_low = (-(-2.0 * q_to_f64(&t)).exp_m1()).ln();
        for (i, l) in casebook::ln_un_at(burgers_table(), &t).into_iter().enumerate() {
            prop_assert!(l.is_finite() && l <= 1e-12, "ln U_{}({}) = {}", i + 1, t, l);
            prop_assert!(l >= i as f64 * ln_low - 1e-9);
        }
    }

    #[test]
    fn picard_pattern_and_prefix(n in 1usize..=9) {
        let seq = picard_table();
        prop_assert!(seq[n].pattern_holds());
        // v_n and v_{n−1} agree below degree n
        for k in 0..n {
            prop_assert_eq!(seq[n].coeff(k), seq[n - 1].coeff(k));
        }
    }
}
