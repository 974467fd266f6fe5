use equibundle::expr::{eval_ast, parse};
use equibundle::linalg::{eigen_dense, numeric_rank, solve_least_squares};
use equibundle::{split_spectrum, track_matrix_loop, DMatrix, DVector, Tolerances, TrackOptions};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn low_rank() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..7, 1usize..7, 1usize..5)
        .prop_flat_map(|(r, c, k)| (matrix(r, k), matrix(k, c)))
        .prop_map(|(a, b)| a * b)
}

fn orthogonal(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(n, n).prop_map(move |m| (m + DMatrix::identity(n, n) * 0.1).qr().q())
}

proptest! {
    #[test]
    fn rank_of_transpose(m in low_rank()) {
        let a = numeric_rank(&m, None).unwrap().rank;
        let b = numeric_rank(&m.transpose(), None).unwrap().rank;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn least_squares_round_trip(
        (a, x) in (1usize..6, 0usize..4).prop_flat_map(|(n, extra)| (matrix(n + extra, n), prop::collection::vec(-2.0f64..2.0, n)))
    ) {
        let n = a.ncols();
        let mut a = a;
        for i in 0..n {
            a[(i, i)] += 3.0;
        }
        let x = DVector::from_vec(x);
        let b = &a * &x;
        let got = solve_least_squares(&a, &b).unwrap();
        prop_assert!((got - x).amax() < 1e-9);
    }

    #[test]
    fn eigenvalue_product_is_determinant(m in matrix(4, 4)) {
        let eig = eigen_dense(&m).unwrap();
        let prod = eig.iter().fold(nalgebra::Complex::new(1.0, 0.0), |acc, z| acc * z);
        let det = m.determinant();
        prop_assert!((prod.re - det).abs() < 1e-8 && prod.im.abs() < 1e-8, "{prod} vs {det}");
    }

    #[test]
    fn eigenvalues_come_in_conjugate_pairs(m in matrix(5, 5)) {
        let eig = eigen_dense(&m).unwrap();
        for z in &eig {
            let partner = eig.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(partner < 1e-9, "{z} has no conjugate partner");
        }
    }

    #[test]
    fn split_is_stable_under_small_perturbations(
        q in orthogonal(4),
        k in 1usize..3,
        d in prop::collection::vec(0.5f64..3.0, 4),
        signs in prop::collection::vec(any::<bool>(), 4),
        noise in matrix(4, 4),
    ) {
        let mut diag = DVector::zeros(4);
        for i in k..4 {
            diag[i] = if signs[i] { d[i] } else { -d[i] };
        }
        let j = &q * DMatrix::from_diagonal(&diag) * q.transpose();
        let tols = Tolerances::default();
        let tol = equibundle::zero_tolerance(&j, &tols);
        let s = split_spectrum(&j, k, tol, tols.gap_min).unwrap();
        prop_assert!(s.reliable);
        let mut want: Vec<f64> = diag.iter().skip(k).copied().collect();
        want.sort_by(f64::total_cmp);
        let mut got: Vec<f64> = s.nonzeros.iter().map(|z| z.re).collect();
        got.sort_by(f64::total_cmp);
        for (a, b) in want.iter().zip(&got) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let jp = &j + noise * 1e-12;
        let sp = split_spectrum(&jp, k, tol, tols.gap_min).unwrap();
        prop_assert_eq!(sp.zeros.len(), k);
        prop_assert!(sp.reliable);
        let mut moved: Vec<f64> = sp.nonzeros.iter().map(|z| z.re).collect();
        moved.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&moved) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn winding_sum_matches_product_winding(
        a in matrix(3, 3),
        b in matrix(3, 3),
        c in matrix(3, 3),
        shift in 1.5f64..3.0,
    ) {
        // Real loops have real determinants, so the windings must cancel.
        let base = a + DMatrix::identity(3, 3) * shift;
        let samples = 128;
        let js: Vec<DMatrix<f64>> = (0..=samples)
            .map(|i| {
                let s = 2.0 * std::f64::consts::PI * (i % samples) as f64 / samples as f64;
                &base + &b * s.cos() + &c * s.sin()
            })
            .collect();
        if let Ok(r) = track_matrix_loop(&js, 0, &TrackOptions::default(), &Tolerances::default()) {
            let sum: i64 = r.windings.iter().sum();
            prop_assert_eq!(sum, r.product_winding);
            prop_assert_eq!(sum, 0);
            prop_assert!(!r.flags.iter().any(|f| f.contains("winding sum")));
            let mut seen = r.permutation.clone();
            seen.sort_unstable();
            prop_assert_eq!(seen, vec![0, 1, 2]);
        }
    }
}

/// Independent expression tree used to drive the parser.
#[derive(Debug, Clone)]
enum Tree {
    Num(f64),
    X(usize),
    L(usize),
    Neg(Box<Tree>),
    Bin(char, Box<Tree>, Box<Tree>),
    Pow(Box<Tree>, u8),
    Call(&'static str, Box<Tree>),
}

fn tree() -> impl Strategy<Value = Tree> {
    let leaf = prop_oneof![
        (-5.0f64..5.0).prop_map(|v| Tree::Num((v * 100.0).round() / 100.0)),
        (0usize..3).prop_map(Tree::X),
        (0usize..2).prop_map(Tree::L),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|t| Tree::Neg(Box::new(t))),
            (
                prop::sample::select(vec!['+', '-', '*', '/']),
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, l, r)| Tree::Bin(op, Box::new(l), Box::new(r))),
            (inner.clone(), 0u8..4).prop_map(|(b, e)| Tree::Pow(Box::new(b), e)),
            (
                prop::sample::select(vec!["sin", "cos", "exp", "log", "sqrt", "abs"]),
                inner
            )
                .prop_map(|(f, a)| Tree::Call(f, Box::new(a))),
        ]
    })
}

fn render(t: &Tree) -> String {
    match t {
        Tree::Num(v) if *v < 0.0 => format!("(0 - {})", -v),
        Tree::Num(v) => format!("{v}"),
        Tree::X(i) => format!("x{}", i + 1),
        Tree::L(i) => format!("l{}", i + 1),
        Tree::Neg(a) => format!("-({})", render(a)),
        Tree::Bin(op, l, r) => format!("({}) {op} ({})", render(l), render(r)),
        Tree::Pow(b, e) => format!("({})^{e}", render(b)),
        Tree::Call(f, a) => format!("{f}({})", render(a)),
    }
}

fn reference(t: &Tree, x: &[f64], l: &[f64]) -> Option<f64> {
    let v = match t {
        Tree::Num(v) if *v < 0.0 => 0.0 - (-v),
        Tree::Num(v) => *v,
        Tree::X(i) => x[*i],
        Tree::L(i) => l[*i],
        Tree::Neg(a) => -reference(a, x, l)?,
        Tree::Bin(op, a, b) => {
            let (a, b) = (reference(a, x, l)?, reference(b, x, l)?);
            match op {
                '+' => a + b,
                '-' => a - b,
                '*' => a * b,
                _ if b == 0.0 => return None,
                _ => a / b,
            }
        }
        Tree::Pow(b, e) => {
            let b = reference(b, x, l)?;
            if b == 0.0 && *e == 0 {
                1.0
            } else {
                b.powi(*e as i32)
            }
        }
        Tree::Call(f, a) => {
            let a = reference(a, x, l)?;
            match *f {
                "sin" => a.sin(),
                "cos" => a.cos(),
                "exp" => a.exp(),
                "abs" => a.abs(),
                "log" if a <= 0.0 => return None,
                "log" => a.ln(),
                "sqrt" if a < 0.0 => return None,
                _ => a.sqrt(),
            }
        }
    };
    v.is_finite().then_some(v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn evaluator_matches_reference(
        t in tree(),
        x in prop::collection::vec(-3.0f64..3.0, 3),
        l in prop::collection::vec(0.0f64..2.0, 2),
    ) {
        let src = render(&t);
        let e = parse(&src, 3, 2).unwrap();
        match (eval_ast(&e, &l, &x), reference(&t, &x, &l)) {
            (Ok(a), Some(b)) => prop_assert_eq!(a.to_bits(), b.to_bits(), "{} at x={:?} l={:?}", src, x, l),
            (Err(_), None) => {}
            (a, b) => prop_assert!(false, "{}: evaluator {:?}, reference {:?}", src, a, b),
        }
    }

    #[test]
    fn print_parse_is_idempotent(t in tree()) {
        let e = parse(&render(&t), 3, 2).unwrap();
        let printed = e.to_string();
        let again = parse(&printed, 3, 2).unwrap();
        prop_assert_eq!(&again, &e);
        prop_assert_eq!(again.to_string(), printed);
    }
}
