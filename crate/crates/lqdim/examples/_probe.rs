use lqdim::intersect::fiber_report;
use lqdim::scalar::{big_rat, Scalar};

fn main() {
    let cases: Vec<(u32, Vec<u32>, u32, Scalar, &str)> = vec![
        (3, vec![0, 2], 9, Scalar::Float(2f64.sqrt()), "sqrt2 n9"),
        (3, vec![0, 2], 8, Scalar::Float(2f64.sqrt()), "sqrt2 n8"),
        (3, vec![0, 2], 7, Scalar::Float(2f64.sqrt()), "sqrt2 n7"),
        (3, vec![0, 2], 7, Scalar::Float(std::f64::consts::PI / 2.0), "pi/2 n7"),
        (3, vec![0, 2], 8, Scalar::Float(std::f64::consts::PI / 2.0), "pi/2 n8"),
        (4, vec![0, 3], 6, Scalar::Float(2f64.sqrt()), "p4 sqrt2 n6"),
        (4, vec![0, 3], 7, Scalar::Float(2f64.sqrt()), "p4 sqrt2 n7"),
        (3, vec![0, 2], 6, Scalar::quadratic(big_rat(0,1), big_rat(1,2), 5).unwrap(), "sqrt5/2 n6"),
        (3, vec![0, 2], 8, Scalar::quadratic(big_rat(0,1), big_rat(1,2), 5).unwrap(), "sqrt5/2 n8"),
        (3, vec![0, 2], 9, Scalar::quadratic(big_rat(0,1), big_rat(1,2), 5).unwrap(), "sqrt5/2 n9"),
        (3, vec![0, 2], 8, Scalar::quadratic(big_rat(0,1), big_rat(1,1), 2).unwrap(), "sqrt2exact n8"),
    ];
    for (p, d, n, t, label) in cases {
        let rep = fiber_report(p, &d, n, &t, 0.0, None).unwrap();
        println!(
            "{label}: N={} alpha={:.4} shat={:.4} C={:.3}",
            rep.fiber_count, rep.alpha_hat, rep.s_hat, rep.c_measured
        );
    }
}
