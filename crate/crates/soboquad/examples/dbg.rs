use nalgebra::DVector;
use soboquad::kkt::{eta_from_weights, KktFactor};
use soboquad::problems::rosenbrock;
use soboquad::quadratic::SobolevWeights;
use soboquad::set::InterpolationSet;
use soboquad::update::solve_rhs;

fn main() {
    let pts = vec![
        DVector::from_vec(vec![0.0, 0.0]),
        DVector::from_vec(vec![3f64.sqrt() / 2.0, 0.5]),
        DVector::from_vec(vec![-(3f64.sqrt()) / 2.0, 0.5]),
        DVector::from_vec(vec![0.0, -1.0]),
    ];
    let fv: Vec<f64> = pts.iter().map(rosenbrock).collect();
    println!("fvals: {:?}", fv);
    let base = DVector::zeros(2);
    let set = InterpolationSet::new(pts.clone(), fv.clone(), base.clone()).unwrap();

    let fac = KktFactor::assemble_frobenius(&set).unwrap();
    let sol = solve_rhs(&fac, &fv).unwrap();
    let gd = sol.hess.to_dense();
    println!(
        "FROB: c={:.6} g=({:.6},{:.6}) G=[[{:.6},{:.6}],[.,{:.6}]]",
        sol.c, sol.g[0], sol.g[1], gd[(0, 0)], gd[(0, 1)], gd[(1, 1)]
    );
    let m = sol.into_model(base.clone());
    let gdm = m.hess.to_dense();
    let xs = gdm.lu().solve(&(-m.gradient(&base))).unwrap();
    println!(
        "  min=({:.4},{:.4}) rosen={:.4}",
        xs[0],
        xs[1],
        rosenbrock(&xs)
    );

    for r in 1..=10 {
        let eta = eta_from_weights(&SobolevWeights::thirds(), r as f64, 2);
        let fac = KktFactor::assemble(&set, eta).unwrap();
        let sol = solve_rhs(&fac, &fv).unwrap();
        let gd = sol.hess.to_dense();
        let m = sol.clone().into_model(base.clone());
        let gdm = m.hess.to_dense();
        let xs = gdm.lu().solve(&(-m.gradient(&base))).unwrap();
        println!(
            "H2 r={r:2}: c={:.4} g=({:.4},{:.4}) G=[[{:.4},{:.4}],[.,{:.4}]] min=({:.4},{:.4}) rosen={:.4}",
            sol.c, sol.g[0], sol.g[1], gd[(0, 0)], gd[(0, 1)], gd[(1, 1)],
            xs[0], xs[1], rosenbrock(&xs)
        );
    }
}
