use robust_tpp::em::{fit, fit_unweighted, FitConfig};
use robust_tpp::eval::{purity, tpr_tnr};
use robust_tpp::intensity::BasisSpec;
use robust_tpp::simulate::{paper_design, ContaminationType, DesignKind, PaperDesign};

fn main() {
    let base: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7000);
    let reps: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    for ctype in [ContaminationType::Omission, ContaminationType::Commission] {
        let (mut rp, mut sp, mut tp, mut tn, mut rhos) =
            (vec![], vec![], vec![], vec![], vec![]);
        for rep in 0..reps {
            let design = PaperDesign {
                kind: DesignKind::Nhpp,
                periods: 2,
                eta: 0.2,
                ctype: Some(ctype),
                n_per_class: 30,
                seed: base + rep,
            };
            let data = paper_design(&design).unwrap();
            let horizon = design.horizon();
            let truth: Vec<usize> = data.iter().map(|s| s.true_label.unwrap()).collect();
            let basis = BasisSpec::gaussian(6, &horizon).unwrap();
            let mut cfg = FitConfig::new(4, basis, horizon);
            cfg.seed = base + rep + 1;
            cfg.max_iter = 500;
            let robust = fit(&data, &cfg).unwrap();
            rp.push(purity(&robust.responsibilities.hard_labels(), &truth).unwrap());
            let standard = fit_unweighted(&data, &cfg).unwrap();
            sp.push(purity(&standard.responsibilities.hard_labels(), &truth).unwrap());
            let rates = tpr_tnr(&robust, &data, &horizon, 0.6).unwrap();
            tp.push(rates.mean_tpr);
            tn.push(rates.mean_tnr);
            rhos.push(robust.state.rho.rho2);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        println!(
            "{:?}: robust={:.4} {:?} standard={:.4}",
            ctype,
            mean(&rp),
            rp.iter().map(|p| (p * 100.0).round() / 100.0).collect::<Vec<_>>(),
            mean(&sp)
        );
        println!(
            "   TPR={:.4} TNR={:.4} rho={:?}",
            mean(&tp),
            mean(&tn),
            rhos
        );
    }
}
