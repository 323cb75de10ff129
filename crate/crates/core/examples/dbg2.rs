use robust_tpp::em::{fit, FitConfig};
use robust_tpp::eval::purity;
use robust_tpp::intensity::{BasisSpec, SequenceDesign};
use robust_tpp::simulate::{paper_design, ContaminationType, DesignKind, PaperDesign};

fn main() {
    for seed in [7001u64, 7002, 7003] {
        let design = PaperDesign {
            kind: DesignKind::Nhpp,
            periods: 2,
            eta: 0.2,
            ctype: Some(ContaminationType::Omission),
            n_per_class: 30,
            seed,
        };
        let data = paper_design(&design).unwrap();
        let horizon = design.horizon();
        let basis = BasisSpec::gaussian(6, &horizon).unwrap();
        let mut cfg = FitConfig::new(4, basis.clone(), horizon);
        cfg.seed = seed + 1;
        cfg.max_iter = 300;
        let out = fit(&data, &cfg).unwrap();
        let labels = out.responsibilities.hard_labels();
        let truth: Vec<usize> = data.iter().map(|s| s.true_label.unwrap()).collect();
        let pur = purity(&labels, &truth).unwrap();
        println!(
            "seed={seed} purity={pur:.3} rho={:.2} pi={:?}",
            out.state.rho.rho2,
            out.state.pi.iter().map(|p| (p * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
        // miss census
        let mut missed_len = 0.0;
        let mut total_len = 0.0;
        let mut census: Vec<(f64, f64, usize)> = Vec::new(); // (comp, winlen, ndel-ish)
        for (n, seq) in data.iter().enumerate() {
            let wins = seq.contamination_windows.as_ref().unwrap();
            let kk = labels[n];
            let w = out.weight_tables[n].class_row(kk);
            let edges = &out.interval_edges[n];
            let design_n = SequenceDesign::build(&basis, &horizon, seq).unwrap();
            let comps = design_n.compensators(&out.state.params[kk].coeffs);
            for i in 0..w.len() {
                let (a, b) = (edges[i], edges[i + 1]);
                let ov: f64 = wins.iter().map(|(s, e)| (b.min(*e) - a.max(*s)).max(0.0)).sum();
                total_len += ov;
                if w[i] >= 0.6 && ov > 0.01 {
                    missed_len += ov;
                    census.push((comps[i], b - a, (truth[n] == kk) as usize));
                }
            }
        }
        println!(
            "  missed {:.1}% of contaminated length; {} miss intervals; sample (comp, gap_len, correct): {:?}",
            100.0 * missed_len / total_len,
            census.len(),
            census.iter().take(12).map(|(c, l, ok)| ((10.0*c).round()/10.0, (10.0*l).round()/10.0, *ok)).collect::<Vec<_>>()
        );
    }
}
